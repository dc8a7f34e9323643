use thiserror::Error;

/// Errors raised by the criterion machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite log-density term at observation {index}")]
    NonFiniteTerm { index: usize },

    #[error("non-finite evaluation while differencing coordinate {coord} with step {step:e}")]
    NonFiniteDifference { coord: usize, step: f64 },

    #[error("non-finite Hessian contribution at observation {index}")]
    NonFiniteHessian { index: usize },

    #[error("parameter outside model support at coordinate {coord} (value {value})")]
    OutOfSupport { coord: usize, value: f64 },

    #[error("matrix is singular and ridge regularization did not help")]
    SingularHessian,

    #[error("matrix is not positive definite (eigenvalues {eigenvalues:?})")]
    NotPositiveDefinite { eigenvalues: Vec<f64> },

    #[error("J_n is ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("BPIC undefined under degenerate prior")]
    ImproperPrior,

    #[error("operation not supported for model `{0}`")]
    UnsupportedModel(String),

    #[error("sampler did not converge: max rhat {max_rhat:.4}, min ess {min_ess:.1}")]
    NonConvergence { max_rhat: f64, min_ess: f64 },

    #[error("too many failed replications: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
}

impl Error {
    /// True for failures caused by bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::UnsupportedModel(_)
                | Error::ImproperPrior
                | Error::OutOfSupport { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
