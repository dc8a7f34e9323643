//! Empirical Bayesian Hessian J_n and Fisher matrix I_n at the posterior mode.
//!
//! Both are built from the per-observation terms log g(yᵢ|θ) + (1/n) log π(θ):
//!
//! ```text
//! J_n = −(1/n) Σᵢ ∂²[log g(yᵢ|θ) + (1/n) log π(θ)] / ∂θ∂θ′
//! I_n =  (1/(n−1)) Σᵢ sᵢ sᵢ′,   sᵢ = ∂[log g(yᵢ|θ) + (1/n) log π(θ)] / ∂θ
//! ```
//!
//! `FisherScaling::N` switches the I_n prefactor to 1/n.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{grad_fd, hess_fd, hess_fd_from_grad, term_value, DiffConfig};
use crate::error::{Error, Result};
use crate::model::{term_grad, term_hess, Model, ObservationSet, ParameterVector};

/// Largest accepted condition number of J_n.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FisherScaling {
    /// 1/(n−1), used by PAIC.
    NMinusOne,
    /// 1/n, used by BPIC.
    N,
}

#[derive(Debug, Clone)]
pub struct InfoMatrixPair {
    pub j_n: DMatrix<f64>,
    pub i_n: DMatrix<f64>,
    pub theta_hat: ParameterVector,
    pub cond_j: f64,
    pub scaling: FisherScaling,
}

#[derive(Debug, Clone)]
pub struct TraceCorrection {
    /// tr{J_n⁻¹ I_n}
    pub value: f64,
    /// Eigenvalues of J_n⁻¹ I_n (they sum to `value`).
    pub eigenvalues: Vec<f64>,
    pub cond_j: f64,
}

fn per_term_hessian<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64], i: usize) -> Result<DMatrix<f64>> {
    if let Some(h) = term_hess(model, data, theta, i) {
        return Ok(h);
    }
    let cfg = DiffConfig::default();
    let res = if term_grad(model, data, theta, i).is_some() {
        hess_fd_from_grad(|x| term_grad(model, data, x, i).expect("analytic gradient"), theta, &cfg)
    } else {
        hess_fd(|x| term_value(model, data, x, i), theta, &cfg)
    };
    res.map_err(|_| Error::NonFiniteHessian { index: i })
}

fn per_term_score<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64], i: usize) -> Result<DVector<f64>> {
    if let Some(g) = term_grad(model, data, theta, i) {
        return Ok(g);
    }
    grad_fd(|x| term_value(model, data, x, i), theta, &DiffConfig::default())
        .map_err(|_| Error::NonFiniteTerm { index: i })
}

/// J_n(θ̂), symmetrized.
pub fn compute_jn<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta_hat: &[f64]) -> Result<DMatrix<f64>> {
    let p = model.dim();
    let n = data.n() as f64;
    let mut sum = DMatrix::zeros(p, p);
    for i in data.active() {
        let h = per_term_hessian(model, data, theta_hat, i)?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteHessian { index: i });
        }
        sum += h;
    }
    let j = -sum / n;
    Ok((&j + j.transpose()) * 0.5)
}

/// I_n(θ̂) with the requested prefactor. Needs n ≥ 2.
pub fn compute_in<M: Model + ?Sized>(
    model: &M,
    data: &ObservationSet,
    theta_hat: &[f64],
    scaling: FisherScaling,
) -> Result<DMatrix<f64>> {
    let n = data.n();
    if n < 2 {
        return Err(Error::Invalid("I_n needs at least two observations".into()));
    }
    let p = model.dim();
    let mut sum = DMatrix::zeros(p, p);
    for i in data.active() {
        let s = per_term_score(model, data, theta_hat, i)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteTerm { index: i });
        }
        sum.ger(1.0, &s, &s, 1.0);
    }
    let denom = match scaling {
        FisherScaling::NMinusOne => (n - 1) as f64,
        FisherScaling::N => n as f64,
    };
    Ok(sum / denom)
}

/// Condition number of a symmetric matrix, refusing non-positive-definite input.
pub fn condition_number(j: &DMatrix<f64>) -> Result<f64> {
    let eig = j.clone().symmetric_eigenvalues();
    let min = eig.min();
    let max = eig.max();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { eigenvalues: eig.iter().copied().collect() });
    }
    Ok(max / min)
}

pub fn info_pair<M: Model + ?Sized>(
    model: &M,
    data: &ObservationSet,
    theta_hat: &ParameterVector,
    scaling: FisherScaling,
) -> Result<InfoMatrixPair> {
    let j_n = compute_jn(model, data, theta_hat.as_slice())?;
    let i_n = compute_in(model, data, theta_hat.as_slice(), scaling)?;
    let cond_j = condition_number(&j_n)?;
    Ok(InfoMatrixPair { j_n, i_n, theta_hat: theta_hat.clone(), cond_j, scaling })
}

impl InfoMatrixPair {
    /// Builds a pair from given matrices, e.g. for tests.
    pub fn from_matrices(j_n: DMatrix<f64>, i_n: DMatrix<f64>, theta_hat: ParameterVector) -> Result<Self> {
        if j_n.shape() != i_n.shape() || j_n.nrows() != theta_hat.len() {
            return Err(Error::Invalid("matrix dimensions do not match".into()));
        }
        let cond_j = condition_number(&j_n)?;
        Ok(Self { j_n, i_n, theta_hat, cond_j, scaling: FisherScaling::NMinusOne })
    }

    pub fn dim(&self) -> usize {
        self.j_n.nrows()
    }

    /// Writes J_n then I_n as CSV blocks (`matrix,row,col,value`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io { path: path.display().to_string(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(f, "matrix,row,col,value").map_err(io)?;
        for (name, m) in [("J_n", &self.j_n), ("I_n", &self.i_n)] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    writeln!(f, "{name},{r},{c},{:.16e}", m[(r, c)]).map_err(io)?;
                }
            }
        }
        f.flush().map_err(io)
    }
}

/// tr{J_n⁻¹ I_n} via a Cholesky solve of J_n X = I_n.
pub fn trace_correction(pair: &InfoMatrixPair) -> Result<TraceCorrection> {
    if !(pair.cond_j <= MAX_CONDITION) {
        return Err(Error::IllConditioned { cond: pair.cond_j });
    }
    let chol = pair.j_n.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        eigenvalues: pair.j_n.clone().symmetric_eigenvalues().iter().copied().collect(),
    })?;
    let x = chol.solve(&pair.i_n);
    let value = x.trace();
    // L⁻¹ I L⁻ᵀ is similar to J⁻¹ I and symmetric
    let l = chol.l();
    let li = l.solve_lower_triangular(&pair.i_n).expect("triangular");
    let sym = l.solve_lower_triangular(&li.transpose()).expect("triangular");
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(TraceCorrection { value, eigenvalues, cond_j: pair.cond_j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConjugateNormalModel, ModelDefinition};
    use crate::optimize::posterior_mode;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normal_jn_values() {
        let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
        let d = ObservationSet::continuous((0..10).map(|i| i as f64 * 0.3).collect()).unwrap();
        let j = compute_jn(&m, &d, &[0.7]).unwrap();
        assert!((j[(0, 0)] - 1.00001).abs() < 1e-14);
        let flat = ConjugateNormalModel::flat(2.0).unwrap();
        assert_eq!(compute_jn(&flat, &d, &[0.7]).unwrap()[(0, 0)], 0.5);
    }

    #[test]
    fn normal_in_matches_closed_form() {
        let (mu0, tau02, s2a) = (0.4, 2.0, 1.5);
        let m = ConjugateNormalModel::new(s2a, mu0, tau02).unwrap();
        let y = [0.3, -1.2, 2.5, 0.8, 1.1];
        let d = ObservationSet::continuous(y.to_vec()).unwrap();
        let (mu, _) = m.conjugate_posterior(&d);
        let n = y.len() as f64;
        let expected: f64 = y.iter().map(|yi| ((mu0 - mu) / (n * tau02) + (yi - mu) / s2a).powi(2)).sum::<f64>() / (n - 1.0);
        let i = compute_in(&m, &d, &[mu], FisherScaling::NMinusOne).unwrap();
        assert!((i[(0, 0)] - expected).abs() < 1e-13);
        let i_n = compute_in(&m, &d, &[mu], FisherScaling::N).unwrap();
        assert!((i_n[(0, 0)] - expected * (n - 1.0) / n).abs() < 1e-13);
    }

    #[test]
    fn repeated_observation_has_zero_fisher() {
        let m = ConjugateNormalModel::flat(1.0).unwrap();
        let d = ObservationSet::continuous(vec![2.5; 6]).unwrap();
        let i = compute_in(&m, &d, &[2.5], FisherScaling::NMinusOne).unwrap();
        assert_eq!(i[(0, 0)], 0.0);
    }

    #[test]
    fn trace_examples() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let pair = InfoMatrixPair::from_matrices(j.clone(), j, pv(&[0.0, 0.0])).unwrap();
        assert!((trace_correction(&pair).unwrap().value - 2.0).abs() < 1e-12);

        let pair = InfoMatrixPair::from_matrices(
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0])),
            DMatrix::identity(2, 2),
            pv(&[0.0, 0.0]),
        )
        .unwrap();
        let t = trace_correction(&pair).unwrap();
        assert!((t.value - 0.75).abs() < 1e-15);
        assert!((t.eigenvalues[0] - 0.5).abs() < 1e-15 && (t.eigenvalues[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ill_conditioned_refused() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        let pair = InfoMatrixPair::from_matrices(j, DMatrix::identity(2, 2), pv(&[0.0, 0.0])).unwrap();
        assert!(matches!(trace_correction(&pair), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn prior_constant_shift_is_invisible() {
        let base = ConjugateNormalModel::new(1.0, 0.5, 0.7).unwrap();
        let shifted = ModelDefinition::new(
            "shifted",
            1,
            move |d, th, i| base.loglik_i(d, th, i),
            move |th| base.logprior(th) + 123.456,
            true,
        )
        .unwrap();
        let d = ObservationSet::continuous(vec![0.2, 1.4, -0.3, 0.9]).unwrap();
        let th = posterior_mode(&base, &d, &[0.0]).unwrap().theta_hat;
        let a = info_pair(&base, &d, &th, FisherScaling::NMinusOne).unwrap();
        let b = info_pair(&shifted, &d, &th, FisherScaling::NMinusOne).unwrap();
        assert!((a.j_n[(0, 0)] - b.j_n[(0, 0)]).abs() < 1e-6);
        assert!((a.i_n[(0, 0)] - b.i_n[(0, 0)]).abs() < 1e-6);
        let ta = trace_correction(&a).unwrap().value;
        let tb = trace_correction(&b).unwrap().value;
        assert!((ta - tb).abs() < 1e-6 * ta.abs().max(1.0));
    }
}
