//! Model abstraction: per-observation log-likelihood, log-prior, optional
//! analytic derivatives and parameter support.

mod data;
mod definition;
mod hier_logit;
mod normal;

pub use data::ObservationSet;
pub use definition::ModelDefinition;
pub use hier_logit::{HierLogitModel, Hyperprior};
pub use normal::{ConjugateNormalModel, NormalPrior};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parameter vector θ of the owning model's dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    /// Fails if any entry is non-finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("parameter coordinate {j} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Open-interval support of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Real,
    /// (lower, +inf)
    Above(f64),
}

impl Bound {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Bound::Real => x.is_finite(),
            Bound::Above(lo) => x.is_finite() && x > lo,
        }
    }
}

/// A Bayesian model: observation density g(yᵢ|θ) and prior π(θ).
///
/// Derivative hooks return `None` when the model has no closed form; callers
/// then fall back to finite differences.
pub trait Model: Sync {
    fn name(&self) -> &str;

    /// Dimension p of θ.
    fn dim(&self) -> usize;

    fn support(&self) -> Vec<Bound>;

    /// Checks that `data` is shaped correctly for this model.
    fn validate(&self, data: &ObservationSet) -> Result<()>;

    /// log g(yᵢ|θ) for observation index `i`.
    fn loglik_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> f64;

    /// log π(θ), possibly only up to an additive constant.
    fn logprior(&self, theta: &[f64]) -> f64;

    fn prior_proper(&self) -> bool;

    fn loglik_grad_i(&self, _data: &ObservationSet, _theta: &[f64], _i: usize) -> Option<DVector<f64>> {
        None
    }

    fn loglik_hess_i(&self, _data: &ObservationSet, _theta: &[f64], _i: usize) -> Option<DMatrix<f64>> {
        None
    }

    fn logprior_grad(&self, _theta: &[f64]) -> Option<DVector<f64>> {
        None
    }

    fn logprior_hess(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Data-driven starting point for mode search.
    fn initial_point(&self, data: &ObservationSet) -> Vec<f64>;

    fn in_support(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && self.support().iter().zip(theta).all(|(b, &x)| b.contains(x))
    }

    fn has_analytic_derivatives(&self) -> bool {
        false
    }
}

fn check_theta<M: Model + ?Sized>(model: &M, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::Invalid(format!(
            "parameter has length {} but model `{}` has dimension {}",
            theta.len(),
            model.name(),
            model.dim()
        )));
    }
    for (coord, (b, &value)) in model.support().iter().zip(theta).enumerate() {
        if !b.contains(value) {
            return Err(Error::OutOfSupport { coord, value });
        }
    }
    Ok(())
}

/// L(θ|y) = Σᵢ log g(yᵢ|θ) over the active observations.
pub fn loglik_total<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Result<f64> {
    check_theta(model, theta)?;
    let mut total = 0.0;
    for i in data.active() {
        let v = model.loglik_i(data, theta, i);
        if !v.is_finite() {
            return Err(Error::NonFiniteTerm { index: i });
        }
        total += v;
    }
    Ok(total)
}

/// log{L(θ|y)π(θ)}.
pub fn logpost_unnorm<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Result<f64> {
    let ll = loglik_total(model, data, theta)?;
    let lp = model.logprior(theta);
    if !lp.is_finite() {
        return Err(Error::Invalid("log prior is not finite".into()));
    }
    Ok(ll + lp)
}

/// Analytic gradient of log g(yᵢ|θ) + (1/n) log π(θ), if the model has one.
pub fn term_grad<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64], i: usize) -> Option<DVector<f64>> {
    let n = data.n() as f64;
    let g = model.loglik_grad_i(data, theta, i)?;
    let gp = model.logprior_grad(theta)?;
    Some(g + gp / n)
}

/// Analytic Hessian of log g(yᵢ|θ) + (1/n) log π(θ), if the model has one.
pub fn term_hess<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64], i: usize) -> Option<DMatrix<f64>> {
    let n = data.n() as f64;
    let h = model.loglik_hess_i(data, theta, i)?;
    let hp = model.logprior_hess(theta)?;
    Some(h + hp / n)
}

/// Analytic gradient of the log unnormalized posterior.
pub fn logpost_grad<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Option<DVector<f64>> {
    let mut g = model.logprior_grad(theta)?;
    for i in data.active() {
        g += model.loglik_grad_i(data, theta, i)?;
    }
    Some(g)
}

/// Analytic Hessian of the log unnormalized posterior.
pub fn logpost_hess<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Option<DMatrix<f64>> {
    let mut h = model.logprior_hess(theta)?;
    for i in data.active() {
        h += model.loglik_hess_i(data, theta, i)?;
    }
    Some(h)
}

/// Numerically stable log(1 + eˣ).
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub(crate) fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn ln_choose(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}
