use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Bound, Model, ObservationSet};
use crate::error::{Error, Result};

/// Prior on the mean μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NormalPrior {
    /// π(μ) ∝ 1, represented as log π ≡ 0.
    Flat,
    Normal { mu0: f64, tau02: f64 },
}

/// yᵢ ~ N(μ, σ_A²) with σ_A² known and a normal or flat prior on μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateNormalModel {
    pub sigma_a2: f64,
    pub prior: NormalPrior,
}

impl ConjugateNormalModel {
    pub fn new(sigma_a2: f64, mu0: f64, tau02: f64) -> Result<Self> {
        if !(sigma_a2 > 0.0 && sigma_a2.is_finite()) {
            return Err(Error::Invalid(format!("sigma_A^2 must be positive, got {sigma_a2}")));
        }
        if !(tau02 > 0.0) || !mu0.is_finite() {
            return Err(Error::Invalid(format!("tau_0^2 must be positive, got {tau02}")));
        }
        // tau02 = +inf is the flat limit
        let prior = if tau02.is_infinite() {
            NormalPrior::Flat
        } else {
            NormalPrior::Normal { mu0, tau02 }
        };
        Ok(Self { sigma_a2, prior })
    }

    pub fn flat(sigma_a2: f64) -> Result<Self> {
        Self::new(sigma_a2, 0.0, f64::INFINITY)
    }

    /// Prior precision 1/τ₀² (zero when flat).
    pub fn prior_precision(&self) -> f64 {
        match self.prior {
            NormalPrior::Flat => 0.0,
            NormalPrior::Normal { tau02, .. } => 1.0 / tau02,
        }
    }

    pub fn mu0(&self) -> f64 {
        match self.prior {
            NormalPrior::Flat => 0.0,
            NormalPrior::Normal { mu0, .. } => mu0,
        }
    }

    /// Exact posterior N(μ̂, σ̂²) given the active observations.
    pub fn conjugate_posterior(&self, data: &ObservationSet) -> (f64, f64) {
        let n = data.n() as f64;
        let prec = self.prior_precision() + n / self.sigma_a2;
        let mu_hat = (self.mu0() * self.prior_precision() + data.active_sum() / self.sigma_a2) / prec;
        (mu_hat, 1.0 / prec)
    }
}

impl Model for ConjugateNormalModel {
    fn name(&self) -> &str {
        match self.prior {
            NormalPrior::Flat => "normal-flat",
            NormalPrior::Normal { .. } => "normal",
        }
    }

    fn dim(&self) -> usize {
        1
    }

    fn support(&self) -> Vec<Bound> {
        vec![Bound::Real]
    }

    fn validate(&self, data: &ObservationSet) -> Result<()> {
        if data.trials().is_some() {
            return Err(Error::Invalid("normal model does not take trial sizes".into()));
        }
        Ok(())
    }

    fn loglik_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> f64 {
        let r = data.y(i) - theta[0];
        -0.5 * (2.0 * PI * self.sigma_a2).ln() - r * r / (2.0 * self.sigma_a2)
    }

    fn logprior(&self, theta: &[f64]) -> f64 {
        match self.prior {
            NormalPrior::Flat => 0.0,
            NormalPrior::Normal { mu0, tau02 } => {
                let r = theta[0] - mu0;
                -0.5 * (2.0 * PI * tau02).ln() - r * r / (2.0 * tau02)
            }
        }
    }

    fn prior_proper(&self) -> bool {
        matches!(self.prior, NormalPrior::Normal { .. })
    }

    fn loglik_grad_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, (data.y(i) - theta[0]) / self.sigma_a2))
    }

    fn loglik_hess_i(&self, _data: &ObservationSet, _theta: &[f64], _i: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, -1.0 / self.sigma_a2))
    }

    fn logprior_grad(&self, theta: &[f64]) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, (self.mu0() - theta[0]) * self.prior_precision()))
    }

    fn logprior_hess(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, -self.prior_precision()))
    }

    fn initial_point(&self, data: &ObservationSet) -> Vec<f64> {
        vec![data.active_sum() / data.n() as f64]
    }

    fn has_analytic_derivatives(&self) -> bool {
        true
    }
}
