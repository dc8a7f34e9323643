use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{inv_logit, ln_choose, softplus, Bound, Model, ObservationSet};
use crate::error::{Error, Result};

/// Hyperprior N(μ; mean, var) · Scaled-Inv-χ²(τ²; ν, s²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperprior {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub nu: f64,
    pub s2: f64,
}

impl Default for Hyperprior {
    fn default() -> Self {
        Self { mu_mean: 0.0, mu_var: 1000.0 * 1000.0, nu: 0.1, s2: 10.0 }
    }
}

impl Hyperprior {
    /// log density of the scaled inverse chi-squared distribution.
    pub fn log_scaled_inv_chi2(&self, tau2: f64) -> f64 {
        let h = self.nu / 2.0;
        h * h.ln() - ln_gamma(h) + h * self.s2.ln() - (h + 1.0) * tau2.ln() - self.nu * self.s2 / (2.0 * tau2)
    }
}

/// Binomial counts with logit random effects:
/// yᵢ ~ Bin(nᵢ, logit⁻¹(βᵢ)), βᵢ ~ N(μ, τ²), θ = (β₁..β_N, μ, τ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierLogitModel {
    pub groups: usize,
    pub hyper: Hyperprior,
}

impl HierLogitModel {
    pub fn new(groups: usize, hyper: Hyperprior) -> Result<Self> {
        if groups < 2 {
            return Err(Error::Invalid("hierarchical model needs at least two groups".into()));
        }
        if !(hyper.mu_var > 0.0 && hyper.nu > 0.0 && hyper.s2 > 0.0) {
            return Err(Error::Invalid("hyperprior variances and scales must be positive".into()));
        }
        Ok(Self { groups, hyper })
    }

    pub fn mu_index(&self) -> usize {
        self.groups
    }

    pub fn tau2_index(&self) -> usize {
        self.groups + 1
    }

    fn trials<'a>(&self, data: &'a ObservationSet) -> &'a [u64] {
        data.trials().expect("validated binomial data")
    }
}

impl Model for HierLogitModel {
    fn name(&self) -> &str {
        "hier-logit"
    }

    fn dim(&self) -> usize {
        self.groups + 2
    }

    fn support(&self) -> Vec<Bound> {
        let mut s = vec![Bound::Real; self.groups + 1];
        s.push(Bound::Above(0.0));
        s
    }

    fn validate(&self, data: &ObservationSet) -> Result<()> {
        if data.trials().is_none() {
            return Err(Error::Invalid("hier-logit model needs an `n_trials` column".into()));
        }
        if data.len_all() != self.groups {
            return Err(Error::Invalid(format!(
                "model has {} groups but data has {} rows",
                self.groups,
                data.len_all()
            )));
        }
        Ok(())
    }

    fn loglik_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> f64 {
        let n = self.trials(data)[i];
        let y = data.y(i);
        ln_choose(n, y as u64) + y * theta[i] - n as f64 * softplus(theta[i])
    }

    fn logprior(&self, theta: &[f64]) -> f64 {
        let mu = theta[self.mu_index()];
        let tau2 = theta[self.tau2_index()];
        if !(tau2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        let h = &self.hyper;
        let re: f64 = theta[..self.groups]
            .iter()
            .map(|b| -0.5 * (2.0 * PI * tau2).ln() - (b - mu).powi(2) / (2.0 * tau2))
            .sum();
        let mu_term = -0.5 * (2.0 * PI * h.mu_var).ln() - (mu - h.mu_mean).powi(2) / (2.0 * h.mu_var);
        re + mu_term + h.log_scaled_inv_chi2(tau2)
    }

    fn prior_proper(&self) -> bool {
        true
    }

    fn loglik_grad_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> Option<DVector<f64>> {
        let n = self.trials(data)[i] as f64;
        let mut g = DVector::zeros(self.dim());
        g[i] = data.y(i) - n * inv_logit(theta[i]);
        Some(g)
    }

    fn loglik_hess_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> Option<DMatrix<f64>> {
        let n = self.trials(data)[i] as f64;
        let xi = inv_logit(theta[i]);
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        h[(i, i)] = -n * xi * (1.0 - xi);
        Some(h)
    }

    fn logprior_grad(&self, theta: &[f64]) -> Option<DVector<f64>> {
        let (m, t) = (self.mu_index(), self.tau2_index());
        let (mu, tau2) = (theta[m], theta[t]);
        let h = &self.hyper;
        let k = self.groups as f64;
        let mut g = DVector::zeros(self.dim());
        let mut sum_dev = 0.0;
        let mut ss = 0.0;
        for (i, b) in theta[..self.groups].iter().enumerate() {
            let d = b - mu;
            g[i] = -d / tau2;
            sum_dev += d;
            ss += d * d;
        }
        g[m] = sum_dev / tau2 - (mu - h.mu_mean) / h.mu_var;
        g[t] = -k / (2.0 * tau2) + ss / (2.0 * tau2 * tau2) - (h.nu / 2.0 + 1.0) / tau2
            + h.nu * h.s2 / (2.0 * tau2 * tau2);
        Some(g)
    }

    fn logprior_hess(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let (m, t) = (self.mu_index(), self.tau2_index());
        let (mu, tau2) = (theta[m], theta[t]);
        let h = &self.hyper;
        let k = self.groups as f64;
        let (t2, t3) = (tau2 * tau2, tau2 * tau2 * tau2);
        let mut hm = DMatrix::zeros(self.dim(), self.dim());
        let mut sum_dev = 0.0;
        let mut ss = 0.0;
        for (i, b) in theta[..self.groups].iter().enumerate() {
            let d = b - mu;
            hm[(i, i)] = -1.0 / tau2;
            hm[(i, m)] = 1.0 / tau2;
            hm[(m, i)] = 1.0 / tau2;
            hm[(i, t)] = d / t2;
            hm[(t, i)] = d / t2;
            sum_dev += d;
            ss += d * d;
        }
        hm[(m, m)] = -k / tau2 - 1.0 / h.mu_var;
        hm[(m, t)] = -sum_dev / t2;
        hm[(t, m)] = -sum_dev / t2;
        hm[(t, t)] = k / (2.0 * t2) - ss / t3 + (h.nu / 2.0 + 1.0) / t2 - h.nu * h.s2 / t3;
        Some(hm)
    }

    /// Empirical logits with a +0.5/+1 continuity correction.
    fn initial_point(&self, data: &ObservationSet) -> Vec<f64> {
        let trials = self.trials(data);
        let mut theta: Vec<f64> = (0..self.groups)
            .map(|i| {
                let p = (data.y(i) + 0.5) / (trials[i] as f64 + 1.0);
                (p / (1.0 - p)).ln()
            })
            .collect();
        let k = self.groups as f64;
        let active: Vec<usize> = data.active().collect();
        let mean = active.iter().map(|&i| theta[i]).sum::<f64>() / active.len() as f64;
        let var = active.iter().map(|&i| (theta[i] - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        if let Some(o) = data.omitted() {
            theta[o] = mean;
        }
        theta.push(mean);
        theta.push(var.max(0.1));
        theta
    }

    fn has_analytic_derivatives(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{loglik_total, logpost_unnorm};

    fn model(n: usize) -> HierLogitModel {
        HierLogitModel::new(n, Hyperprior::default()).unwrap()
    }

    // C(50,25) = 126410606437752
    const LN_C_50_25: f64 = 32.470_556_505_811_99;

    #[test]
    fn loglik_at_even_odds() {
        let m = model(3);
        let d = ObservationSet::binomial(vec![25; 3], vec![50; 3]).unwrap();
        let theta = [0.0, 0.0, 0.0, 0.0, 1.0];
        let term = 126_410_606_437_752f64.ln() + 50.0 * 0.5f64.ln();
        assert!((LN_C_50_25 - 126_410_606_437_752f64.ln()).abs() < 1e-9);
        for i in 0..3 {
            assert!((m.loglik_i(&d, &theta, i) - term).abs() < 1e-10);
        }
        assert!((loglik_total(&m, &d, &theta).unwrap() - 3.0 * term).abs() < 1e-9);
    }

    #[test]
    fn logpost_at_reference_point() {
        // β = 0, μ = 0, τ² = 10 with 4 groups of 25/50
        let m = model(4);
        let d = ObservationSet::binomial(vec![25; 4], vec![50; 4]).unwrap();
        let theta = [0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        let binom = 4.0 * (LN_C_50_25 + 50.0 * 0.5f64.ln());
        let re = 4.0 * (-0.5 * (2.0 * PI * 10.0).ln());
        let mu = -0.5 * (2.0 * PI * 1e6).ln();
        // Scaled-Inv-χ²(10; 0.1, 10): (0.05)^0.05/Γ(0.05) · 10^0.05 · 10^-1.05 · exp(-0.1·10/20)
        let inv = 0.05 * 0.05f64.ln() - 2.968_879_201_051_731 + 0.05 * 10f64.ln() - 1.05 * 10f64.ln() - 0.05;
        let expected = binom + re + mu + inv;
        // scipy: binom.logpmf + norm.logpdf + invgamma.logpdf(10, 0.05, scale=0.5)
        assert!((expected + 30.326_079_127_458_197).abs() < 1e-9);
        assert!((logpost_unnorm(&m, &d, &theta).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn rejects_mismatched_data() {
        let m = model(3);
        let d = ObservationSet::binomial(vec![1, 2], vec![5, 5]).unwrap();
        assert!(m.validate(&d).is_err());
        assert!(m.validate(&ObservationSet::continuous(vec![1.0, 2.0, 3.0]).unwrap()).is_err());
        assert!(logpost_unnorm(&m, &ObservationSet::binomial(vec![1, 2, 3], vec![5; 3]).unwrap(), &[0.0, 0.0, 0.0, 0.0, -1.0]).is_err());
    }

    #[test]
    fn loglik_permutation_invariant() {
        let m = model(4);
        let y = vec![3, 10, 25, 49];
        let n = vec![50, 20, 30, 50];
        let theta = vec![-2.0, 0.5, 1.0, 3.0, 0.2, 1.3];
        let d = ObservationSet::binomial(y.clone(), n.clone()).unwrap();
        let perm = [2, 0, 3, 1];
        let dp = ObservationSet::binomial(perm.iter().map(|&i| y[i]).collect(), perm.iter().map(|&i| n[i]).collect()).unwrap();
        let mut tp: Vec<f64> = perm.iter().map(|&i| theta[i]).collect();
        tp.extend_from_slice(&theta[4..]);
        let a = logpost_unnorm(&m, &d, &theta).unwrap();
        let b = logpost_unnorm(&m, &dp, &tp).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let m = model(2);
        let d = ObservationSet::binomial(vec![0, 50], vec![50, 50]).unwrap();
        let theta = [-800.0, 800.0, 0.0, 1.0];
        assert!(m.loglik_i(&d, &theta, 0).is_finite());
        assert!(m.loglik_i(&d, &theta, 1).is_finite());
        let g = m.loglik_grad_i(&d, &theta, 0).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
