//! Closed-form per-observation bias estimators for the conjugate normal model.
//!
//! These evaluate the estimators directly from (μ̂, σ̂²) and the data, and
//! serve as the reference for the generic machinery.

use serde::Serialize;

use crate::model::{ConjugateNormalModel, ObservationSet};

/// Per-observation estimates of E(η̂ − η).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormBias {
    pub paic: f64,
    pub bpic: f64,
    pub waic2: f64,
    pub popt: f64,
    pub cv: f64,
}

pub(crate) fn popt_bias(model: &ConjugateNormalModel, n: usize) -> f64 {
    1.0 / (model.prior_precision() + (n as f64 - 1.0) / model.sigma_a2) / model.sigma_a2
}

pub fn closed_form_bias_estimators(model: &ConjugateNormalModel, data: &ObservationSet) -> ClosedFormBias {
    let n = data.n();
    let nf = n as f64;
    let s2a = model.sigma_a2;
    let (mu, s2) = model.conjugate_posterior(data);
    let prior_prec = model.prior_precision();
    let mu0 = model.mu0();

    // prior part of each score: (μ₀ − μ̂)/(nτ₀²)
    let prior_score = (mu0 - mu) * prior_prec / nf;
    let score_ss: f64 = data
        .active()
        .map(|i| (prior_score + (data.y(i) - mu) / s2a).powi(2))
        .sum();
    let resid_ss: f64 = data.active().map(|i| (data.y(i) - mu).powi(2)).sum();

    let paic = s2 * score_ss / (nf - 1.0);
    let bpic = s2 * score_ss / nf;
    let waic2 = s2 / (s2a * s2a) * (nf * s2 / 2.0 + resid_ss) / nf;
    let popt = popt_bias(model, n);

    // leave-one-out posteriors
    let fold_prec = prior_prec + (nf - 1.0) / s2a;
    let fold_var = 1.0 / fold_prec;
    let total = data.active_sum();
    let loo_ss: f64 = data
        .active()
        .map(|i| {
            let yi = data.y(i);
            let fold_mu = (mu0 * prior_prec + (total - yi) / s2a) / fold_prec;
            (yi - fold_mu).powi(2)
        })
        .sum();
    let cv = (loo_ss / nf + fold_var - resid_ss / nf - s2) / (2.0 * s2a);

    ClosedFormBias { paic, bpic, waic2, popt, cv }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn popt_examples() {
        let flat = ConjugateNormalModel::flat(1.0).unwrap();
        assert!((popt_bias(&flat, 11) - 0.1).abs() < 1e-15);
        let m = ConjugateNormalModel::new(1.0, 0.0, 0.25).unwrap();
        assert!((popt_bias(&m, 5) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn bpic_to_paic_ratio() {
        let m = ConjugateNormalModel::new(2.25, 0.3, 0.25).unwrap();
        let d = ObservationSet::continuous(vec![0.4, -1.3, 2.2, 0.0, 0.9, 1.7, -0.6]).unwrap();
        let b = closed_form_bias_estimators(&m, &d);
        assert!((b.bpic / b.paic - 6.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn constant_data_flat_prior() {
        let m = ConjugateNormalModel::flat(1.0).unwrap();
        let d = ObservationSet::continuous(vec![1.5; 8]).unwrap();
        assert_eq!(closed_form_bias_estimators(&m, &d).paic, 0.0);
    }

    #[test]
    fn waic2_matches_direct_variance_sum() {
        // Var_μ[(y−μ)²/(2σ_A²)] with μ ~ N(μ̂, σ̂²) is (σ̂⁴/2 + d²σ̂²)/σ_A⁴
        let m = ConjugateNormalModel::new(0.25, 0.0, 1e4).unwrap();
        let y = [0.2, -0.5, 1.1, 0.3];
        let d = ObservationSet::continuous(y.to_vec()).unwrap();
        let (mu, s2) = m.conjugate_posterior(&d);
        let direct: f64 = y.iter().map(|yi| (s2 * s2 / 2.0 + (yi - mu).powi(2) * s2) / (0.25 * 0.25)).sum();
        let b = closed_form_bias_estimators(&m, &d);
        assert!((b.waic2 * 4.0 - direct).abs() < 1e-12 * direct);
    }
}
