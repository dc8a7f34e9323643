use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{PosteriorDraws, PosteriorSampler, SampleKey, SamplerOutput};
use crate::error::Result;
use crate::model::{ConjugateNormalModel, ObservationSet};

/// S iid draws from the exact posterior N(μ̂, σ̂²).
pub fn sample_conjugate_normal(model: &ConjugateNormalModel, data: &ObservationSet, draws: usize, key: SampleKey) -> Result<PosteriorDraws> {
    let (mu, s2) = model.conjugate_posterior(data);
    let sd = s2.sqrt();
    let mut rng = key.chain_rng(0);
    let values: Vec<f64> = (0..draws.max(1)).map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let s = values.len();
    PosteriorDraws::new(values, 1, vec![0; s], 0, key.seed)
}

/// Exact sampler for [`ConjugateNormalModel`].
///
/// With `closed_form_loo` set, leave-one-out fold terms use the Gaussian
/// fold posterior directly instead of averaging over draws.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConjugateNormalSampler {
    pub draws: usize,
    pub closed_form_loo: bool,
}

impl Default for ConjugateNormalSampler {
    fn default() -> Self {
        Self { draws: 4000, closed_form_loo: true }
    }
}

impl PosteriorSampler<ConjugateNormalModel> for ConjugateNormalSampler {
    fn sample(&self, model: &ConjugateNormalModel, data: &ObservationSet, key: SampleKey) -> Result<SamplerOutput> {
        Ok(SamplerOutput { draws: sample_conjugate_normal(model, data, self.draws, key)?, diagnostics: None, converged: true })
    }

    fn exact_expected_loglik(&self, model: &ConjugateNormalModel, data: &ObservationSet, target: usize) -> Option<f64> {
        if !self.closed_form_loo {
            return None;
        }
        let (mu, s2) = model.conjugate_posterior(data);
        let r = data.y(target) - mu;
        Some(-0.5 * (2.0 * PI * model.sigma_a2).ln() - (r * r + s2) / (2.0 * model.sigma_a2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_posterior() {
        let m = ConjugateNormalModel::flat(1.0).unwrap();
        let d = ObservationSet::continuous(vec![1.0, 2.0, 3.0]).unwrap();
        let s = 100_000;
        let draws = sample_conjugate_normal(&m, &d, s, SampleKey::new(42)).unwrap();
        let x = draws.coordinate(0);
        let mean = x.iter().sum::<f64>() / s as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s as f64 - 1.0);
        let s2 = 1.0 / 3.0;
        assert!((mean - 2.0).abs() <= 3.0 * (s2 / s as f64).sqrt());
        // sd of the sample variance is σ²·sqrt(2/(S−1))
        assert!((var - s2).abs() <= 3.0 * s2 * (2.0 / (s as f64 - 1.0)).sqrt());
    }

    #[test]
    fn seed_determinism() {
        let m = ConjugateNormalModel::new(1.0, 0.0, 4.0).unwrap();
        let d = ObservationSet::continuous(vec![0.3, -0.2]).unwrap();
        let a = sample_conjugate_normal(&m, &d, 500, SampleKey::new(7)).unwrap();
        let b = sample_conjugate_normal(&m, &d, 500, SampleKey::new(7)).unwrap();
        let c = sample_conjugate_normal(&m, &d, 500, SampleKey::new(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
