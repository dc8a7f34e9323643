//! Metropolis-within-Gibbs for the hierarchical logit model.
//!
//! Each βᵢ gets a random-walk Metropolis update whose step size is tuned
//! toward 44% acceptance during warmup and frozen afterwards. μ and τ² are
//! drawn from their exact full conditionals. A held-out group (leave-one-out
//! fold) has no likelihood term, so its βᵢ is drawn directly from N(μ, τ²).

use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{Diagnostics, Gate, PosteriorDraws, PosteriorSampler, SampleKey, SamplerOutput};
use crate::error::Result;
use crate::exec::Execution;
use crate::model::{softplus, HierLogitModel, Model, ObservationSet};

const ADAPT_BATCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierLogitSampler {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub warmup: usize,
    pub target_accept: f64,
    pub gate: Gate,
    pub execution: Execution,
}

impl Default for HierLogitSampler {
    fn default() -> Self {
        Self {
            chains: 3,
            draws_per_chain: 5000,
            warmup: 2000,
            target_accept: 0.44,
            gate: Gate::default(),
            execution: Execution::Sequential,
        }
    }
}

struct ChainRun {
    values: Vec<f64>,
    accepted: Vec<usize>,
    steps_after_warmup: Vec<f64>,
    steps_at_end: Vec<f64>,
}

/// Output of [`sample_hier_logit`], including per-chain step sizes.
#[derive(Debug, Clone)]
pub struct HierLogitRun {
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    /// Per chain, the βᵢ proposal scales when warmup ended.
    pub steps_after_warmup: Vec<Vec<f64>>,
    /// Per chain, the βᵢ proposal scales after the final iteration.
    pub steps_at_end: Vec<Vec<f64>>,
}

fn beta_logdensity(y: f64, n: f64, beta: f64, mu: f64, tau2: f64) -> f64 {
    y * beta - n * softplus(beta) - (beta - mu).powi(2) / (2.0 * tau2)
}

fn run_chain(model: &HierLogitModel, data: &ObservationSet, cfg: &HierLogitSampler, mut rng: ChaCha8Rng) -> ChainRun {
    let k = model.groups;
    let h = model.hyper;
    let trials = data.trials().expect("validated binomial data");
    let omitted = data.omitted();

    // overdispersed start around the data-driven point
    let init = model.initial_point(data);
    let mut beta: Vec<f64> = init[..k].iter().map(|b| b + rng.sample::<f64, _>(StandardNormal)).collect();
    let mut mu = init[k] + rng.sample::<f64, _>(StandardNormal);
    let mut tau2 = init[k + 1] * (0.5 * rng.sample::<f64, _>(StandardNormal)).exp();

    let mut log_step: Vec<f64> = (0..k)
        .map(|i| {
            let n = trials[i] as f64;
            (2.4 / (0.25 * n + 1.0 / tau2).sqrt()).ln()
        })
        .collect();
    let mut batch_accept = vec![0usize; k];
    let mut accepted = vec![0usize; k];
    let mut values = Vec::with_capacity(cfg.draws_per_chain * (k + 2));
    let mut steps_after_warmup = Vec::new();

    let chi_shape = (h.nu + k as f64) / 2.0;
    let chi2 = Gamma::new(chi_shape, 2.0).expect("positive shape");

    for iter in 0..cfg.warmup + cfg.draws_per_chain {
        let warm = iter < cfg.warmup;
        let sd = tau2.sqrt();
        for i in 0..k {
            if Some(i) == omitted {
                beta[i] = mu + sd * rng.sample::<f64, _>(StandardNormal);
                continue;
            }
            let (y, n) = (data.y(i), trials[i] as f64);
            let prop = beta[i] + log_step[i].exp() * rng.sample::<f64, _>(StandardNormal);
            let log_ratio = beta_logdensity(y, n, prop, mu, tau2) - beta_logdensity(y, n, beta[i], mu, tau2);
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                beta[i] = prop;
                if warm {
                    batch_accept[i] += 1;
                } else {
                    accepted[i] += 1;
                }
            }
        }

        // μ | β, τ²
        let prec = k as f64 / tau2 + 1.0 / h.mu_var;
        let mean = (beta.iter().sum::<f64>() / tau2 + h.mu_mean / h.mu_var) / prec;
        mu = mean + rng.sample::<f64, _>(StandardNormal) / prec.sqrt();

        // τ² | β, μ ~ Scaled-Inv-χ²(ν + N, (νs² + SS)/(ν + N))
        let ss: f64 = beta.iter().map(|b| (b - mu).powi(2)).sum();
        let x: f64 = chi2.sample(&mut rng);
        tau2 = ((h.nu * h.s2 + ss) / x).max(f64::MIN_POSITIVE);

        if warm && (iter + 1) % ADAPT_BATCH == 0 {
            let batch = ((iter + 1) / ADAPT_BATCH) as f64;
            let delta = (1.0 / batch.sqrt()).min(0.1);
            for i in 0..k {
                let rate = batch_accept[i] as f64 / ADAPT_BATCH as f64;
                log_step[i] += if rate > cfg.target_accept { delta } else { -delta };
                batch_accept[i] = 0;
            }
        }
        if iter + 1 == cfg.warmup {
            steps_after_warmup = log_step.iter().map(|s| s.exp()).collect();
        }
        if !warm {
            values.extend_from_slice(&beta);
            values.push(mu);
            values.push(tau2);
        }
    }
    if cfg.warmup == 0 {
        steps_after_warmup = log_step.iter().map(|s| s.exp()).collect();
    }
    ChainRun {
        values,
        accepted,
        steps_after_warmup,
        steps_at_end: log_step.iter().map(|s| s.exp()).collect(),
    }
}

/// Runs `cfg.chains` chains and merges them in chain order.
pub fn sample_hier_logit(model: &HierLogitModel, data: &ObservationSet, cfg: &HierLogitSampler, key: SampleKey) -> Result<HierLogitRun> {
    model.validate(data)?;
    let runs = cfg.execution.map(cfg.chains.max(1), |c| run_chain(model, data, cfg, key.chain_rng(c)));
    let k = model.groups;
    let mut values = Vec::with_capacity(runs.len() * cfg.draws_per_chain * (k + 2));
    let mut chain_ids = Vec::with_capacity(runs.len() * cfg.draws_per_chain);
    let mut accepted = vec![0usize; k];
    for (c, r) in runs.iter().enumerate() {
        values.extend_from_slice(&r.values);
        chain_ids.extend(std::iter::repeat_n(c as u32, cfg.draws_per_chain));
        for (a, b) in accepted.iter_mut().zip(&r.accepted) {
            *a += b;
        }
    }
    let draws = PosteriorDraws::new(values, k + 2, chain_ids, cfg.warmup, key.seed)?;
    let total = (runs.len() * cfg.draws_per_chain).max(1) as f64;
    let mut accept_rate: Vec<f64> = accepted.iter().map(|&a| a as f64 / total).collect();
    if let Some(o) = data.omitted() {
        accept_rate[o] = 1.0;
    }
    accept_rate.extend([1.0, 1.0]);
    let diagnostics = Diagnostics::compute(&draws, accept_rate);
    Ok(HierLogitRun {
        draws,
        diagnostics,
        steps_after_warmup: runs.iter().map(|r| r.steps_after_warmup.clone()).collect(),
        steps_at_end: runs.iter().map(|r| r.steps_at_end.clone()).collect(),
    })
}

impl PosteriorSampler<HierLogitModel> for HierLogitSampler {
    fn sample(&self, model: &HierLogitModel, data: &ObservationSet, key: SampleKey) -> Result<SamplerOutput> {
        let run = sample_hier_logit(model, data, self, key)?;
        let converged = run.diagnostics.check(&self.gate).is_ok();
        Ok(SamplerOutput { draws: run.draws, diagnostics: Some(run.diagnostics), converged })
    }
}
