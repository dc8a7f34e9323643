//! Hierarchical logit study: binomial counts with normal random effects on
//! the logit scale, fitted by MCMC. The true discrepancy η is evaluated
//! against fresh replicate counts drawn from the true success probabilities.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{aggregate, CellInfo, EstimateRecord, ExperimentResult};
use crate::criteria::{bpic, bpic_bias_per_obs, loo_exact, paic, pointwise_loglik, waic2};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::info::{info_pair, FisherScaling};
use crate::mcmc::{HierLogitSampler, PosteriorDraws, PosteriorSampler, SampleKey};
use crate::model::{inv_logit, ln_choose, HierLogitModel, Hyperprior, Model, ObservationSet};
use crate::optimize::{find_mode, ModeConfig};
use crate::rng::{Purpose, StreamId};

/// How η is evaluated from the fitted posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaOracle {
    /// Sum over the finite support {0..nᵢ} of each group.
    Exact,
    /// Average over `draws` replicate data sets.
    MonteCarlo { draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitExperimentConfig {
    pub groups: usize,
    pub trials: u64,
    pub mu_t: f64,
    pub tau_t: f64,
    pub hyper: Hyperprior,
    pub replications: usize,
    pub oracle: EtaOracle,
    pub sampler: HierLogitSampler,
    /// Exact leave-one-out refits (one sampler run per group).
    pub loo: bool,
    /// Largest tolerated fraction of excluded replications.
    pub max_failure_fraction: f64,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for LogitExperimentConfig {
    fn default() -> Self {
        Self {
            groups: 15,
            trials: 50,
            mu_t: 0.0,
            tau_t: 1.0,
            hyper: Hyperprior::default(),
            replications: 100,
            oracle: EtaOracle::Exact,
            sampler: HierLogitSampler::default(),
            loo: true,
            max_failure_fraction: 0.05,
            seed: 1,
            execution: Execution::Parallel,
        }
    }
}

impl LogitExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.groups < 2 || self.trials < 1 || self.replications == 0 {
            return Err(Error::Invalid("need at least 2 groups, 1 trial and 1 replication".into()));
        }
        if let EtaOracle::MonteCarlo { draws } = self.oracle {
            if draws < 100 {
                return Err(Error::Invalid("Monte Carlo oracle needs at least 100 draws".into()));
            }
        }
        if !(self.tau_t > 0.0) {
            return Err(Error::Invalid("tau_t must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaEstimate {
    pub eta: f64,
    /// Monte Carlo standard error; `None` for the exact oracle.
    pub mc_se: Option<f64>,
}

/// Draws true logits and counts for one replication.
pub fn simulate_logit_data(cfg: &LogitExperimentConfig, rng: &mut impl Rng) -> Result<(Vec<f64>, ObservationSet)> {
    let beta: Vec<f64> = (0..cfg.groups)
        .map(|_| cfg.mu_t + cfg.tau_t * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut y = Vec::with_capacity(cfg.groups);
    for b in &beta {
        let dist = Binomial::new(cfg.trials, inv_logit(*b)).map_err(|e| Error::Invalid(e.to_string()))?;
        y.push(dist.sample(rng));
    }
    Ok((beta, ObservationSet::binomial(y, vec![cfg.trials; cfg.groups])?))
}

fn binomial_ln_pmf(z: u64, n: u64, beta: f64) -> f64 {
    // log ξ = −softplus(−β), log(1−ξ) = −softplus(β)
    ln_choose(n, z) - z as f64 * crate::model::softplus(-beta) - (n - z) as f64 * crate::model::softplus(beta)
}

/// η = (1/N) Σᵢ E_z E_{θ|y} log g(z|θ) with z ~ Bin(nᵢ, logit⁻¹ βᵢ).
///
/// The posterior mean of log g(z|θ) is tabulated for every z in {0..nᵢ};
/// the exact oracle weights the table by the true pmf, the Monte Carlo
/// oracle indexes it with sampled replicate counts.
pub fn estimate_true_eta_logit(
    model: &HierLogitModel,
    data: &ObservationSet,
    draws: &PosteriorDraws,
    beta_true: &[f64],
    oracle: EtaOracle,
    rng: &mut impl Rng,
) -> Result<EtaEstimate> {
    model.validate(data)?;
    if beta_true.len() != model.groups {
        return Err(Error::Invalid("true logits do not match the number of groups".into()));
    }
    let trials = data.trials().expect("validated");
    let mut tables = Vec::with_capacity(model.groups);
    for (i, &n) in trials.iter().enumerate() {
        let mut t = Vec::with_capacity(n as usize + 1);
        for z in 0..=n {
            let d = data.with_value(i, z as f64);
            let mean = draws.rows().map(|th| model.loglik_i(&d, th, i)).sum::<f64>() / draws.len() as f64;
            if !mean.is_finite() {
                return Err(Error::NonFiniteTerm { index: i });
            }
            t.push(mean);
        }
        tables.push(t);
    }
    let k = model.groups as f64;
    match oracle {
        EtaOracle::Exact => {
            let total: f64 = tables
                .iter()
                .zip(trials)
                .zip(beta_true)
                .map(|((t, &n), &b)| (0..=n).map(|z| binomial_ln_pmf(z, n, b).exp() * t[z as usize]).sum::<f64>())
                .sum();
            Ok(EtaEstimate { eta: total / k, mc_se: None })
        }
        EtaOracle::MonteCarlo { draws: j } => {
            let dists: Vec<Binomial> = trials
                .iter()
                .zip(beta_true)
                .map(|(&n, &b)| Binomial::new(n, inv_logit(b)).map_err(|e| Error::Invalid(e.to_string())))
                .collect::<Result<_>>()?;
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..j {
                let v: f64 = dists.iter().zip(&tables).map(|(d, t)| t[d.sample(rng) as usize]).sum::<f64>() / k;
                sum += v;
                sum2 += v * v;
            }
            let jf = j as f64;
            let mean = sum / jf;
            let var = ((sum2 - jf * mean * mean) / (jf - 1.0)).max(0.0);
            Ok(EtaEstimate { eta: mean, mc_se: Some((var / jf).sqrt()) })
        }
    }
}

enum Outcome {
    Done(Vec<EstimateRecord>, Vec<String>),
    Failed,
}

/// Runs the replicated study. Replications whose posterior fails the
/// convergence gate twice (the second time with doubled budget) are
/// excluded; more than `max_failure_fraction` exclusions abort the run.
pub fn run_logit_experiment(cfg: &LogitExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let model = HierLogitModel::new(cfg.groups, cfg.hyper)?;
    let outcomes = cfg.execution.map(cfg.replications, |r| replicate(cfg, &model, r));
    let mut records = Vec::new();
    let mut failed = Vec::new();
    let mut warnings = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o? {
            Outcome::Done(recs, w) => {
                records.extend(recs);
                warnings.extend(w.into_iter().map(|m| format!("replication {r}: {m}")));
            }
            Outcome::Failed => failed.push((0, r)),
        }
    }
    if failed.len() as f64 > cfg.max_failure_fraction * cfg.replications as f64 {
        return Err(Error::TooManyFailures { failed: failed.len(), total: cfg.replications });
    }
    if !failed.is_empty() {
        warnings.push(format!("{} replication(s) excluded after sampler non-convergence", failed.len()));
    }
    warnings.push(format!("bias and errors are per group (divided by N = {})", cfg.groups));
    let aggregates = aggregate(&records);
    Ok(ExperimentResult {
        study: "logit".into(),
        seed: cfg.seed,
        cells: vec![CellInfo {
            index: 0,
            n: cfg.groups,
            prior: format!("mu~N({},{}), tau2~ScaledInvChi2({},{})", cfg.hyper.mu_mean, cfg.hyper.mu_var, cfg.hyper.nu, cfg.hyper.s2),
            sigma_a2: None,
            expected_bias: None,
        }],
        records,
        aggregates,
        failed_replications: failed,
        warnings,
    })
}

fn replicate(cfg: &LogitExperimentConfig, model: &HierLogitModel, r: usize) -> Result<Outcome> {
    let id = StreamId::new(0, r as u64);
    let (beta_true, data) = simulate_logit_data(cfg, &mut id.rng(cfg.seed, Purpose::Data))?;
    let key = SampleKey::with_id(cfg.seed, id);
    let sampler = HierLogitSampler { execution: Execution::Sequential, ..cfg.sampler };

    let mut warnings = Vec::new();
    let mut out = sampler.sample(model, &data, key)?;
    if !out.converged {
        let bigger = HierLogitSampler {
            draws_per_chain: 2 * sampler.draws_per_chain,
            warmup: 2 * sampler.warmup,
            ..sampler
        };
        out = bigger.sample(model, &data, key)?;
        if !out.converged {
            return Ok(Outcome::Failed);
        }
        warnings.push("converged only after doubling the sampler budget".to_string());
    }
    let draws = out.draws;
    let n = data.n() as f64;

    let pw = pointwise_loglik(model, &data, &draws, Execution::Sequential)?;
    let mode = find_mode(model, &data, &ModeConfig::default())?;
    let p_report = paic(&pw, &info_pair(model, &data, &mode.theta_hat, FisherScaling::NMinusOne)?)?;
    let b_report = bpic(model, &data, &draws, &mode, &info_pair(model, &data, &mode.theta_hat, FisherScaling::N)?)?;
    let w_report = waic2(&pw)?;

    let mut est = vec![
        ("paic", p_report.penalty / n),
        ("bpic", bpic_bias_per_obs(&b_report, &pw)),
        ("waic2", w_report.penalty / n),
    ];
    if cfg.loo {
        let loo = loo_exact(model, &data, &sampler, key, Some(&pw), Execution::Sequential)?;
        if !loo.flagged.is_empty() {
            warnings.push(format!("{} LOO fold(s) failed the convergence gate", loo.flagged.len()));
        }
        est.push(("cv", loo.report.penalty / n));
    }

    let eta = estimate_true_eta_logit(model, &data, &draws, &beta_true, cfg.oracle, &mut id.rng(cfg.seed, Purpose::Oracle))?;
    let realized = pw.fit() / n - eta.eta;
    let records = est
        .into_iter()
        .map(|(name, e)| EstimateRecord {
            cell: 0,
            replication: r,
            estimator: name.to_string(),
            estimate: e,
            realized_bias: realized,
            error: realized - e,
        })
        .collect();
    Ok(Outcome::Done(records, warnings))
}
