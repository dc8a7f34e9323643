//! Conjugate normal study: y ~ N(μ_T, σ_T²) fitted by N(μ, σ_A²), where all
//! bias estimators have closed forms.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{aggregate, CellInfo, EstimateRecord, ExperimentResult};
use crate::criteria::closed_form_bias_estimators;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::info::{info_pair, trace_correction, FisherScaling};
use crate::model::{ConjugateNormalModel, Model, ObservationSet};
use crate::optimize::{find_mode, ModeConfig};
use crate::rng::{Purpose, StreamId};

/// How the prior variance τ₀² is chosen for a given n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum TauRule {
    Fixed(f64),
    /// τ₀² = c / n
    PerN(f64),
    Flat,
}

impl TauRule {
    pub fn tau02(self, n: usize) -> f64 {
        match self {
            TauRule::Fixed(v) => v,
            TauRule::PerN(c) => c / n as f64,
            TauRule::Flat => f64::INFINITY,
        }
    }

    pub fn label(self) -> String {
        match self {
            TauRule::Fixed(v) => format!("tau02={v}"),
            TauRule::PerN(c) => format!("tau02={c}/n"),
            TauRule::Flat => "flat".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalExperimentConfig {
    pub mu_t: f64,
    pub sigma_t2: f64,
    pub sigma_a2: Vec<f64>,
    pub tau_rules: Vec<TauRule>,
    pub mu0: f64,
    pub n: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Also run the generic mode / J_n / I_n machinery per replication.
    pub generic: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for NormalExperimentConfig {
    fn default() -> Self {
        Self {
            mu_t: 0.0,
            sigma_t2: 1.0,
            sigma_a2: vec![1.0, 2.25, 0.25],
            tau_rules: vec![TauRule::Fixed(1e4), TauRule::PerN(1e4), TauRule::Fixed(0.25)],
            mu0: 0.0,
            n: vec![25, 50, 100, 200],
            replications: 2000,
            seed: 1,
            generic: true,
            execution: Execution::Parallel,
        }
    }
}

impl NormalExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Invalid("replications must be at least 1".into()));
        }
        if !(self.sigma_t2 > 0.0) || self.sigma_a2.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Invalid("variances must be positive".into()));
        }
        if self.n.iter().any(|&n| n < 2) {
            return Err(Error::Invalid("every n must be at least 2".into()));
        }
        for r in &self.tau_rules {
            if let TauRule::Fixed(v) | TauRule::PerN(v) = r {
                if !(*v > 0.0) {
                    return Err(Error::Invalid("tau_0^2 must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// b_μ = σ_T² σ̂² / σ_A⁴ with σ̂² = 1/(1/τ₀² + n/σ_A²).
pub fn true_bias_normal(sigma_t2: f64, n: usize, tau02: f64, sigma_a2: f64) -> f64 {
    let s2 = 1.0 / (1.0 / tau02 + n as f64 / sigma_a2);
    sigma_t2 * s2 / (sigma_a2 * sigma_a2)
}

/// (η̂, η) for one data set, both in closed form.
pub fn eta_normal(model: &ConjugateNormalModel, data: &ObservationSet, mu_t: f64, sigma_t2: f64) -> (f64, f64) {
    let (mu, s2) = model.conjugate_posterior(data);
    let c = -0.5 * (2.0 * PI * model.sigma_a2).ln();
    let n = data.n() as f64;
    let eta_hat = c - data.active().map(|i| (data.y(i) - mu).powi(2) + s2).sum::<f64>() / (n * 2.0 * model.sigma_a2);
    let eta = c - (sigma_t2 + (mu_t - mu).powi(2) + s2) / (2.0 * model.sigma_a2);
    (eta_hat, eta)
}

struct Cell {
    info: CellInfo,
    n_index: usize,
    model: ConjugateNormalModel,
}

/// Runs every (n, prior rule, σ_A²) cell for `cfg.replications` data sets.
///
/// Replication r of every cell with the same n sees the same data (common
/// random numbers): the data stream is keyed by (n index, r).
pub fn run_normal_bias_experiment(cfg: &NormalExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for (ni, &n) in cfg.n.iter().enumerate() {
        for rule in &cfg.tau_rules {
            for &sa2 in &cfg.sigma_a2 {
                let tau02 = rule.tau02(n);
                let model = ConjugateNormalModel::new(sa2, cfg.mu0, tau02)?;
                cells.push(Cell {
                    info: CellInfo {
                        index: cells.len(),
                        n,
                        prior: rule.label(),
                        sigma_a2: Some(sa2),
                        expected_bias: Some(true_bias_normal(cfg.sigma_t2, n, tau02, sa2)),
                    },
                    n_index: ni,
                    model,
                });
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let per_job: Vec<Result<Vec<EstimateRecord>>> = cfg.execution.map(jobs.len(), |k| {
        let (c, r) = jobs[k];
        replicate(cfg, &cells[c], r)
    });
    let mut records = Vec::with_capacity(jobs.len() * 7);
    for rs in per_job {
        records.extend(rs?);
    }
    let aggregates = aggregate(&records);
    Ok(ExperimentResult {
        study: "normal".into(),
        seed: cfg.seed,
        cells: cells.into_iter().map(|c| c.info).collect(),
        records,
        aggregates,
        failed_replications: Vec::new(),
        warnings: Vec::new(),
    })
}

fn replicate(cfg: &NormalExperimentConfig, cell: &Cell, r: usize) -> Result<Vec<EstimateRecord>> {
    let n = cell.info.n;
    let mut rng = StreamId::new(cell.n_index as u64, r as u64).rng(cfg.seed, Purpose::Data);
    let sd = cfg.sigma_t2.sqrt();
    let y: Vec<f64> = (0..n).map(|_| cfg.mu_t + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let data = ObservationSet::continuous(y)?;
    let model = &cell.model;

    let (eta_hat, eta) = eta_normal(model, &data, cfg.mu_t, cfg.sigma_t2);
    let realized = eta_hat - eta;
    let b = closed_form_bias_estimators(model, &data);

    let mut est: Vec<(&str, f64)> = vec![("paic", b.paic)];
    if model.prior_proper() {
        est.push(("bpic", b.bpic));
    }
    est.extend([("waic2", b.waic2), ("popt", b.popt), ("cv", b.cv)]);

    if cfg.generic {
        let mode = find_mode(model, &data, &ModeConfig { restarts: 1, ..Default::default() })?;
        let pair = info_pair(model, &data, &mode.theta_hat, FisherScaling::NMinusOne)?;
        est.push(("paic_generic", trace_correction(&pair)?.value / n as f64));
        if model.prior_proper() {
            let pair = info_pair(model, &data, &mode.theta_hat, FisherScaling::N)?;
            est.push(("bpic_generic", trace_correction(&pair)?.value / n as f64));
        }
    }

    Ok(est
        .into_iter()
        .map(|(name, e)| EstimateRecord {
            cell: cell.info.index,
            replication: r,
            estimator: name.to_string(),
            estimate: e,
            realized_bias: realized,
            error: realized - e,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_bias_examples() {
        assert!((true_bias_normal(1.0, 20, f64::INFINITY, 1.0) - 0.05).abs() < 1e-15);
        let s2 = 1.0 / (1e-4 + 100.0 / 2.25);
        assert!((true_bias_normal(1.0, 100, 1e4, 2.25) - s2 / 5.0625).abs() < 1e-15);
        assert!(true_bias_normal(1.0, 100, 1e-12, 1.0) < 1e-11);
    }

    #[test]
    fn smoke_run_one_record_per_cell() {
        let cfg = NormalExperimentConfig { replications: 1, n: vec![10, 20], ..Default::default() };
        let res = run_normal_bias_experiment(&cfg).unwrap();
        assert_eq!(res.cells.len(), 18);
        for c in &res.cells {
            assert_eq!(res.records_for(c.index, "paic").count(), 1);
        }
    }

    #[test]
    fn generic_matches_closed_form_in_every_replication() {
        let cfg = NormalExperimentConfig { replications: 20, n: vec![7, 40], ..Default::default() };
        let res = run_normal_bias_experiment(&cfg).unwrap();
        for c in &res.cells {
            let a: Vec<f64> = res.records_for(c.index, "paic").map(|r| r.estimate).collect();
            let b: Vec<f64> = res.records_for(c.index, "paic_generic").map(|r| r.estimate).collect();
            for (x, y) in a.iter().zip(&b) {
                assert!(((x - y) / x).abs() <= 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let base = NormalExperimentConfig { replications: 5, n: vec![10], ..Default::default() };
        let a = run_normal_bias_experiment(&NormalExperimentConfig { execution: Execution::Sequential, ..base.clone() }).unwrap();
        let b = run_normal_bias_experiment(&base).unwrap();
        assert_eq!(a, b);
    }
}
