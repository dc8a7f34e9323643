//! Replicated simulation studies comparing bias-correction estimators.
//!
//! Each replication yields, per estimator, an estimate b̂ of the optimism of
//! the in-sample discrepancy η̂, together with the realized value η̂ − η.
//! The estimation error is (η̂ − η) − b̂.

mod logit;
mod normal;

pub use logit::{
    estimate_true_eta_logit, run_logit_experiment, simulate_logit_data, EtaEstimate, EtaOracle,
    LogitExperimentConfig,
};
pub use normal::{eta_normal, run_normal_bias_experiment, true_bias_normal, NormalExperimentConfig, TauRule};

use serde::{Deserialize, Serialize};

/// One simulation cell (a point of the scenario grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub index: usize,
    pub n: usize,
    /// Human-readable prior setting, e.g. `tau02=1e4/n`.
    pub prior: String,
    pub sigma_a2: Option<f64>,
    /// E_y(η̂ − η) when known in closed form.
    pub expected_bias: Option<f64>,
}

/// One estimator's output in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub cell: usize,
    pub replication: usize,
    pub estimator: String,
    /// Per-observation bias estimate b̂.
    pub estimate: f64,
    /// Realized η̂ − η for this replication.
    pub realized_bias: f64,
    /// (η̂ − η) − b̂.
    pub error: f64,
}

/// Mean (sd) of the actual, absolute and squared errors, plus the mean estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cell: usize,
    pub estimator: String,
    pub count: usize,
    pub mean_estimate: f64,
    pub mean_realized_bias: f64,
    pub mean_error: f64,
    pub sd_error: f64,
    pub mae: f64,
    pub sd_abs_error: f64,
    pub mse: f64,
    pub sd_sq_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub study: String,
    pub seed: u64,
    pub cells: Vec<CellInfo>,
    pub records: Vec<EstimateRecord>,
    pub aggregates: Vec<Aggregate>,
    /// Replications excluded after sampler failures.
    pub failed_replications: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn aggregate_for(&self, cell: usize, estimator: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.cell == cell && a.estimator == estimator)
    }

    pub fn records_for<'a>(&'a self, cell: usize, estimator: &'a str) -> impl Iterator<Item = &'a EstimateRecord> + 'a {
        self.records.iter().filter(move |r| r.cell == cell && r.estimator == estimator)
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// Summaries per (cell, estimator), in first-appearance order.
pub fn aggregate(records: &[EstimateRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(c, e)| *c == r.cell && *e == r.estimator) {
            keys.push((r.cell, r.estimator.clone()));
        }
    }
    keys.into_iter()
        .map(|(cell, estimator)| {
            let sel: Vec<&EstimateRecord> = records.iter().filter(|r| r.cell == cell && r.estimator == estimator).collect();
            let err: Vec<f64> = sel.iter().map(|r| r.error).collect();
            let abs: Vec<f64> = err.iter().map(|e| e.abs()).collect();
            let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
            let est: Vec<f64> = sel.iter().map(|r| r.estimate).collect();
            let real: Vec<f64> = sel.iter().map(|r| r.realized_bias).collect();
            let (mean_error, sd_error) = mean_sd(&err);
            let (mae, sd_abs_error) = mean_sd(&abs);
            let (mse, sd_sq_error) = mean_sd(&sq);
            Aggregate {
                cell,
                estimator,
                count: sel.len(),
                mean_estimate: mean_sd(&est).0,
                mean_realized_bias: mean_sd(&real).0,
                mean_error,
                sd_error,
                mae,
                sd_abs_error,
                mse,
                sd_sq_error,
            }
        })
        .collect()
}
