//! Posterior sampling and convergence diagnostics.

mod conjugate;
pub mod diagnostics;
mod hier_logit;

pub use conjugate::{sample_conjugate_normal, ConjugateNormalSampler};
pub use diagnostics::{ess, ess_chains, rhat, split_rhat};
pub use hier_logit::{sample_hier_logit, HierLogitSampler};

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ObservationSet};
use crate::rng::{Purpose, StreamId};

/// S×p matrix of retained draws, row-major, with chain labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    values: Vec<f64>,
    dim: usize,
    chain_ids: Vec<u32>,
    pub warmup_discarded: usize,
    pub seed: u64,
}

impl PosteriorDraws {
    pub fn new(values: Vec<f64>, dim: usize, chain_ids: Vec<u32>, warmup_discarded: usize, seed: u64) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) || values.len() / dim != chain_ids.len() {
            return Err(Error::Invalid("draw matrix dimensions are inconsistent".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("draws contain non-finite values".into()));
        }
        Ok(Self { values, dim, chain_ids, warmup_discarded, seed })
    }

    /// Single-chain draws from a list of rows.
    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Invalid("rows have different lengths".into()));
        }
        Self::new(rows.concat(), dim, vec![0; rows.len()], 0, seed)
    }

    /// Number of draws S.
    pub fn len(&self) -> usize {
        self.chain_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.dim..(s + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn chain_ids(&self) -> &[u32] {
        &self.chain_ids
    }

    pub fn n_chains(&self) -> usize {
        let mut ids = self.chain_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Column `j` across all draws.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Column `j` split by chain, in chain-id order.
    pub fn coordinate_by_chain(&self, j: usize) -> Vec<Vec<f64>> {
        let mut ids = self.chain_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.iter()
            .map(|&c| {
                self.rows()
                    .zip(&self.chain_ids)
                    .filter(|(_, &k)| k == c)
                    .map(|(r, _)| r[j])
                    .collect()
            })
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let s = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= s);
        m
    }

    /// Writes `theta_1..theta_p,chain`, one row per draw.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io { path: path.display().to_string(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let header: Vec<String> = (1..=self.dim).map(|j| format!("theta_{j}")).chain(["chain".to_string()]).collect();
        writeln!(f, "{}", header.join(",")).map_err(io)?;
        for (r, c) in self.rows().zip(&self.chain_ids) {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(f, "{},{c}", cells.join(",")).map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn read_csv(path: &Path, seed: u64) -> Result<Self> {
        let label = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: label.clone(), source })?;
        Self::from_reader(file, &label, seed)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, label: &str, seed: u64) -> Result<Self> {
        let perr = |line: u64, msg: String| Error::Parse { path: label.to_string(), line, msg };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
        let chain_col = headers.iter().position(|h| h == "chain");
        let theta_cols: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with("theta_"))
            .map(|(i, _)| i)
            .collect();
        for (k, &c) in theta_cols.iter().enumerate() {
            if headers[c] != *format!("theta_{}", k + 1) {
                return Err(perr(1, format!("expected column theta_{} but found `{}`", k + 1, &headers[c])));
            }
        }
        if theta_cols.is_empty() {
            return Err(perr(1, "no theta_ columns".into()));
        }
        let mut values = Vec::new();
        let mut chains = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            for &c in &theta_cols {
                let v: f64 = rec[c].parse().map_err(|_| perr(line, format!("cannot parse `{}`", &rec[c])))?;
                if !v.is_finite() {
                    return Err(perr(line, "non-finite draw".into()));
                }
                values.push(v);
            }
            let chain = match chain_col {
                Some(c) => rec[c].parse().map_err(|_| perr(line, format!("bad chain id `{}`", &rec[c])))?,
                None => 0,
            };
            chains.push(chain);
        }
        Self::new(values, theta_cols.len(), chains, 0, seed)
    }
}

/// Per-coordinate convergence summary.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub ess: Vec<f64>,
    pub rhat: Vec<f64>,
    /// Post-warmup acceptance fraction per update block.
    pub accept_rate: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Convergence gate applied to sampler output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl Default for Gate {
    fn default() -> Self {
        Self { max_rhat: 1.05, min_ess: 400.0 }
    }
}

impl Diagnostics {
    pub fn compute(draws: &PosteriorDraws, accept_rate: Vec<f64>) -> Self {
        let mut warnings = Vec::new();
        let mut ess_v = Vec::with_capacity(draws.dim());
        let mut rhat_v = Vec::with_capacity(draws.dim());
        for j in 0..draws.dim() {
            let by_chain = draws.coordinate_by_chain(j);
            let refs: Vec<&[f64]> = by_chain.iter().map(|c| c.as_slice()).collect();
            let e = ess_chains(&refs);
            if e == 0.0 {
                warnings.push(format!("coordinate {} is constant; ESS set to 0", j + 1));
            }
            ess_v.push(e);
            rhat_v.push(split_rhat(&refs));
        }
        Self { ess: ess_v, rhat: rhat_v, accept_rate, warnings }
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check(&self, gate: &Gate) -> Result<()> {
        let (r, e) = (self.max_rhat(), self.min_ess());
        if r > gate.max_rhat || e < gate.min_ess {
            return Err(Error::NonConvergence { max_rhat: r, min_ess: e });
        }
        Ok(())
    }
}

/// Identifies the random streams a sampler run may use.
#[derive(Debug, Clone, Copy)]
pub struct SampleKey {
    pub seed: u64,
    pub id: StreamId,
    pub fold: Option<u16>,
}

impl SampleKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, id: StreamId::new(0, 0), fold: None }
    }

    pub fn with_id(seed: u64, id: StreamId) -> Self {
        Self { seed, id, fold: None }
    }

    pub fn for_fold(self, fold: usize) -> Self {
        Self { fold: Some(fold as u16), ..self }
    }

    pub fn chain_rng(&self, chain: usize) -> ChaCha8Rng {
        let purpose = match self.fold {
            None => Purpose::Chain(chain as u16),
            Some(fold) => Purpose::Fold { fold, chain: chain as u16 },
        };
        self.id.rng(self.seed, purpose)
    }
}

#[derive(Debug, Clone)]
pub struct SamplerOutput {
    pub draws: PosteriorDraws,
    pub diagnostics: Option<Diagnostics>,
    /// False when the sampler's convergence gate rejected the run.
    pub converged: bool,
}

/// Something that can draw from p(θ | data) for model `M`.
pub trait PosteriorSampler<M: Model + ?Sized>: Sync {
    /// Draws from the posterior. Gate failures are reported through
    /// [`SamplerOutput::converged`], not as errors.
    fn sample(&self, model: &M, data: &ObservationSet, key: SampleKey) -> Result<SamplerOutput>;

    /// E_{θ|data} log g(y_target|θ) in closed form, if the posterior admits one.
    fn exact_expected_loglik(&self, _model: &M, _data: &ObservationSet, _target: usize) -> Option<f64> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = PosteriorDraws::new(vec![0.1, -2.0, 3.5, 1e-300, 7.25, 0.0], 2, vec![0, 0, 1], 5, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("theta_1,theta_2,chain\n"));
        let back = PosteriorDraws::read_csv(&p, 9).unwrap();
        assert_eq!(back.rows().collect::<Vec<_>>(), d.rows().collect::<Vec<_>>());
        assert_eq!(back.chain_ids(), d.chain_ids());
    }

    #[test]
    fn rejects_bad_header() {
        assert!(PosteriorDraws::from_reader("theta_2,chain\n1,0\n".as_bytes(), "m", 0).is_err());
        assert!(PosteriorDraws::from_reader("theta_1,chain\nx,0\n".as_bytes(), "m", 0).is_err());
    }
}
