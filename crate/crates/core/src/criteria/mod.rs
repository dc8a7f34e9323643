//! Predictive information criteria on the deviance scale.
//!
//! Every [`CriterionReport`] satisfies `value = −2·fit + 2·penalty`, where
//! `fit` is on the log-likelihood scale and `penalty / n` is the criterion's
//! estimate of the per-observation optimism.

mod closed_form;
mod evaluate;

pub use closed_form::{closed_form_bias_estimators, ClosedFormBias};
pub use evaluate::{evaluate_criteria, Criterion};

use std::any::Any;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::info::{trace_correction, FisherScaling, InfoMatrixPair};
use crate::mcmc::{PosteriorDraws, PosteriorSampler, SampleKey};
use crate::model::{loglik_total, ConjugateNormalModel, Model, ObservationSet};
use crate::optimize::ModeResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: String,
    pub value: f64,
    pub fit: f64,
    pub penalty: f64,
    pub n: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

impl CriterionReport {
    fn new(criterion: &str, fit: f64, penalty: f64, n: usize, s: usize, seed: Option<u64>) -> Self {
        Self {
            criterion: criterion.to_string(),
            value: -2.0 * fit + 2.0 * penalty,
            fit,
            penalty,
            n,
            s,
            seed,
            warnings: Vec::new(),
        }
    }

    /// Per-observation optimism estimate, `penalty / n`.
    pub fn bias_per_obs(&self) -> f64 {
        self.penalty / self.n as f64
    }
}

/// S×n matrix of log g(yᵢ|θ⁽ˢ⁾), stored by column.
#[derive(Debug, Clone)]
pub struct PointwiseLogLik {
    columns: Vec<Vec<f64>>,
    indices: Vec<usize>,
    draws: usize,
    seed: u64,
}

impl PointwiseLogLik {
    pub fn n(&self) -> usize {
        self.columns.len()
    }

    pub fn s(&self) -> usize {
        self.draws
    }

    pub fn get(&self, s: usize, col: usize) -> f64 {
        self.columns[col][s]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.columns[col]
    }

    /// Observation index of each column.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn column_means(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }

    /// Sample variances over draws (S − 1 denominator).
    pub fn column_variances(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| {
                // Welford: exact zero for constant columns
                let (mut mean, mut m2) = (0.0, 0.0);
                for (k, &v) in c.iter().enumerate() {
                    let delta = v - mean;
                    mean += delta / (k + 1) as f64;
                    m2 += delta * (v - mean);
                }
                m2 / (c.len() as f64 - 1.0)
            })
            .collect()
    }

    /// Σᵢ E_{θ|y} log g(yᵢ|θ) = n·η̂.
    pub fn fit(&self) -> f64 {
        self.column_means().iter().sum()
    }
}

/// Evaluates log g(yᵢ|θ⁽ˢ⁾) for every draw and active observation.
pub fn pointwise_loglik<M: Model + ?Sized>(
    model: &M,
    data: &ObservationSet,
    draws: &PosteriorDraws,
    exec: Execution,
) -> Result<PointwiseLogLik> {
    if draws.dim() != model.dim() {
        return Err(Error::Invalid(format!(
            "draws have {} columns but model has dimension {}",
            draws.dim(),
            model.dim()
        )));
    }
    if draws.is_empty() {
        return Err(Error::Invalid("no posterior draws".into()));
    }
    let indices: Vec<usize> = data.active().collect();
    let columns: Vec<Result<Vec<f64>>> = exec.map(indices.len(), |c| {
        let i = indices[c];
        draws
            .rows()
            .enumerate()
            .map(|(s, th)| {
                let v = model.loglik_i(data, th, i);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Invalid(format!("non-finite log-likelihood at draw {s}, observation {i}")))
                }
            })
            .collect()
    });
    Ok(PointwiseLogLik {
        columns: columns.into_iter().collect::<Result<_>>()?,
        indices,
        draws: draws.len(),
        seed: draws.seed,
    })
}

/// PAIC = −2 Σᵢ E_{θ|y} log g(yᵢ|θ) + 2 tr{J_n⁻¹ I_n}.
pub fn paic(pointwise: &PointwiseLogLik, pair: &InfoMatrixPair) -> Result<CriterionReport> {
    let tc = trace_correction(pair)?;
    let mut r = CriterionReport::new("paic", pointwise.fit(), tc.value, pointwise.n(), pointwise.s(), Some(pointwise.seed));
    if pair.scaling != FisherScaling::NMinusOne {
        r.warnings.push("I_n uses the 1/n prefactor".into());
    }
    Ok(r)
}

/// BPIC = −2n·η̂_BPIC with
/// n·η̂_BPIC = log{π(θ̂)L(θ̂|y)} − E_{θ|y} log π(θ) − tr{J_n⁻¹ I_n} − K/2.
///
/// The report's fit is the plug-in part `log{π(θ̂)L(θ̂|y)} − E log π − K/2`
/// and its penalty the trace term (I_n with the 1/n prefactor).
pub fn bpic<M: Model + ?Sized>(
    model: &M,
    data: &ObservationSet,
    draws: &PosteriorDraws,
    mode: &ModeResult,
    pair: &InfoMatrixPair,
) -> Result<CriterionReport> {
    if !model.prior_proper() {
        return Err(Error::ImproperPrior);
    }
    let theta_hat = mode.theta_hat.as_slice();
    let plug_in = loglik_total(model, data, theta_hat)? + model.logprior(theta_hat);
    let mut e_logprior = 0.0;
    for th in draws.rows() {
        let lp = model.logprior(th);
        if !lp.is_finite() {
            return Err(Error::Invalid("log prior is not finite at a posterior draw".into()));
        }
        e_logprior += lp;
    }
    e_logprior /= draws.len() as f64;
    let k = model.dim() as f64;
    let tc = trace_correction(pair)?;
    let fit = plug_in - e_logprior - k / 2.0;
    let mut r = CriterionReport::new("bpic", fit, tc.value, data.n(), draws.len(), Some(draws.seed));
    if pair.scaling != FisherScaling::N {
        r.warnings.push("I_n uses the 1/(n-1) prefactor".into());
    }
    Ok(r)
}

/// BPIC bias correction η̂ − η̂_BPIC, per observation.
pub fn bpic_bias_per_obs(bpic: &CriterionReport, pointwise: &PointwiseLogLik) -> f64 {
    (pointwise.fit() - bpic.fit + bpic.penalty) / bpic.n as f64
}

/// WAIC₂ with penalty Σᵢ var_s log g(yᵢ|θ⁽ˢ⁾).
pub fn waic2(pointwise: &PointwiseLogLik) -> Result<CriterionReport> {
    if pointwise.s() < 2 {
        return Err(Error::Invalid("WAIC needs at least two draws".into()));
    }
    let penalty = pointwise.column_variances().iter().sum();
    Ok(CriterionReport::new("waic2", pointwise.fit(), penalty, pointwise.n(), pointwise.s(), Some(pointwise.seed)))
}

/// DIC with p_D = 2(log L(θ̄|y) − mean_s log L(θ⁽ˢ⁾|y)).
pub fn dic<M: Model + ?Sized>(model: &M, data: &ObservationSet, draws: &PosteriorDraws) -> Result<CriterionReport> {
    let theta_bar = draws.mean();
    if !model.in_support(&theta_bar) {
        return Err(Error::Invalid(
            "posterior mean lies outside the support; consider reparameterizing".into(),
        ));
    }
    let at_mean = loglik_total(model, data, &theta_bar)?;
    let mut mean_ll = 0.0;
    for th in draws.rows() {
        mean_ll += loglik_total(model, data, th)?;
    }
    mean_ll /= draws.len() as f64;
    let p_d = 2.0 * (at_mean - mean_ll);
    Ok(CriterionReport::new("dic", at_mean, p_d, data.n(), draws.len(), Some(draws.seed)))
}

/// Largest n for which exact refits are attempted.
pub const LOO_MAX_N: usize = 1000;

#[derive(Debug, Clone)]
pub struct LooResult {
    pub report: CriterionReport,
    /// E_{θ|y₋ᵢ} log g(yᵢ|θ) per active observation.
    pub fold_terms: Vec<f64>,
    /// Folds whose sampler failed its convergence gate.
    pub flagged: Vec<usize>,
}

/// Exact leave-one-out: refit the posterior without yᵢ and average
/// log g(yᵢ|θ) over the fold posterior.
///
/// With `in_sample`, the report's fit is the in-sample Σᵢ E log g and the
/// penalty is the difference to the LOO sum; otherwise the fit is the LOO sum.
pub fn loo_exact<M, S>(
    model: &M,
    data: &ObservationSet,
    sampler: &S,
    key: SampleKey,
    in_sample: Option<&PointwiseLogLik>,
    exec: Execution,
) -> Result<LooResult>
where
    M: Model + ?Sized,
    S: PosteriorSampler<M>,
{
    let n = data.n();
    if n > LOO_MAX_N {
        return Err(Error::Invalid(format!("exact LOO limited to n <= {LOO_MAX_N}, got {n}")));
    }
    if data.omitted().is_some() {
        return Err(Error::Invalid("data is already a leave-one-out fold".into()));
    }
    let indices: Vec<usize> = data.active().collect();
    let folds: Vec<Result<(f64, bool, usize)>> = exec.map(indices.len(), |c| {
        let i = indices[c];
        let fold = data.leave_one_out(i)?;
        if let Some(v) = sampler.exact_expected_loglik(model, &fold, i) {
            return Ok((v, true, 0));
        }
        let out = sampler.sample(model, &fold, key.for_fold(i))?;
        let mut acc = 0.0;
        for th in out.draws.rows() {
            let v = model.loglik_i(data, th, i);
            if !v.is_finite() {
                return Err(Error::NonFiniteTerm { index: i });
            }
            acc += v;
        }
        Ok((acc / out.draws.len() as f64, out.converged, out.draws.len()))
    });
    let mut fold_terms = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    let mut s = 0;
    for (c, f) in folds.into_iter().enumerate() {
        let (v, ok, draws) = f?;
        fold_terms.push(v);
        s = s.max(draws);
        if !ok {
            flagged.push(indices[c]);
        }
    }
    let loo_sum: f64 = fold_terms.iter().sum();
    let mut report = match in_sample {
        Some(pw) => CriterionReport::new("loo", pw.fit(), pw.fit() - loo_sum, n, s, Some(key.seed)),
        None => CriterionReport::new("loo", loo_sum, 0.0, n, s, Some(key.seed)),
    };
    if !flagged.is_empty() {
        report.warnings.push(format!("{} fold(s) failed the convergence gate", flagged.len()));
    }
    Ok(LooResult { report, fold_terms, flagged })
}

fn as_conjugate_normal<M: Model + Any>(model: &M) -> Result<&ConjugateNormalModel> {
    (model as &dyn Any)
        .downcast_ref::<ConjugateNormalModel>()
        .ok_or_else(|| Error::UnsupportedModel(model.name().to_string()))
}

/// Expected deviance penalized loss for the conjugate normal model, with
/// penalty p_opt/2 = n / (σ_A²(1/τ₀² + (n−1)/σ_A²)).
pub fn popt_closed_form<M: Model + Any>(model: &M, data: &ObservationSet) -> Result<CriterionReport> {
    let m = as_conjugate_normal(model)?;
    let n = data.n();
    let (mu, s2) = m.conjugate_posterior(data);
    let fit: f64 = data
        .active()
        .map(|i| -0.5 * (2.0 * PI * m.sigma_a2).ln() - ((data.y(i) - mu).powi(2) + s2) / (2.0 * m.sigma_a2))
        .sum();
    let b = closed_form::popt_bias(m, n);
    Ok(CriterionReport::new("popt", fit, n as f64 * b, n, 0, None))
}

#[cfg(test)]
mod tests;
