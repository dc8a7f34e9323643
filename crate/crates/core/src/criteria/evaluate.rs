use std::any::Any;
use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{bpic, dic, loo_exact, paic, pointwise_loglik, popt_closed_form, waic2, CriterionReport};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::info::{info_pair, FisherScaling};
use crate::mcmc::{PosteriorDraws, PosteriorSampler, SampleKey};
use crate::model::{Model, ObservationSet};
use crate::optimize::{find_mode, ModeConfig};
use crate::report::{CriterionFailure, ReportEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Paic,
    Bpic,
    Waic2,
    Loo,
    Dic,
    Popt,
}

impl Criterion {
    pub const DEFAULT: [Criterion; 5] = [Criterion::Paic, Criterion::Bpic, Criterion::Waic2, Criterion::Loo, Criterion::Dic];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Paic => "paic",
            Criterion::Bpic => "bpic",
            Criterion::Waic2 => "waic2",
            Criterion::Loo => "loo",
            Criterion::Dic => "dic",
            Criterion::Popt => "popt",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "paic" => Criterion::Paic,
            "bpic" => Criterion::Bpic,
            "waic2" | "waic" => Criterion::Waic2,
            "loo" | "cv" => Criterion::Loo,
            "dic" => Criterion::Dic,
            "popt" => Criterion::Popt,
            other => return Err(Error::Invalid(format!("unknown criterion `{other}`"))),
        })
    }
}

/// Evaluates each requested criterion independently; a failing criterion
/// becomes a [`ReportEntry::Failure`] and does not affect the others.
///
/// Errors shared by every criterion (invalid data, draws of the wrong
/// dimension, non-finite pointwise log-likelihood) are returned directly.
pub fn evaluate_criteria<M, S>(
    model: &M,
    data: &ObservationSet,
    draws: &PosteriorDraws,
    sampler: &S,
    key: SampleKey,
    criteria: &[Criterion],
    exec: Execution,
) -> Result<Vec<ReportEntry>>
where
    M: Model + Any,
    S: PosteriorSampler<M>,
{
    model.validate(data)?;
    let pw = pointwise_loglik(model, data, draws, exec)?;
    let mode = OnceCell::new();
    let mut out = Vec::with_capacity(criteria.len());
    for &c in criteria {
        let needs_mode = c == Criterion::Paic || (c == Criterion::Bpic && model.prior_proper());
        let m = if needs_mode {
            match mode.get_or_init(|| find_mode(model, data, &ModeConfig::default())) {
                Ok(m) => Some(m),
                Err(e) => {
                    out.push(ReportEntry::Failure(CriterionFailure::new(c.name(), e)));
                    continue;
                }
            }
        } else {
            None
        };
        let r: Result<CriterionReport> = match (c, m) {
            (Criterion::Paic, Some(m)) => {
                info_pair(model, data, &m.theta_hat, FisherScaling::NMinusOne).and_then(|pair| paic(&pw, &pair))
            }
            (Criterion::Bpic, Some(m)) => {
                info_pair(model, data, &m.theta_hat, FisherScaling::N).and_then(|pair| bpic(model, data, draws, m, &pair))
            }
            (Criterion::Bpic, None) => Err(Error::ImproperPrior),
            (Criterion::Waic2, _) => waic2(&pw),
            (Criterion::Loo, _) => loo_exact(model, data, sampler, key, Some(&pw), exec).map(|l| l.report),
            (Criterion::Dic, _) => dic(model, data, draws),
            (Criterion::Popt, _) => popt_closed_form(model, data),
            (Criterion::Paic, None) => unreachable!("mode is computed for paic"),
        };
        out.push(match r {
            Ok(rep) => ReportEntry::Report(rep),
            Err(e) => ReportEntry::Failure(CriterionFailure::new(c.name(), &e)),
        });
    }
    Ok(out)
}
