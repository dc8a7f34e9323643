use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::info::{info_pair, InfoMatrixPair};
use crate::mcmc::{sample_conjugate_normal, ConjugateNormalSampler, HierLogitSampler};
use crate::model::{HierLogitModel, Hyperprior, ParameterVector};
use crate::optimize::{find_mode, ModeConfig};
use crate::rng::stream_rng;

fn normal_data(n: usize, seed: u64) -> ObservationSet {
    let mut rng = stream_rng(seed, 0);
    ObservationSet::continuous((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn draws_at(points: &[f64]) -> PosteriorDraws {
    PosteriorDraws::from_rows(&points.iter().map(|p| vec![*p]).collect::<Vec<_>>(), 0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn paic_and_bpic(m: &ConjugateNormalModel, d: &ObservationSet) -> (CriterionReport, CriterionReport) {
    let draws = sample_conjugate_normal(m, d, 200, SampleKey::new(1)).unwrap();
    let pw = pointwise_loglik(m, d, &draws, Execution::Sequential).unwrap();
    let mode = find_mode(m, d, &ModeConfig::default()).unwrap();
    let p = paic(&pw, &info_pair(m, d, &mode.theta_hat, FisherScaling::NMinusOne).unwrap()).unwrap();
    let b = bpic(m, d, &draws, &mode, &info_pair(m, d, &mode.theta_hat, FisherScaling::N).unwrap()).unwrap();
    (p, b)
}

#[test]
fn single_draw_row_is_loglik_at_that_point() {
    let m = ConjugateNormalModel::new(1.5, 0.0, 4.0).unwrap();
    let d = normal_data(6, 3);
    let pw = pointwise_loglik(&m, &d, &draws_at(&[0.4]), Execution::Sequential).unwrap();
    for i in 0..6 {
        assert_eq!(pw.get(0, i), m.loglik_i(&d, &[0.4], i));
    }
}

#[test]
fn pointwise_column_means_match_gaussian_expectation() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
    let d = normal_data(8, 5);
    let s = 100_000;
    let draws = sample_conjugate_normal(&m, &d, s, SampleKey::new(9)).unwrap();
    let pw = pointwise_loglik(&m, &d, &draws, Execution::Parallel).unwrap();
    let (mu, s2) = m.conjugate_posterior(&d);
    for (i, mean) in pw.column_means().iter().enumerate() {
        let want = -0.5 * (2.0 * PI).ln() - ((d.y(i) - mu).powi(2) + s2) / 2.0;
        let se = (pw.column_variances()[i] / s as f64).sqrt();
        assert!((mean - want).abs() <= 3.0 * se, "obs {i}: {mean} vs {want} (se {se})");
    }
}

#[test]
fn permuting_draws_keeps_column_means() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 2.0).unwrap();
    let d = normal_data(5, 2);
    let pts = [0.1, -0.3, 0.7, 0.25];
    let rev: Vec<f64> = pts.iter().rev().copied().collect();
    let a = pointwise_loglik(&m, &d, &draws_at(&pts), Execution::Sequential).unwrap().column_means();
    let b = pointwise_loglik(&m, &d, &draws_at(&rev), Execution::Sequential).unwrap().column_means();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn pointwise_rejects_dimension_mismatch() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 2.0).unwrap();
    let d = normal_data(3, 1);
    let draws = PosteriorDraws::from_rows(&[vec![0.0, 1.0]], 0).unwrap();
    assert!(matches!(pointwise_loglik(&m, &d, &draws, Execution::Sequential), Err(Error::Invalid(_))));
}

#[test]
fn paic_matches_closed_form() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
    let d = normal_data(50, 11);
    let (p, b) = paic_and_bpic(&m, &d);
    let cf = closed_form_bias_estimators(&m, &d);
    assert!(rel(p.bias_per_obs(), cf.paic) <= 1e-6, "{} vs {}", p.bias_per_obs(), cf.paic);
    assert!(rel(b.bias_per_obs(), cf.bpic) <= 1e-6, "{} vs {}", b.bias_per_obs(), cf.bpic);
    assert!((b.penalty / p.penalty - 49.0 / 50.0).abs() <= 1e-10);
}

#[test]
fn equal_matrices_give_penalty_p() {
    let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let pair = InfoMatrixPair::from_matrices(j.clone(), j, ParameterVector::new(vec![0.0, 0.0]).unwrap()).unwrap();
    let m = ConjugateNormalModel::new(1.0, 0.0, 2.0).unwrap();
    let d = normal_data(4, 1);
    let pw = pointwise_loglik(&m, &d, &draws_at(&[0.0, 0.1]), Execution::Sequential).unwrap();
    let r = paic(&pw, &pair).unwrap();
    assert!((r.penalty - 2.0).abs() < 1e-12);
}

#[test]
fn flat_prior_paic_ok_bpic_refused() {
    let m = ConjugateNormalModel::flat(1.0).unwrap();
    let d = normal_data(10, 4);
    let draws = sample_conjugate_normal(&m, &d, 100, SampleKey::new(1)).unwrap();
    let pw = pointwise_loglik(&m, &d, &draws, Execution::Sequential).unwrap();
    let mode = find_mode(&m, &d, &ModeConfig::default()).unwrap();
    let p = paic(&pw, &info_pair(&m, &d, &mode.theta_hat, FisherScaling::NMinusOne).unwrap()).unwrap();
    assert!(p.value.is_finite());
    let pair = info_pair(&m, &d, &mode.theta_hat, FisherScaling::N).unwrap();
    let err = bpic(&m, &d, &draws, &mode, &pair).unwrap_err();
    assert_eq!(err.to_string(), "BPIC undefined under degenerate prior");
}

#[test]
fn waic_identical_draws_has_zero_penalty() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 2.0).unwrap();
    let d = normal_data(7, 8);
    let pw = pointwise_loglik(&m, &d, &draws_at(&[0.3; 5]), Execution::Sequential).unwrap();
    let r = waic2(&pw).unwrap();
    assert_eq!(r.penalty, 0.0);
    let ll = crate::model::loglik_total(&m, &d, &[0.3]).unwrap();
    assert!((r.value + 2.0 * ll).abs() < 1e-10);
}

#[test]
fn waic_single_observation_penalty_is_column_variance() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 2.0).unwrap();
    let d = ObservationSet::continuous(vec![0.5]).unwrap();
    let pw = pointwise_loglik(&m, &d, &draws_at(&[-0.2, 0.5, 1.2]), Execution::Sequential).unwrap();
    let col = pw.column(0);
    let mean = col.iter().sum::<f64>() / 3.0;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
    assert!((waic2(&pw).unwrap().penalty - var).abs() < 1e-15);
}

#[test]
fn waic_penalty_matches_closed_form_within_mc_error() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
    let d = normal_data(30, 21);
    let draws = sample_conjugate_normal(&m, &d, 100_000, SampleKey::new(2)).unwrap();
    let pw = pointwise_loglik(&m, &d, &draws, Execution::Parallel).unwrap();
    let got = waic2(&pw).unwrap().penalty;
    let want = 30.0 * closed_form_bias_estimators(&m, &d).waic2;
    // per-draw contributions to Σᵢ var estimate: use the spread of the summed squared deviations
    let s = pw.s() as f64;
    let means = pw.column_means();
    let per_draw: Vec<f64> = (0..pw.s())
        .map(|k| (0..pw.n()).map(|i| (pw.get(k, i) - means[i]).powi(2)).sum::<f64>())
        .collect();
    let m1 = per_draw.iter().sum::<f64>() / s;
    let se = (per_draw.iter().map(|v| (v - m1).powi(2)).sum::<f64>() / (s - 1.0) / s).sqrt();
    assert!((got - want).abs() <= 3.0 * se, "{got} vs {want} (se {se})");
}

#[test]
fn loo_matches_closed_form_cv() {
    let m = ConjugateNormalModel::new(1.3, 0.2, 3.0).unwrap();
    let d = normal_data(12, 6);
    let draws = sample_conjugate_normal(&m, &d, 100, SampleKey::new(1)).unwrap();
    let pw = pointwise_loglik(&m, &d, &draws, Execution::Sequential).unwrap();
    let loo = loo_exact(&m, &d, &ConjugateNormalSampler::default(), SampleKey::new(1), None, Execution::Sequential).unwrap();
    // η̂ − LOO/n with the analytic in-sample η̂
    let (mu, s2) = m.conjugate_posterior(&d);
    let eta_hat: f64 = d
        .active()
        .map(|i| -0.5 * (2.0 * PI * 1.3).ln() - ((d.y(i) - mu).powi(2) + s2) / 2.6)
        .sum::<f64>()
        / 12.0;
    let cv = eta_hat - loo.report.fit / 12.0;
    let cf = closed_form_bias_estimators(&m, &d).cv;
    assert!(rel(cv, cf) <= 1e-6, "{cv} vs {cf}");
    assert!(loo.flagged.is_empty());
    let with = loo_exact(&m, &d, &ConjugateNormalSampler::default(), SampleKey::new(1), Some(&pw), Execution::Sequential).unwrap();
    assert!((with.report.value - loo.report.value).abs() < 1e-9);
}

#[test]
fn loo_by_sampling_agrees_with_closed_form_folds() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 5.0).unwrap();
    let d = normal_data(6, 13);
    let exact = loo_exact(&m, &d, &ConjugateNormalSampler::default(), SampleKey::new(3), None, Execution::Sequential).unwrap();
    let sampled = ConjugateNormalSampler { draws: 200_000, closed_form_loo: false };
    let mc = loo_exact(&m, &d, &sampled, SampleKey::new(3), None, Execution::Parallel).unwrap();
    for (a, b) in exact.fold_terms.iter().zip(&mc.fold_terms) {
        assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }
    assert_eq!(mc.report.s, 200_000);
}

#[test]
fn loo_identical_pair_is_symmetric() {
    let m = ConjugateNormalModel::flat(1.0).unwrap();
    let d = ObservationSet::continuous(vec![0.7, 0.7]).unwrap();
    let loo = loo_exact(&m, &d, &ConjugateNormalSampler::default(), SampleKey::new(1), None, Execution::Sequential).unwrap();
    assert_eq!(loo.fold_terms[0], loo.fold_terms[1]);
}

#[test]
fn loo_refuses_large_n() {
    let m = ConjugateNormalModel::flat(1.0).unwrap();
    let d = normal_data(LOO_MAX_N + 1, 1);
    let r = loo_exact(&m, &d, &ConjugateNormalSampler::default(), SampleKey::new(1), None, Execution::Sequential);
    assert!(matches!(r, Err(Error::Invalid(_))));
}

#[test]
fn loo_hier_logit_runs_all_folds() {
    let m = HierLogitModel::new(4, Hyperprior::default()).unwrap();
    let d = ObservationSet::binomial(vec![10, 25, 31, 40], vec![50; 4]).unwrap();
    let sampler = HierLogitSampler { draws_per_chain: 1000, warmup: 500, ..Default::default() };
    let loo = loo_exact(&m, &d, &sampler, SampleKey::new(2), None, Execution::Parallel).unwrap();
    assert_eq!(loo.fold_terms.len(), 4);
    assert!(loo.fold_terms.iter().all(|v| v.is_finite()));
}

#[test]
fn dic_examples() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
    let d = normal_data(100, 17);
    let r = dic(&m, &d, &draws_at(&[0.2; 10])).unwrap();
    assert!(r.penalty.abs() < 1e-12);
    let draws = sample_conjugate_normal(&m, &d, 100_000, SampleKey::new(4)).unwrap();
    let r = dic(&m, &d, &draws).unwrap();
    assert!((r.penalty - 1.0).abs() < 0.1, "p_D = {}", r.penalty);
}

#[test]
fn dic_mean_outside_support_errors() {
    let m = HierLogitModel::new(2, Hyperprior::default()).unwrap();
    let d = ObservationSet::binomial(vec![1, 2], vec![5, 5]).unwrap();
    let draws = PosteriorDraws::from_rows(&[vec![0.0, 0.0, 0.0, -1.0], vec![0.0, 0.0, 0.0, 0.5]], 0).unwrap();
    assert!(matches!(dic(&m, &d, &draws), Err(Error::Invalid(msg)) if msg.contains("reparameteriz")));
}

#[test]
fn popt_examples() {
    let m = ConjugateNormalModel::flat(1.0).unwrap();
    let r = popt_closed_form(&m, &normal_data(11, 1)).unwrap();
    assert!((r.bias_per_obs() - 0.1).abs() < 1e-14);
    let m = ConjugateNormalModel::new(1.0, 0.0, 0.25).unwrap();
    let r = popt_closed_form(&m, &normal_data(5, 1)).unwrap();
    assert!((r.bias_per_obs() - 0.125).abs() < 1e-14);
    let h = HierLogitModel::new(2, Hyperprior::default()).unwrap();
    let d = ObservationSet::binomial(vec![1, 2], vec![5, 5]).unwrap();
    assert!(matches!(popt_closed_form(&h, &d), Err(Error::UnsupportedModel(_))));
}

#[test]
fn closed_form_paic_brackets_true_bias() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
    let s2 = 1.0 / (1e-4 + 50.0);
    let mut inside = 0;
    for k in 0..1000 {
        let b = closed_form_bias_estimators(&m, &normal_data(50, 100 + k)).paic;
        if (0.5 * s2..=2.0 * s2).contains(&b) {
            inside += 1;
        }
    }
    assert!(inside >= 990, "{inside}");
}

#[test]
fn in_sample_fit_exceeds_loo_on_average() {
    let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
    let mut gap = 0.0;
    for k in 0..500 {
        let d = normal_data(20, 1000 + k);
        let (mu, s2) = m.conjugate_posterior(&d);
        let eta_hat: f64 = d.active().map(|i| -0.5 * (2.0 * PI).ln() - ((d.y(i) - mu).powi(2) + s2) / 2.0).sum();
        let loo = loo_exact(&m, &d, &ConjugateNormalSampler::default(), SampleKey::new(1), None, Execution::Sequential).unwrap();
        gap += eta_hat - loo.report.fit;
    }
    assert!(gap > 0.0);
}

#[test]
fn evaluate_criteria_partial_success() {
    let m = ConjugateNormalModel::flat(1.0).unwrap();
    let d = normal_data(15, 2);
    let draws = sample_conjugate_normal(&m, &d, 500, SampleKey::new(1)).unwrap();
    let out = evaluate_criteria(
        &m,
        &d,
        &draws,
        &ConjugateNormalSampler::default(),
        SampleKey::new(1),
        &Criterion::DEFAULT,
        Execution::Sequential,
    )
    .unwrap();
    let names: Vec<&str> = out.iter().map(|e| e.criterion()).collect();
    assert_eq!(names, ["paic", "bpic", "waic2", "loo", "dic"]);
    assert!(matches!(&out[1], crate::report::ReportEntry::Failure(f) if f.kind == crate::report::FailureKind::Validation));
    assert!(out.iter().enumerate().all(|(k, e)| k == 1 || matches!(e, crate::report::ReportEntry::Report(_))));
}

#[test]
fn criterion_names_parse() {
    for c in Criterion::DEFAULT {
        assert_eq!(c.name().parse::<Criterion>().unwrap(), c);
    }
    assert!("aic".parse::<Criterion>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_report_satisfies_decomposition(
        n in 3usize..60,
        tau_choice in 0usize..4,
        sa2 in prop::sample::select(vec![0.25, 1.0, 2.25]),
        seed in 0u64..1000,
    ) {
        let tau02 = [1e4, 1e4 / n as f64, 0.25, f64::INFINITY][tau_choice];
        let m = ConjugateNormalModel::new(sa2, 0.0, tau02).unwrap();
        let d = normal_data(n, seed);
        let draws = sample_conjugate_normal(&m, &d, 300, SampleKey::new(seed)).unwrap();
        let mut crits = Criterion::DEFAULT.to_vec();
        crits.push(Criterion::Popt);
        let out = evaluate_criteria(&m, &d, &draws, &ConjugateNormalSampler::default(), SampleKey::new(seed), &crits, Execution::Sequential).unwrap();
        for e in out {
            if let crate::report::ReportEntry::Report(r) = e {
                let want = -2.0 * r.fit + 2.0 * r.penalty;
                prop_assert!((r.value - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn generic_paic_and_bpic_match_closed_forms(
        n in 5usize..200,
        tau_choice in 0usize..3,
        sa2 in prop::sample::select(vec![0.25, 1.0, 2.25]),
        seed in 0u64..1000,
    ) {
        let tau02 = [1e4, 1e4 / n as f64, 0.25][tau_choice];
        let m = ConjugateNormalModel::new(sa2, 0.0, tau02).unwrap();
        let d = normal_data(n, seed);
        let (p, b) = paic_and_bpic(&m, &d);
        let cf = closed_form_bias_estimators(&m, &d);
        prop_assert!(rel(p.bias_per_obs(), cf.paic) <= 1e-6);
        prop_assert!(rel(b.bias_per_obs(), cf.bpic) <= 1e-6);
        prop_assert!(rel(cf.bpic / cf.paic, (n as f64 - 1.0) / n as f64) <= 1e-10);
    }
}
