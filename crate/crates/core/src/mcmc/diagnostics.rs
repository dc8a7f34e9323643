//! Split-chain R-hat and initial-monotone-sequence effective sample size.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Autocovariance at `lag` with the 1/n normalization.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Effective sample size of a single series.
///
/// Returns 0 for a constant series.
pub fn ess(x: &[f64]) -> f64 {
    ess_chains(&[x])
}

/// Multi-chain effective sample size. Chains must have equal length.
pub fn ess_chains(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    if m == 0 {
        return 0.0;
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return 0.0;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0)).collect();
    let nf = n as f64;
    // within-chain variance with the unbiased (n−1) normalization
    let w = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 {
        let g = mean(&means);
        means.iter().map(|mu| (mu - g).powi(2)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = w * (nf - 1.0) / nf + b_over_n;
    if !(var_plus > 0.0) {
        return 0.0;
    }

    let rho = |t: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, t))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    // Geyer's initial monotone sequence over pairs (ρ₂ₖ + ρ₂ₖ₊₁)
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10().max(1.0));
    (total / tau).min(total)
}

/// Split-chain potential scale reduction. Draws are grouped by `chain_ids`.
pub fn rhat(draws: &[f64], chain_ids: &[u32]) -> f64 {
    let mut ids: Vec<u32> = chain_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let chains: Vec<Vec<f64>> = ids
        .iter()
        .map(|&c| draws.iter().zip(chain_ids).filter(|(_, &k)| k == c).map(|(&v, _)| v).collect())
        .collect();
    let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
    split_rhat(&refs)
}

/// Split R-hat over chains given as slices.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if len < 4 {
        return f64::NAN;
    }
    let half = len / 2;
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[c.len() - half..]);
    }
    let m = halves.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, &mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return if b > 0.0 { f64::INFINITY } else { 1.0 };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn iid_ess_close_to_n() {
        let x = normals(1, 10_000);
        let e = ess(&x);
        assert!((8_000.0..=10_000.0).contains(&e), "{e}");
    }

    #[test]
    fn ar1_ess() {
        let rho = 0.9;
        let z = normals(2, 10_000);
        let mut x = vec![0.0; z.len()];
        for t in 1..z.len() {
            x[t] = rho * x[t - 1] + z[t];
        }
        let target = 10_000.0 * (1.0 - rho) / (1.0 + rho);
        let e = ess(&x);
        assert!(e > target / 1.5 && e < target * 1.5, "{e} vs {target}");
    }

    #[test]
    fn constant_series_has_zero_ess() {
        assert_eq!(ess(&[3.0; 100]), 0.0);
    }

    #[test]
    fn rhat_cases() {
        let a = normals(3, 4000);
        let b = normals(4, 4000);
        let ids: Vec<u32> = (0..8000).map(|i| (i / 4000) as u32).collect();
        let mut all = a.clone();
        all.extend_from_slice(&b);
        let r = rhat(&all, &ids);
        assert!((r - 1.0).abs() < 0.02, "{r}");

        let shifted: Vec<f64> = b.iter().map(|v| v + 5.0).collect();
        let mut all = a.clone();
        all.extend_from_slice(&shifted);
        assert!(rhat(&all, &ids) > 1.1);

        let single = normals(5, 6000);
        assert!(rhat(&single, &vec![0; 6000]) <= 1.02);
    }
}
