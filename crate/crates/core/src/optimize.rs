//! Posterior mode search and the Gaussian (Laplace) posterior approximation.
//!
//! The search runs damped Newton with a backtracking line search on an
//! unconstrained reparameterization: coordinates bounded below are moved to
//! the log scale. No Jacobian is added, so the maximizer is the mode of the
//! density in the model's own parameterization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::calculus::{grad_fd, hess_fd, DiffConfig};
use crate::error::{Error, Result};
use crate::info::compute_jn;
use crate::model::{logpost_grad, logpost_hess, logpost_unnorm, Bound, Model, ObservationSet, ParameterVector};
use crate::rng::stream_rng;

#[derive(Debug, Clone)]
pub struct ModeResult {
    pub theta_hat: ParameterVector,
    /// Infinity norm of the log-posterior gradient at `theta_hat`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Negative Hessian of the log posterior at `theta_hat`.
    pub neg_hessian: DMatrix<f64>,
    pub logpost: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ModeConfig {
    pub max_iter: usize,
    /// Convergence when ‖∇‖∞ ≤ grad_tol · max(1, |log post|).
    pub grad_tol: f64,
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-8, restarts: 3, restart_seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceApprox {
    pub mean: ParameterVector,
    /// (n·J_n(θ̂))⁻¹
    pub covariance: DMatrix<f64>,
}

struct Reparam {
    lower: Vec<Option<f64>>,
}

impl Reparam {
    fn new(support: &[Bound]) -> Self {
        let lower = support
            .iter()
            .map(|b| match b {
                Bound::Real => None,
                Bound::Above(lo) => Some(*lo),
            })
            .collect();
        Self { lower }
    }

    fn to_theta(&self, phi: &[f64]) -> Vec<f64> {
        phi.iter()
            .zip(&self.lower)
            .map(|(&x, lo)| match lo {
                None => x,
                Some(lo) => lo + x.exp(),
            })
            .collect()
    }

    fn to_phi(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.lower)
            .map(|(&x, lo)| match lo {
                None => x,
                Some(lo) => (x - lo).ln(),
            })
            .collect()
    }

    /// dθ/dφ, which for log coordinates also equals d²θ/dφ².
    fn jacobian_diag(&self, theta: &[f64]) -> Vec<Option<f64>> {
        theta
            .iter()
            .zip(&self.lower)
            .map(|(&x, lo)| lo.map(|lo| x - lo))
            .collect()
    }
}

fn gradient<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Result<DVector<f64>> {
    match logpost_grad(model, data, theta) {
        Some(g) => Ok(g),
        None => grad_fd(
            |x| logpost_unnorm(model, data, x).unwrap_or(f64::NAN),
            theta,
            &DiffConfig::default(),
        ),
    }
}

/// Hessian of the log unnormalized posterior, analytic when available.
pub fn logpost_hessian<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(h) = logpost_hess(model, data, theta) {
        return Ok(h);
    }
    let cfg = DiffConfig::default();
    if logpost_grad(model, data, theta).is_some() {
        return crate::calculus::hess_fd_from_grad(
            |x| logpost_grad(model, data, x).expect("analytic gradient"),
            theta,
            &cfg,
        );
    }
    hess_fd(|x| logpost_unnorm(model, data, x).unwrap_or(f64::NAN), theta, &cfg)
}

fn objective<M: Model + ?Sized>(model: &M, data: &ObservationSet, rp: &Reparam, phi: &[f64]) -> f64 {
    let theta = rp.to_theta(phi);
    if !model.in_support(&theta) {
        return f64::NEG_INFINITY;
    }
    logpost_unnorm(model, data, &theta).unwrap_or(f64::NEG_INFINITY)
}

/// Solves (A + ridge) x = b for symmetric positive definite A, escalating the ridge.
fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let p = a.nrows() as f64;
    let mut ridge = (1e-8 * a.trace().abs() / p).max(1e-12);
    for _ in 0..8 {
        let shifted = a + DMatrix::identity(a.nrows(), a.ncols()) * ridge;
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(b));
        }
        ridge *= 100.0;
    }
    None
}

/// Finds θ̂ = argmax log{L(θ|y)π(θ)} starting from `init`.
pub fn posterior_mode<M: Model + ?Sized>(model: &M, data: &ObservationSet, init: &[f64]) -> Result<ModeResult> {
    newton(model, data, init, &ModeConfig::default())
}

pub fn newton<M: Model + ?Sized>(model: &M, data: &ObservationSet, init: &[f64], cfg: &ModeConfig) -> Result<ModeResult> {
    model.validate(data)?;
    if !model.in_support(init) {
        let coord = model
            .support()
            .iter()
            .zip(init)
            .position(|(b, &x)| !b.contains(x))
            .unwrap_or(0);
        return Err(Error::OutOfSupport { coord, value: init.get(coord).copied().unwrap_or(f64::NAN) });
    }
    let rp = Reparam::new(&model.support());
    let mut phi = rp.to_phi(init);
    let mut f = objective(model, data, &rp, &phi);
    if !f.is_finite() {
        return Err(Error::Invalid("log posterior is not finite at the initial point".into()));
    }

    let mut iterations = 0;
    let mut stalled = false;
    loop {
        let theta = rp.to_theta(&phi);
        let g_theta = gradient(model, data, &theta)?;
        let grad_norm = g_theta.amax();
        if grad_norm <= cfg.grad_tol * f.abs().max(1.0) || iterations >= cfg.max_iter || stalled {
            return finish(model, data, theta, grad_norm, iterations, f, cfg);
        }
        iterations += 1;

        let jac = rp.jacobian_diag(&theta);
        let h_theta = logpost_hessian(model, data, &theta)?;
        let p = phi.len();
        let mut g_phi = g_theta.clone();
        let mut h_phi = h_theta;
        for j in 0..p {
            if let Some(d) = jac[j] {
                g_phi[j] *= d;
                for k in 0..p {
                    h_phi[(j, k)] *= d;
                    h_phi[(k, j)] *= d;
                }
                h_phi[(j, j)] += g_theta[j] * d;
            }
        }

        let newton_dir = spd_solve(&(-&h_phi), &g_phi).filter(|d| d.dot(&g_phi) > 0.0);
        let dir = newton_dir.unwrap_or_else(|| {
            // steepest ascent, scaled to a unit step in the largest coordinate
            let m = g_phi.amax().max(1e-300);
            &g_phi / m
        });

        let slope = dir.dot(&g_phi);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = phi.iter().zip(dir.iter()).map(|(a, b)| a + alpha * b).collect();
            let ft = objective(model, data, &rp, &trial);
            if ft.is_finite() && ft >= f + 1e-4 * alpha * slope {
                phi = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            stalled = true;
        }
    }
}

fn finish<M: Model + ?Sized>(
    model: &M,
    data: &ObservationSet,
    theta: Vec<f64>,
    grad_norm: f64,
    iterations: usize,
    logpost: f64,
    cfg: &ModeConfig,
) -> Result<ModeResult> {
    let neg_hessian = -logpost_hessian(model, data, &theta)?;
    let pd = neg_hessian.clone().cholesky().is_some();
    let converged = pd && grad_norm <= cfg.grad_tol * logpost.abs().max(1.0);
    Ok(ModeResult {
        theta_hat: ParameterVector::new(theta)?,
        grad_norm,
        iterations,
        converged,
        neg_hessian,
        logpost,
    })
}

/// Mode search from the model's data-driven start plus jittered restarts,
/// keeping the best converged result.
pub fn find_mode<M: Model + ?Sized>(model: &M, data: &ObservationSet, cfg: &ModeConfig) -> Result<ModeResult> {
    let init = model.initial_point(data);
    let rp = Reparam::new(&model.support());
    let base_phi = rp.to_phi(&init);
    let mut rng = stream_rng(cfg.restart_seed, 0);
    let mut best: Option<ModeResult> = None;
    let mut first_err = None;
    for r in 0..cfg.restarts.max(1) {
        let start = if r == 0 {
            init.clone()
        } else {
            let phi: Vec<f64> = base_phi
                .iter()
                .map(|x| x + 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rp.to_theta(&phi)
        };
        match newton(model, data, &start, cfg) {
            Ok(m) => {
                let better = match &best {
                    None => true,
                    Some(b) => (m.converged && !b.converged) || (m.converged == b.converged && m.logpost > b.logpost),
                };
                if better {
                    best = Some(m);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::SingularHessian))
}

/// Gaussian approximation N(θ̂, (n·J_n(θ̂))⁻¹).
pub fn laplace_approx<M: Model + ?Sized>(model: &M, data: &ObservationSet, mode: &ModeResult) -> Result<LaplaceApprox> {
    if !mode.converged {
        return Err(Error::Invalid("mode search did not converge".into()));
    }
    let n = data.n() as f64;
    let precision = compute_jn(model, data, mode.theta_hat.as_slice())? * n;
    let eig = precision.clone().symmetric_eigenvalues();
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { eigenvalues: eig.iter().copied().collect() })?;
    let cov = chol.inverse();
    Ok(LaplaceApprox {
        mean: mode.theta_hat.clone(),
        covariance: (&cov + cov.transpose()) * 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConjugateNormalModel, HierLogitModel, Hyperprior, ModelDefinition};

    fn data(y: &[f64]) -> ObservationSet {
        ObservationSet::continuous(y.to_vec()).unwrap()
    }

    #[test]
    fn flat_normal_mode_is_sample_mean() {
        let m = ConjugateNormalModel::flat(1.0).unwrap();
        let r = posterior_mode(&m, &data(&[1.0, 2.0, 3.0]), &[-5.0]).unwrap();
        assert!(r.converged);
        assert!((r.theta_hat[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_mode_and_laplace_are_exact() {
        let m = ConjugateNormalModel::new(1.0, 0.0, 1e4).unwrap();
        let d = data(&[0.5, 1.5]);
        let r = posterior_mode(&m, &d, &[3.0]).unwrap();
        let (mu, s2) = m.conjugate_posterior(&d);
        assert!((r.theta_hat[0] - mu).abs() <= 1e-10);
        assert!((r.theta_hat[0] - 0.999_950_002_5).abs() < 1e-9);
        let la = laplace_approx(&m, &d, &r).unwrap();
        assert!(((la.covariance[(0, 0)] - s2) / s2).abs() <= 1e-10);
    }

    #[test]
    fn flat_laplace_variance() {
        let m = ConjugateNormalModel::flat(1.0).unwrap();
        let d = data(&[0.2, -0.4, 1.0, 3.0]);
        let r = find_mode(&m, &d, &ModeConfig::default()).unwrap();
        let la = laplace_approx(&m, &d, &r).unwrap();
        assert!((la.covariance[(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fd_only_model_finds_mode() {
        let base = ConjugateNormalModel::new(2.0, 1.0, 3.0).unwrap();
        let def = ModelDefinition::new(
            "fd-normal",
            1,
            move |d, th, i| base.loglik_i(d, th, i),
            move |th| base.logprior(th),
            true,
        )
        .unwrap();
        let d = data(&[0.1, 0.9, 2.2, -0.3]);
        let r = posterior_mode(&def, &d, &[0.0]).unwrap();
        let (mu, _) = base.conjugate_posterior(&d);
        assert!(r.converged, "{r:?}");
        assert!((r.theta_hat[0] - mu).abs() < 1e-7);
    }

    #[test]
    fn out_of_support_init_is_rejected() {
        let m = HierLogitModel::new(2, Hyperprior::default()).unwrap();
        let d = ObservationSet::binomial(vec![3, 4], vec![10, 10]).unwrap();
        assert!(matches!(
            posterior_mode(&m, &d, &[0.0, 0.0, 0.0, -1.0]),
            Err(Error::OutOfSupport { coord: 3, .. })
        ));
    }

    #[test]
    fn hier_logit_mode_is_stationary() {
        let m = HierLogitModel::new(5, Hyperprior::default()).unwrap();
        let d = ObservationSet::binomial(vec![10, 25, 31, 40, 18], vec![50; 5]).unwrap();
        let r = find_mode(&m, &d, &ModeConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.grad_norm <= 1e-8 * r.logpost.abs().max(1.0));
        assert!(r.theta_hat[6] > 0.0);
    }
}
