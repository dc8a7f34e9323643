//! Central finite differences and analytic-derivative verification.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{term_grad, term_hess, Model, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffConfig {
    /// Gradient step, scaled per coordinate by max(1, |θⱼ|).
    pub rel_step: f64,
    /// Step of the second-order stencil used when no gradient is available.
    pub hess_rel_step: f64,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            rel_step: f64::EPSILON.cbrt(),
            hess_rel_step: f64::EPSILON.powf(0.25),
        }
    }
}

fn step(rel: f64, x: f64) -> f64 {
    let h = rel * x.abs().max(1.0);
    // make x + h exactly representable so the differenced step is h
    (x + h) - x
}

/// Central-difference gradient of `f` at `theta`.
pub fn grad_fd<F>(f: F, theta: &[f64], cfg: &DiffConfig) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    central_gradient(&f, theta, cfg.rel_step)
}

fn central_gradient<F>(f: &F, theta: &[f64], rel: f64) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = theta.to_vec();
    let mut g = DVector::zeros(theta.len());
    for j in 0..theta.len() {
        let h = step(rel, theta[j]);
        x[j] = theta[j] + h;
        let up = f(&x);
        x[j] = theta[j] - h;
        let down = f(&x);
        x[j] = theta[j];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFiniteDifference { coord: j, step: h });
        }
        g[j] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// Hessian of `f` from the second-order central stencil.
pub fn hess_fd<F>(f: F, theta: &[f64], cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let p = theta.len();
    let hs: Vec<f64> = theta.iter().map(|&t| step(cfg.hess_rel_step, t)).collect();
    let mut x = theta.to_vec();
    let f0 = f(&x);
    if !f0.is_finite() {
        return Err(Error::NonFiniteDifference { coord: 0, step: 0.0 });
    }
    let eval = |x: &[f64], coord: usize, step: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteDifference { coord, step })
        }
    };
    let mut h_mat = DMatrix::zeros(p, p);
    for j in 0..p {
        let hj = hs[j];
        x[j] = theta[j] + hj;
        let up = eval(&x, j, hj)?;
        x[j] = theta[j] - hj;
        let down = eval(&x, j, hj)?;
        x[j] = theta[j];
        h_mat[(j, j)] = (up - 2.0 * f0 + down) / (hj * hj);
        for k in 0..j {
            let hk = hs[k];
            let mut corner = |sj: f64, sk: f64| {
                x[j] = theta[j] + sj * hj;
                x[k] = theta[k] + sk * hk;
                let v = eval(&x, j, hj);
                x[j] = theta[j];
                x[k] = theta[k];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * hj * hk);
            h_mat[(j, k)] = v;
            h_mat[(k, j)] = v;
        }
    }
    Ok(h_mat)
}

/// Hessian from central differences of an analytic gradient.
pub fn hess_fd_from_grad<G>(grad: G, theta: &[f64], cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> DVector<f64>,
{
    hess_from_grad(|x| Ok(grad(x)), theta, cfg.rel_step)
}

fn hess_from_grad<G>(grad: G, theta: &[f64], rel: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let p = theta.len();
    let mut x = theta.to_vec();
    let mut h_mat = DMatrix::zeros(p, p);
    for j in 0..p {
        let h = step(rel, theta[j]);
        x[j] = theta[j] + h;
        let up = grad(&x)?;
        x[j] = theta[j] - h;
        let down = grad(&x)?;
        x[j] = theta[j];
        let col = (up - down) / (2.0 * h);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDifference { coord: j, step: h });
        }
        h_mat.set_column(j, &col);
    }
    Ok((&h_mat + h_mat.transpose()) * 0.5)
}

/// log g(yᵢ|θ) + (1/n) log π(θ), the per-observation term of the weighted posterior.
pub fn term_value<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64], i: usize) -> f64 {
    model.loglik_i(data, theta, i) + model.logprior(theta) / data.n() as f64
}

/// Outcome of comparing analytic against finite-difference derivatives.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub max_rel_err: f64,
    pub worst_observation: usize,
    pub worst_coordinate: usize,
    pub tolerance: f64,
    pub pass: bool,
}

pub const CHECK_TOLERANCE: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn update(best: &mut (f64, usize, usize), err: f64, i: usize, j: usize) {
    if err > best.0 || err.is_nan() {
        *best = (if err.is_nan() { f64::INFINITY } else { err }, i, j);
    }
}

fn finish(best: (f64, usize, usize)) -> DerivativeCheck {
    DerivativeCheck {
        max_rel_err: best.0,
        worst_observation: best.1,
        worst_coordinate: best.2,
        tolerance: CHECK_TOLERANCE,
        pass: best.0 <= CHECK_TOLERANCE,
    }
}

/// Compares the analytic per-observation gradients against [`grad_fd`].
pub fn check_gradient<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Result<DerivativeCheck> {
    let cfg = DiffConfig::default();
    let mut best = (0.0, 0, 0);
    for i in data.active() {
        let analytic = term_grad(model, data, theta, i)
            .ok_or_else(|| Error::UnsupportedModel(format!("{} has no analytic gradient", model.name())))?;
        let fd = grad_fd(|x| term_value(model, data, x, i), theta, &cfg)?;
        for j in 0..theta.len() {
            update(&mut best, rel_err(analytic[j], fd[j]), i, j);
        }
    }
    Ok(finish(best))
}

/// Compares the analytic per-observation Hessians against differences of the
/// analytic gradient.
pub fn check_hessian<M: Model + ?Sized>(model: &M, data: &ObservationSet, theta: &[f64]) -> Result<DerivativeCheck> {
    let cfg = DiffConfig::default();
    let mut best = (0.0, 0, 0);
    for i in data.active() {
        let analytic = term_hess(model, data, theta, i)
            .ok_or_else(|| Error::UnsupportedModel(format!("{} has no analytic Hessian", model.name())))?;
        let fd = hess_fd_from_grad(|x| term_grad(model, data, x, i).expect("analytic gradient"), theta, &cfg)?;
        for j in 0..theta.len() {
            for k in 0..theta.len() {
                update(&mut best, rel_err(analytic[(j, k)], fd[(j, k)]), i, j * theta.len() + k);
            }
        }
    }
    Ok(finish(best))
}
