use std::sync::Arc;

use nalgebra::DVector;

use super::{Bound, Model, ObservationSet};
use crate::error::{Error, Result};

type LoglikFn = dyn Fn(&ObservationSet, &[f64], usize) -> f64 + Send + Sync;
type PriorFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type TermGradFn = dyn Fn(&ObservationSet, &[f64], usize) -> DVector<f64> + Send + Sync;
type PriorGradFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;
type InitFn = dyn Fn(&ObservationSet) -> Vec<f64> + Send + Sync;

/// A model assembled from closures.
#[derive(Clone)]
pub struct ModelDefinition {
    name: String,
    dim: usize,
    support: Vec<Bound>,
    loglik: Arc<LoglikFn>,
    logprior: Arc<PriorFn>,
    prior_proper: bool,
    loglik_grad: Option<Arc<TermGradFn>>,
    logprior_grad: Option<Arc<PriorGradFn>>,
    init: Arc<InitFn>,
}

impl std::fmt::Debug for ModelDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelDefinition")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("prior_proper", &self.prior_proper)
            .field("analytic_grad", &self.loglik_grad.is_some())
            .finish()
    }
}

impl ModelDefinition {
    pub fn new<L, P>(name: &str, dim: usize, loglik: L, logprior: P, prior_proper: bool) -> Result<Self>
    where
        L: Fn(&ObservationSet, &[f64], usize) -> f64 + Send + Sync + 'static,
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::Invalid("model dimension must be positive".into()));
        }
        Ok(Self {
            name: name.to_string(),
            dim,
            support: vec![Bound::Real; dim],
            loglik: Arc::new(loglik),
            logprior: Arc::new(logprior),
            prior_proper,
            loglik_grad: None,
            logprior_grad: None,
            init: Arc::new(move |_| vec![0.0; dim]),
        })
    }

    pub fn with_support(mut self, support: Vec<Bound>) -> Result<Self> {
        if support.len() != self.dim {
            return Err(Error::Invalid("support length does not match dimension".into()));
        }
        self.support = support;
        Ok(self)
    }

    /// Analytic gradients of log g(yᵢ|θ) and log π(θ).
    pub fn with_gradients<G, H>(mut self, loglik_grad: G, logprior_grad: H) -> Self
    where
        G: Fn(&ObservationSet, &[f64], usize) -> DVector<f64> + Send + Sync + 'static,
        H: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        self.loglik_grad = Some(Arc::new(loglik_grad));
        self.logprior_grad = Some(Arc::new(logprior_grad));
        self
    }

    pub fn with_initial_point(mut self, init: Vec<f64>) -> Self {
        self.init = Arc::new(move |_| init.clone());
        self
    }

    /// Wraps any model, exposing only its log-densities and gradients.
    pub fn from_model<M: Model + Clone + Send + 'static>(model: &M) -> Self {
        let (a, b, c, d, e) = (model.clone(), model.clone(), model.clone(), model.clone(), model.clone());
        let mut def = Self::new(
            model.name(),
            model.dim(),
            move |data, th, i| a.loglik_i(data, th, i),
            move |th| b.logprior(th),
            model.prior_proper(),
        )
        .expect("positive dimension");
        def.support = model.support();
        if model.has_analytic_derivatives() {
            def = def.with_gradients(
                move |data, th, i| c.loglik_grad_i(data, th, i).expect("analytic gradient"),
                move |th| d.logprior_grad(th).expect("analytic gradient"),
            );
        }
        def.init = Arc::new(move |data| e.initial_point(data));
        def
    }
}

impl Model for ModelDefinition {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn support(&self) -> Vec<Bound> {
        self.support.clone()
    }

    fn validate(&self, _data: &ObservationSet) -> Result<()> {
        Ok(())
    }

    fn loglik_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> f64 {
        (self.loglik)(data, theta, i)
    }

    fn logprior(&self, theta: &[f64]) -> f64 {
        (self.logprior)(theta)
    }

    fn prior_proper(&self) -> bool {
        self.prior_proper
    }

    fn loglik_grad_i(&self, data: &ObservationSet, theta: &[f64], i: usize) -> Option<DVector<f64>> {
        self.loglik_grad.as_ref().map(|g| g(data, theta, i))
    }

    fn logprior_grad(&self, theta: &[f64]) -> Option<DVector<f64>> {
        self.logprior_grad.as_ref().map(|g| g(theta))
    }

    fn initial_point(&self, data: &ObservationSet) -> Vec<f64> {
        (self.init)(data)
    }
}
