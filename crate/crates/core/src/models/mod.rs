//! Likelihood models p(Dᵢ | z).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod linear_gaussian;
mod logistic;
mod mlp;

pub use linear_gaussian::LinearGaussian;
pub use logistic::Logistic;
pub use mlp::{Mlp, MlpArchitecture, MlpParams};

/// One data point (xᵢ, yᵢ).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Example {
    pub fn new(features: Vec<f64>, target: f64) -> Self {
        Example { features, target }
    }
}

/// How per-example curvature is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Analytic second derivatives.
    Exact,
    /// Generalized Gauss-Newton: −g∘g (diagonal) or −ggᵀ (dense), first-order only.
    GaussNewton,
}

/// Scalar likelihood of a generalized linear model in the linear predictor a = zᵀx.
pub trait GlmLink: Send + Sync {
    /// (log p(y|a), ∂/∂a, ∂²/∂a²)
    fn derivatives(&self, a: f64, y: f64) -> (f64, f64, f64);
}

pub trait LikelihoodModel: Send + Sync {
    /// Parameter dimension D.
    fn dim(&self) -> usize;

    fn log_lik(&self, z: &[f64], ex: &Example) -> f64;

    fn grad(&self, z: &[f64], ex: &Example) -> DVector<f64>;

    /// Probability that the label is 1.
    fn predict_prob(&self, z: &[f64], x: &[f64]) -> f64;

    /// Analytic diagonal of the per-example Hessian, if the model has one.
    fn exact_hess_diag(&self, _z: &[f64], _ex: &Example) -> Option<DVector<f64>> {
        None
    }

    /// Analytic per-example Hessian, if the model has one.
    fn exact_hessian(&self, _z: &[f64], _ex: &Example) -> Option<DMatrix<f64>> {
        None
    }

    /// Set for GLMs, enabling exact Gaussian expectations by 1-D quadrature.
    fn glm(&self) -> Option<&dyn GlmLink> {
        None
    }

    fn hess_diag(&self, z: &[f64], ex: &Example, mode: HessianMode) -> Result<DVector<f64>> {
        match mode {
            HessianMode::Exact => self
                .exact_hess_diag(z, ex)
                .ok_or_else(|| Error::contract("model has no exact Hessian")),
            HessianMode::GaussNewton => {
                let g = self.grad(z, ex);
                Ok(-g.component_mul(&g))
            }
        }
    }

    fn hessian(&self, z: &[f64], ex: &Example, mode: HessianMode) -> Result<DMatrix<f64>> {
        match mode {
            HessianMode::Exact => self
                .exact_hessian(z, ex)
                .ok_or_else(|| Error::contract("model has no exact Hessian")),
            HessianMode::GaussNewton => {
                let g = self.grad(z, ex);
                Ok(-(&g * g.transpose()))
            }
        }
    }

    /// Gradient and Hessian diagonal at the same z; the Gauss-Newton branch reuses g.
    fn grad_hess_diag(
        &self,
        z: &[f64],
        ex: &Example,
        mode: HessianMode,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let g = self.grad(z, ex);
        let h = match mode {
            HessianMode::GaussNewton => -g.component_mul(&g),
            HessianMode::Exact => self.hess_diag(z, ex, mode)?,
        };
        Ok((g, h))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// log(1 + eᵃ), stable for large |a|.
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// log σ(a) = −softplus(−a).
pub fn log_sigmoid(a: f64) -> f64 {
    -softplus(-a)
}

/// Bernoulli-logit log-likelihood y·log σ(a) + (1−y)·log σ(−a).
pub(crate) fn bernoulli_logit(a: f64, y: f64) -> f64 {
    y * log_sigmoid(a) + (1.0 - y) * log_sigmoid(-a)
}
