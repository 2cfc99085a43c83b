use nalgebra::{DMatrix, DVector};

use super::{bernoulli_logit, dot, sigmoid, Example, GlmLink, LikelihoodModel};

/// Bayesian logistic regression, y ∈ {0, 1}, p(y=1 | x, z) = σ(zᵀx).
#[derive(Debug, Clone)]
pub struct Logistic {
    dim: usize,
}

impl Logistic {
    pub fn new(dim: usize) -> Self {
        Logistic { dim }
    }
}

impl GlmLink for Logistic {
    fn derivatives(&self, a: f64, y: f64) -> (f64, f64, f64) {
        let s = sigmoid(a);
        (bernoulli_logit(a, y), y - s, -s * (1.0 - s))
    }
}

impl LikelihoodModel for Logistic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_lik(&self, z: &[f64], ex: &Example) -> f64 {
        bernoulli_logit(dot(z, &ex.features), ex.target)
    }

    fn grad(&self, z: &[f64], ex: &Example) -> DVector<f64> {
        let r = ex.target - sigmoid(dot(z, &ex.features));
        DVector::from_iterator(self.dim, ex.features.iter().map(|x| r * x))
    }

    fn predict_prob(&self, z: &[f64], x: &[f64]) -> f64 {
        sigmoid(dot(z, x))
    }

    fn exact_hess_diag(&self, z: &[f64], ex: &Example) -> Option<DVector<f64>> {
        let s = sigmoid(dot(z, &ex.features));
        let w = s * (1.0 - s);
        Some(DVector::from_iterator(
            self.dim,
            ex.features.iter().map(|x| -w * x * x),
        ))
    }

    fn exact_hessian(&self, z: &[f64], ex: &Example) -> Option<DMatrix<f64>> {
        let s = sigmoid(dot(z, &ex.features));
        let x = DVector::from_column_slice(&ex.features);
        Some(&x * x.transpose() * (-s * (1.0 - s)))
    }

    fn glm(&self) -> Option<&dyn GlmLink> {
        Some(self)
    }
}
