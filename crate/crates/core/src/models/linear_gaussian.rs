use nalgebra::{DMatrix, DVector};

use super::{dot, Example, GlmLink, LikelihoodModel};
use crate::error::{Error, Result};
use crate::expfam::{Mode, NaturalParams, SymBlock};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// y ~ N(zᵀx, σ²ₙ). The conjugate control case: posteriors are closed-form.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    dim: usize,
    noise_var: f64,
}

impl LinearGaussian {
    pub fn new(dim: usize, noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::contract(format!(
                "noise variance must be > 0, got {noise_var}"
            )));
        }
        Ok(LinearGaussian { dim, noise_var })
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Natural-parameter contribution of one observation: (xy/σ², −xxᵀ/(2σ²)).
    pub fn site_contribution(&self, ex: &Example, mode: Mode) -> (DVector<f64>, SymBlock) {
        let x = DVector::from_column_slice(&ex.features);
        let l1 = &x * (ex.target / self.noise_var);
        let l2 = match mode {
            Mode::Full => SymBlock::Full(&x * x.transpose() * (-0.5 / self.noise_var)),
            Mode::Diagonal => SymBlock::Diag(x.component_mul(&x) * (-0.5 / self.noise_var)),
        };
        (l1, l2)
    }

    /// Exact posterior η₀ + Σᵢ contributions (full-covariance prior only).
    pub fn posterior(&self, prior: &NaturalParams, data: &[Example]) -> Result<NaturalParams> {
        let mut l1 = prior.lambda1().clone();
        let mut l2 = prior.lambda2().to_dense();
        if prior.mode() != Mode::Full {
            return Err(Error::contract(
                "exact posterior of a correlated likelihood needs full mode",
            ));
        }
        for ex in data {
            let (a, b) = self.site_contribution(ex, Mode::Full);
            l1 += a;
            l2 += b.to_dense();
        }
        NaturalParams::new(l1, SymBlock::Full(l2))
    }
}

impl GlmLink for LinearGaussian {
    fn derivatives(&self, a: f64, y: f64) -> (f64, f64, f64) {
        let r = y - a;
        (
            -0.5 * (LN_2PI + self.noise_var.ln()) - 0.5 * r * r / self.noise_var,
            r / self.noise_var,
            -1.0 / self.noise_var,
        )
    }
}

impl LikelihoodModel for LinearGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_lik(&self, z: &[f64], ex: &Example) -> f64 {
        self.derivatives(dot(z, &ex.features), ex.target).0
    }

    fn grad(&self, z: &[f64], ex: &Example) -> DVector<f64> {
        let r = (ex.target - dot(z, &ex.features)) / self.noise_var;
        DVector::from_iterator(self.dim, ex.features.iter().map(|x| r * x))
    }

    /// P(y > 0 | x, z).
    fn predict_prob(&self, z: &[f64], x: &[f64]) -> f64 {
        let t = dot(z, x) / self.noise_var.sqrt();
        0.5 * erfc(-t / std::f64::consts::SQRT_2)
    }

    fn exact_hess_diag(&self, _z: &[f64], ex: &Example) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            self.dim,
            ex.features.iter().map(|x| -x * x / self.noise_var),
        ))
    }

    fn exact_hessian(&self, _z: &[f64], ex: &Example) -> Option<DMatrix<f64>> {
        let x = DVector::from_column_slice(&ex.features);
        Some(&x * x.transpose() * (-1.0 / self.noise_var))
    }

    fn glm(&self) -> Option<&dyn GlmLink> {
        Some(self)
    }
}

/// Complementary error function, Chebyshev fit with relative error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87
                                        + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
