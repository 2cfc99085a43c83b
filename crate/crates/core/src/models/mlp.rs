use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{bernoulli_logit, sigmoid, Example, LikelihoodModel};
use crate::error::{Error, Result};

/// Single hidden layer, ReLU, one output logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_units: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_units: usize) -> Result<Self> {
        if input_dim == 0 || hidden_units == 0 {
            return Err(Error::contract(
                "MLP needs input_dim ≥ 1 and hidden_units ≥ 1",
            ));
        }
        Ok(MlpArchitecture {
            input_dim,
            hidden_units,
        })
    }

    /// D = (input_dim + 1)·hidden + hidden + 1.
    pub fn param_dim(&self) -> usize {
        (self.input_dim + 1) * self.hidden_units + self.hidden_units + 1
    }

    /// Uniform in ±1/√fan_in per layer.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let (i, h) = (self.input_dim, self.hidden_units);
        let a1 = 1.0 / (i as f64).sqrt();
        let a2 = 1.0 / (h as f64).sqrt();
        let mut z = Vec::with_capacity(self.param_dim());
        for _ in 0..(i * h + h) {
            z.push(rng.random_range(-a1..=a1));
        }
        for _ in 0..(h + 1) {
            z.push(rng.random_range(-a2..=a2));
        }
        DVector::from_vec(z)
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.input_dim * self.hidden_units;
        let b1 = w1 + self.hidden_units;
        let w2 = b1 + self.hidden_units;
        (w1, b1, w2)
    }
}

/// Unpacked network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// hidden × input, row k holds unit k's incoming weights.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn decode(arch: &MlpArchitecture, z: &[f64]) -> Result<Self> {
        if z.len() != arch.param_dim() {
            return Err(Error::contract(format!(
                "expected {} MLP parameters, got {}",
                arch.param_dim(),
                z.len()
            )));
        }
        let (o_b1, o_w2, o_b2) = arch.offsets();
        let w1 = z[..o_b1]
            .chunks(arch.input_dim)
            .map(|row| row.to_vec())
            .collect();
        Ok(MlpParams {
            w1,
            b1: z[o_b1..o_w2].to_vec(),
            w2: z[o_w2..o_b2].to_vec(),
            b2: z[o_b2],
        })
    }

    pub fn encode(&self) -> DVector<f64> {
        let mut z: Vec<f64> = self.w1.iter().flatten().copied().collect();
        z.extend(&self.b1);
        z.extend(&self.w2);
        z.push(self.b2);
        DVector::from_vec(z)
    }
}

/// Bernoulli-logit likelihood through the MLP, gradients by manual backprop.
#[derive(Debug, Clone)]
pub struct Mlp {
    arch: MlpArchitecture,
}

struct Forward {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logit: f64,
}

impl Mlp {
    pub fn new(arch: MlpArchitecture) -> Self {
        Mlp { arch }
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    fn forward(&self, z: &[f64], x: &[f64]) -> Forward {
        let (i, h) = (self.arch.input_dim, self.arch.hidden_units);
        debug_assert_eq!(z.len(), self.arch.param_dim());
        let (o_b1, o_w2, o_b2) = self.arch.offsets();
        let mut pre = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        let mut logit = z[o_b2];
        for k in 0..h {
            let row = &z[k * i..(k + 1) * i];
            let a = z[o_b1 + k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            pre[k] = a;
            hidden[k] = a.max(0.0);
            logit += z[o_w2 + k] * hidden[k];
        }
        Forward { pre, hidden, logit }
    }

    pub fn logit(&self, z: &[f64], x: &[f64]) -> f64 {
        self.forward(z, x).logit
    }

    /// Log-likelihood and its gradient in one forward/backward pass.
    pub fn log_lik_and_grad(&self, z: &[f64], ex: &Example) -> (f64, DVector<f64>) {
        let (i, h) = (self.arch.input_dim, self.arch.hidden_units);
        let (o_b1, o_w2, o_b2) = self.arch.offsets();
        let fwd = self.forward(z, &ex.features);
        let delta = ex.target - sigmoid(fwd.logit);
        let mut g = DVector::zeros(self.arch.param_dim());
        g[o_b2] = delta;
        for k in 0..h {
            g[o_w2 + k] = delta * fwd.hidden[k];
            // ReLU subgradient at exactly 0 is 0
            if fwd.pre[k] > 0.0 {
                let dk = delta * z[o_w2 + k];
                g[o_b1 + k] = dk;
                for (j, xj) in ex.features.iter().enumerate() {
                    g[k * i + j] = dk * xj;
                }
            }
        }
        (bernoulli_logit(fwd.logit, ex.target), g)
    }
}

impl LikelihoodModel for Mlp {
    fn dim(&self) -> usize {
        self.arch.param_dim()
    }

    fn log_lik(&self, z: &[f64], ex: &Example) -> f64 {
        bernoulli_logit(self.logit(z, &ex.features), ex.target)
    }

    fn grad(&self, z: &[f64], ex: &Example) -> DVector<f64> {
        self.log_lik_and_grad(z, ex).1
    }

    fn predict_prob(&self, z: &[f64], x: &[f64]) -> f64 {
        sigmoid(self.logit(z, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::HessianMode;

    #[test]
    fn parameter_count() {
        let arch = MlpArchitecture::new(14, 64).unwrap();
        assert_eq!(arch.param_dim(), 15 * 64 + 64 + 1);
        assert_eq!(MlpArchitecture::new(1, 1).unwrap().param_dim(), 4);
    }

    #[test]
    fn zero_weights_give_half() {
        let m = Mlp::new(MlpArchitecture::new(3, 5).unwrap());
        let z = vec![0.0; m.dim()];
        let ex = Example::new(vec![1.0, -2.0, 0.5], 1.0);
        assert_eq!(m.logit(&z, &ex.features), 0.0);
        assert!((m.log_lik(&z, &ex) + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hand_derived_single_unit() {
        // layout: w1, b1, w2, b2
        let m = Mlp::new(MlpArchitecture::new(1, 1).unwrap());
        let (w1, b1, w2, b2) = (0.8, 0.1, -1.5, 0.3);
        let z = [w1, b1, w2, b2];
        let x = 2.0;
        let ex = Example::new(vec![x], 1.0);
        let pre: f64 = w1 * x + b1; // 1.7 > 0
        let logit = w2 * pre + b2;
        let delta = 1.0 - sigmoid(logit);
        let expected = [delta * w2 * x, delta * w2, delta * pre, delta];
        let g = m.grad(&z, &ex);
        for k in 0..4 {
            assert!((g[k] - expected[k]).abs() < 1e-15, "k={k}");
        }
    }

    #[test]
    fn inactive_unit_has_no_gradient() {
        let m = Mlp::new(MlpArchitecture::new(1, 1).unwrap());
        let z = [-1.0, 0.0, 2.0, 0.0];
        let g = m.grad(&z, &Example::new(vec![1.0], 0.0));
        assert_eq!((g[0], g[1], g[2]), (0.0, 0.0, 0.0));
        assert_eq!(g[3], -0.5);
    }

    #[test]
    fn gauss_newton_is_nonpositive_and_zero_at_zero_gradient() {
        let m = Mlp::new(MlpArchitecture::new(1, 1).unwrap());
        let z = [-1.0, 0.0, 2.0, 0.0];
        let h = m
            .hess_diag(&z, &Example::new(vec![1.0], 0.0), HessianMode::GaussNewton)
            .unwrap();
        assert!(h.iter().all(|v| *v <= 0.0));
        assert_eq!(h[3], -0.25);
        // label 1 at a huge positive logit: gradient underflows to zero
        let z = [0.0, 0.0, 0.0, 800.0];
        let h = m
            .hess_diag(&z, &Example::new(vec![1.0], 1.0), HessianMode::GaussNewton)
            .unwrap();
        assert_eq!(h, DVector::zeros(4));
        assert!(m
            .hess_diag(&z, &Example::new(vec![1.0], 1.0), HessianMode::Exact)
            .is_err());
    }

    #[test]
    fn packing_roundtrip() {
        let arch = MlpArchitecture::new(3, 4).unwrap();
        let z = DVector::from_fn(arch.param_dim(), |i, _| i as f64 * 0.5 - 3.0);
        let p = MlpParams::decode(&arch, z.as_slice()).unwrap();
        assert_eq!(p.w1.len(), 4);
        assert_eq!(p.w1[1], vec![1.5 - 3.0, 2.0 - 3.0, 2.5 - 3.0]);
        assert_eq!(p.encode(), z);
        assert!(MlpParams::decode(&arch, &[0.0; 3]).is_err());
    }
}
