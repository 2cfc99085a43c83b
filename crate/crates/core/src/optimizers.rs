//! Update rules: natural-parameter SGD, CVI, VOGN and Bayes-by-Backprop with Adam.
//!
//! Every step is a pure transition from an old state to a new one. Steps that
//! would leave Ω are rejected and retried with the step size halved.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{FlatVec, NaturalParams};
use crate::gradients::{BbbGradient, BbbParams};

/// Maximum number of step-size halvings before a step is declared failed.
pub const MAX_HALVINGS: u32 = 20;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BBB_LR: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct CviState {
    pub lam: NaturalParams,
    pub step_count: u64,
}

impl CviState {
    pub fn new(lam: NaturalParams) -> Self {
        CviState { lam, step_count: 0 }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::contract(format!(
            "step size must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// Tries `make(a)` for a = alpha, alpha/2, ... until it lands in Ω.
fn with_halving<F>(alpha: f64, lam: &NaturalParams, mut make: F) -> Result<NaturalParams>
where
    F: FnMut(f64) -> FlatVec,
{
    let mut a = alpha;
    let mut last = String::new();
    for _ in 0..=MAX_HALVINGS {
        match NaturalParams::from_flat(&make(a), lam.mode()) {
            Ok(next) => return Ok(next),
            Err(e) => last = e.to_string(),
        }
        a *= 0.5;
    }
    Err(Error::StepFailure {
        halvings: MAX_HALVINGS,
        reason: last,
    })
}

/// λ ← (1−α)λ + α(η₀ + lik_part), where `lik_part` is (N/|B|)·Σ ĝᵢ.
pub fn cvi_step(
    state: &CviState,
    prior: &NaturalParams,
    lik_part: &FlatVec,
    alpha: f64,
) -> Result<CviState> {
    check_alpha(alpha)?;
    state.lam.check_compatible(prior, "cvi_step prior")?;
    let cur = state.lam.to_flat();
    if lik_part.len() != cur.len() {
        return Err(Error::contract("likelihood part has the wrong length"));
    }
    let target = prior.to_flat() + lik_part;
    let lam = with_halving(alpha, &state.lam, |a| &cur * (1.0 - a) + &target * a)?;
    Ok(CviState {
        lam,
        step_count: state.step_count + 1,
    })
}

/// λ ← λ + ρ·∇_λL, a Euclidean step in the flat coordinates of λ.
///
/// `grad_lambda` is the gradient with respect to those flat coordinates, so
/// an off-diagonal entry already combines the (i,j) and (j,i) partials.
pub fn sgd_nat_step(state: &CviState, grad_lambda: &FlatVec, rho: f64) -> Result<CviState> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::contract(format!(
            "SGD step size must be > 0, got {rho}"
        )));
    }
    let cur = state.lam.to_flat();
    if grad_lambda.len() != cur.len() {
        return Err(Error::contract("gradient has the wrong length"));
    }
    let lam = with_halving(rho, &state.lam, |a| &cur + grad_lambda * a)?;
    Ok(CviState {
        lam,
        step_count: state.step_count + 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VognState {
    pub mean: DVector<f64>,
    pub precision_diag: DVector<f64>,
    pub step_count: u64,
}

impl VognState {
    pub fn new(mean: DVector<f64>, precision_diag: DVector<f64>) -> Result<Self> {
        if mean.len() != precision_diag.len() {
            return Err(Error::contract("mean and precision differ in length"));
        }
        if precision_diag.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::domain("precision must be strictly positive"));
        }
        Ok(VognState {
            mean,
            precision_diag,
            step_count: 0,
        })
    }

    /// Prior start: m = 0, V⁻¹ = τI.
    pub fn from_prior(d: usize, tau: f64) -> Result<Self> {
        VognState::new(DVector::zeros(d), DVector::from_element(d, tau))
    }

    pub fn to_natural(&self) -> Result<NaturalParams> {
        NaturalParams::from_mean_precision(&self.mean, &self.precision_diag)
    }
}

/// One VOGN step from batch sums Σg and Σh (h ≤ 0, e.g. Gauss–Newton).
///
/// ```text
/// V⁻¹ ← (1−α)V⁻¹ + α(τ − s·Σh)
/// m   ← m − α(τm − s·Σg) / V⁻¹       with s = N / batch_size
/// ```
#[allow(clippy::too_many_arguments)]
pub fn vogn_step(
    state: &VognState,
    tau: f64,
    batch_grad: &DVector<f64>,
    batch_hess_diag: &DVector<f64>,
    n_total: usize,
    batch_size: usize,
    alpha: f64,
) -> Result<VognState> {
    check_alpha(alpha)?;
    let d = state.mean.len();
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::contract(format!("tau must be > 0, got {tau}")));
    }
    if batch_grad.len() != d || batch_hess_diag.len() != d {
        return Err(Error::contract("batch gradient/Hessian length mismatch"));
    }
    if let Some(k) = batch_hess_diag.iter().position(|h| *h > 0.0) {
        return Err(Error::contract(format!(
            "Hessian diagonal entry {k} is positive ({}); Gauss-Newton requires h ≤ 0",
            batch_hess_diag[k]
        )));
    }
    if batch_size == 0 && n_total > 0 {
        return Err(Error::contract("empty minibatch with N_total > 0"));
    }
    let s = if n_total == 0 {
        0.0
    } else {
        n_total as f64 / batch_size as f64
    };
    let precision_diag = DVector::from_fn(d, |j, _| {
        (1.0 - alpha) * state.precision_diag[j] + alpha * (tau - s * batch_hess_diag[j])
    });
    let mean = DVector::from_fn(d, |j, _| {
        state.mean[j] - alpha * (tau * state.mean[j] - s * batch_grad[j]) / precision_diag[j]
    });
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("VOGN mean became non-finite"));
    }
    Ok(VognState {
        mean,
        precision_diag,
        step_count: state.step_count + 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: DVector<f64>,
    pub second_moment: DVector<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(p: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::contract("Adam betas must lie in [0, 1)"));
        }
        if !(eps > 0.0 && lr > 0.0) {
            return Err(Error::contract("Adam needs eps > 0 and lr > 0"));
        }
        Ok(AdamState {
            first_moment: DVector::zeros(p),
            second_moment: DVector::zeros(p),
            step_count: 0,
            lr,
            beta1,
            beta2,
            eps,
        })
    }

    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn with_defaults(p: usize, lr: f64) -> Result<Self> {
        AdamState::new(p, lr, 0.9, 0.999, 1e-8)
    }

    /// Bias-corrected Adam; returns the new state and the additive update.
    pub fn step(&self, grad: &DVector<f64>) -> Result<(AdamState, DVector<f64>)> {
        if grad.len() != self.first_moment.len() {
            return Err(Error::contract("Adam gradient length mismatch"));
        }
        let t = self.step_count + 1;
        let m = &self.first_moment * self.beta1 + grad * (1.0 - self.beta1);
        let v = &self.second_moment * self.beta2 + grad.map(|g| g * g) * (1.0 - self.beta2);
        let c1 = 1.0 - self.beta1.powi(t as i32);
        let c2 = 1.0 - self.beta2.powi(t as i32);
        let update = DVector::from_fn(m.len(), |j, _| {
            -self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps)
        });
        let next = AdamState {
            first_moment: m,
            second_moment: v,
            step_count: t,
            ..self.clone()
        };
        Ok((next, update))
    }
}

/// Adam descent on the negative ELBO over (m, ρ), stacked as [m; ρ].
pub fn bbb_adam_step(
    params: &BbbParams,
    grad: &BbbGradient,
    adam: &AdamState,
) -> Result<(BbbParams, AdamState)> {
    let d = params.dim();
    if grad.d_mean.len() != d || grad.d_rho.len() != d {
        return Err(Error::contract("BBB gradient length mismatch"));
    }
    let stacked =
        DVector::from_iterator(2 * d, grad.d_mean.iter().chain(grad.d_rho.iter()).copied());
    let (next, upd) = adam.step(&stacked)?;
    let out = BbbParams {
        mean: &params.mean + upd.rows(0, d),
        rho: &params.rho + upd.rows(d, d),
    };
    Ok((out, next))
}

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Constant {
        alpha0: f64,
    },
    /// α₀ / (1 + γt).
    Decay {
        alpha0: f64,
        gamma: f64,
    },
}

impl Schedule {
    pub fn alpha(&self, t: u64) -> f64 {
        match *self {
            Schedule::Constant { alpha0 } => alpha0,
            Schedule::Decay { alpha0, gamma } => alpha0 / (1.0 + gamma * t as f64),
        }
    }

    pub fn alpha0(&self) -> f64 {
        match *self {
            Schedule::Constant { alpha0 } | Schedule::Decay { alpha0, .. } => alpha0,
        }
    }

    /// α₀ ∈ (0, 1] and γ ≥ 0, as required by the convex-combination updates.
    pub fn validate_unit(&self) -> Result<()> {
        let a = self.alpha0();
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!("alpha0 must lie in (0, 1], got {a}")));
        }
        self.validate_decay()
    }

    pub fn validate_positive(&self) -> Result<()> {
        let a = self.alpha0();
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("step size must be > 0, got {a}")));
        }
        self.validate_decay()
    }

    fn validate_decay(&self) -> Result<()> {
        if let Schedule::Decay { gamma, .. } = *self {
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(Error::Config(format!(
                    "decay gamma must be ≥ 0, got {gamma}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant {
            alpha0: DEFAULT_ALPHA,
        }
    }
}
