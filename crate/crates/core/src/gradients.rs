//! Stochastic and exact gradient estimators for the ELBO.
//!
//! For a Gaussian q with mean m, the expectation-parameter gradients of an
//! expected log-likelihood follow from Bonnet's and Price's theorems:
//!
//! ```text
//! ∇_{μ₁} E_q[log p] = E_q[g] − E_q[H] m
//! ∇_{μ₂} E_q[log p] = ½ E_q[H]
//! ```
//!
//! with g, H the gradient and Hessian of log p at z ~ q. With these, the
//! natural gradient of the ELBO is η₀ − λ + Σᵢ ∇_μ E_q[log p(Dᵢ|z)], and the
//! CVI update yields the Newton-like precision recursion
//! V⁻¹ ← (1−α)V⁻¹ + α(τI − N·E[H]).
//!
//! Expectations come either from Monte Carlo (g and H share the same draws)
//! or, for GLM likelihoods, from Gauss–Hermite quadrature over the scalar
//! linear predictor a = zᵀx ~ N(mᵀx, xᵀVx), which is exact up to quadrature
//! error and sample-free.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{
    fisher_vector_product, kl_divergence, nat_to_moment, FlatVec, Mode, NaturalParams, Sampler,
    SymBlock,
};
use crate::models::{sigmoid, softplus, Example, HessianMode, LikelihoodModel};
use crate::quadrature::GaussHermite;

/// How Gaussian expectations are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Integrator {
    MonteCarlo,
    /// Exact for GLM likelihoods; errors for models without a scalar link.
    GaussHermite {
        nodes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub n_mc: usize,
    pub hessian_mode: HessianMode,
    pub seed: u64,
    pub integrator: Integrator,
}

impl EstimatorConfig {
    pub fn monte_carlo(n_mc: usize, hessian_mode: HessianMode, seed: u64) -> Result<Self> {
        if n_mc == 0 {
            return Err(Error::contract("n_mc must be at least 1"));
        }
        Ok(EstimatorConfig {
            n_mc,
            hessian_mode,
            seed,
            integrator: Integrator::MonteCarlo,
        })
    }

    /// Sample-free expectations with exact Hessians.
    pub fn quadrature(nodes: usize) -> Self {
        EstimatorConfig {
            n_mc: 1,
            hessian_mode: HessianMode::Exact,
            seed: 0,
            integrator: Integrator::GaussHermite { nodes },
        }
    }

    /// A fresh random source seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Per-example g_i(z) and the diagonal of H_i(z).
#[derive(Debug, Clone, PartialEq)]
pub struct GradHessSample {
    g: DVector<f64>,
    h_diag: DVector<f64>,
}

impl GradHessSample {
    pub fn new(g: DVector<f64>, h_diag: DVector<f64>) -> Result<Self> {
        if g.len() != h_diag.len() {
            return Err(Error::contract(
                "gradient and Hessian diagonal differ in length",
            ));
        }
        if g.iter().chain(h_diag.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite gradient or Hessian entry"));
        }
        Ok(GradHessSample { g, h_diag })
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn h_diag(&self) -> &DVector<f64> {
        &self.h_diag
    }
}

/// Σᵢ E_q[gᵢ] and Σᵢ E_q[Hᵢ] over a batch (H diagonal or dense following q's mode).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedDerivatives {
    pub grad: DVector<f64>,
    pub hess: SymBlock,
}

/// (∇_{μ₁}, ∇_{μ₂}) of an expected log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct MuGradient {
    pub g_mu1: DVector<f64>,
    pub g_mu2: SymBlock,
}

impl MuGradient {
    pub fn from_expected(d: &ExpectedDerivatives, mean: &DVector<f64>) -> Self {
        MuGradient {
            g_mu1: &d.grad - d.hess.mul_vec(mean),
            g_mu2: d.hess.scale(0.5),
        }
    }

    pub fn mode(&self) -> Mode {
        self.g_mu2.mode()
    }

    /// Primal packing, directly addable to λ.
    pub fn to_flat(&self) -> FlatVec {
        let mut out: Vec<f64> = self.g_mu1.iter().copied().collect();
        self.g_mu2.push_packed(1.0, &mut out);
        FlatVec::from_vec(out)
    }
}

fn check_model(model: &dyn LikelihoodModel, lam: &NaturalParams) -> Result<()> {
    if model.dim() != lam.dim() {
        return Err(Error::contract(format!(
            "model dimension {} does not match distribution dimension {}",
            model.dim(),
            lam.dim()
        )));
    }
    Ok(())
}

fn linear_predictor_moments(mean: &DVector<f64>, cov: &SymBlock, x: &[f64]) -> (f64, f64) {
    let xv = DVector::from_column_slice(x);
    let a_mean = mean.dot(&xv);
    let a_var = match cov {
        SymBlock::Full(v) => xv.dot(&(v * &xv)),
        SymBlock::Diag(v) => x.iter().zip(v.iter()).map(|(xi, vi)| xi * xi * vi).sum(),
    };
    (a_mean, a_var)
}

fn add_outer(acc: &mut SymBlock, x: &[f64], c: f64) {
    match acc {
        SymBlock::Full(a) => {
            for i in 0..x.len() {
                for j in 0..x.len() {
                    a[(i, j)] += c * x[i] * x[j];
                }
            }
        }
        SymBlock::Diag(v) => {
            for (vi, xi) in v.iter_mut().zip(x) {
                *vi += c * xi * xi;
            }
        }
    }
}

/// Σ_{i∈batch} (E_q[gᵢ], E_q[Hᵢ]) with g and H evaluated at common draws.
pub fn expected_derivatives<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    batch: &[Example],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<ExpectedDerivatives> {
    check_model(model, lam)?;
    let d = lam.dim();
    let mode = lam.mode();
    let mut grad = DVector::zeros(d);
    let mut hess = SymBlock::zeros(mode, d);
    if batch.is_empty() {
        return Ok(ExpectedDerivatives { grad, hess });
    }
    match cfg.integrator {
        Integrator::GaussHermite { nodes } => {
            let link = model
                .glm()
                .ok_or_else(|| Error::contract("quadrature expectations need a GLM likelihood"))?;
            let moments = nat_to_moment(lam)?;
            let gh = GaussHermite::new(nodes);
            for (i, ex) in batch.iter().enumerate() {
                let (a_mean, a_var) =
                    linear_predictor_moments(moments.mean(), moments.cov(), &ex.features);
                let [e_d1, e_curv] = gh.expect_many(a_mean, a_var, |a| {
                    let (_, d1, d2) = link.derivatives(a, ex.target);
                    match cfg.hessian_mode {
                        HessianMode::Exact => [d1, d2],
                        HessianMode::GaussNewton => [d1, -d1 * d1],
                    }
                });
                if !(e_d1.is_finite() && e_curv.is_finite()) {
                    return Err(Error::Evaluator {
                        sample: 0,
                        example: i,
                        what: "quadrature expectation".into(),
                    });
                }
                for (gj, xj) in grad.iter_mut().zip(&ex.features) {
                    *gj += e_d1 * xj;
                }
                add_outer(&mut hess, &ex.features, e_curv);
            }
        }
        Integrator::MonteCarlo => {
            if cfg.n_mc == 0 {
                return Err(Error::contract("n_mc must be at least 1"));
            }
            let sampler = Sampler::new(lam)?;
            for s in 0..cfg.n_mc {
                let z = sampler.draw(rng);
                for (i, ex) in batch.iter().enumerate() {
                    let bad = |what: &str| Error::Evaluator {
                        sample: s,
                        example: i,
                        what: what.into(),
                    };
                    match &mut hess {
                        SymBlock::Diag(h) => {
                            let (g, hd) =
                                model.grad_hess_diag(z.as_slice(), ex, cfg.hessian_mode)?;
                            let sample =
                                GradHessSample::new(g, hd).map_err(|_| bad("gradient/Hessian"))?;
                            grad += sample.g();
                            *h += sample.h_diag();
                        }
                        SymBlock::Full(h) => {
                            let g = model.grad(z.as_slice(), ex);
                            let hm = model.hessian(z.as_slice(), ex, cfg.hessian_mode)?;
                            if g.iter().chain(hm.iter()).any(|v| !v.is_finite()) {
                                return Err(bad("gradient/Hessian"));
                            }
                            grad += g;
                            *h += hm;
                        }
                    }
                }
            }
            let inv = 1.0 / cfg.n_mc as f64;
            grad *= inv;
            hess = hess.scale(inv);
        }
    }
    Ok(ExpectedDerivatives { grad, hess })
}

/// Σ_{i∈batch} ∇_μ E_q[log p(Dᵢ|z)] at μ = μ(λ).
pub fn mu_gradient_mc<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    batch: &[Example],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<MuGradient> {
    let derivs = expected_derivatives(model, lam, batch, cfg, rng)?;
    let mean = nat_to_moment(lam)?.mean().clone();
    Ok(MuGradient::from_expected(&derivs, &mean))
}

/// (N/|batch|)·Σ_{i∈batch} g̃ᵢ(λ): the likelihood part of the natural gradient.
pub fn likelihood_natural_part<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    batch: &[Example],
    n_total: usize,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<FlatVec> {
    check_model(model, lam)?;
    if n_total == 0 {
        return Ok(FlatVec::zeros(lam.to_flat().len()));
    }
    if batch.is_empty() {
        return Err(Error::contract("empty minibatch with N_total > 0"));
    }
    let g = mu_gradient_mc(model, lam, batch, cfg, rng)?;
    Ok(g.to_flat() * (n_total as f64 / batch.len() as f64))
}

/// η₀ − λ + (N/|batch|)·Σ_{i∈batch} g̃ᵢ(λ), primal layout.
pub fn natural_gradient_elbo<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    prior: &NaturalParams,
    batch: &[Example],
    n_total: usize,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<FlatVec> {
    lam.check_compatible(prior, "posterior and prior differ")?;
    let lik = likelihood_natural_part(model, lam, batch, n_total, cfg, rng)?;
    Ok(prior.to_flat() - lam.to_flat() + lik)
}

/// Euclidean gradient ∇_λ L = F(λ)·∇̃_λ L (dual layout).
pub fn elbo_gradient_lambda<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    prior: &NaturalParams,
    batch: &[Example],
    n_total: usize,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<FlatVec> {
    let nat = natural_gradient_elbo(model, lam, prior, batch, n_total, cfg, rng)?;
    fisher_vector_product(lam, &nat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboEstimate {
    pub value: f64,
    /// Standard error of the Monte Carlo part (0 for quadrature).
    pub std_error: f64,
}

/// −KL(q‖p) in closed form plus a Monte Carlo estimate of Σᵢ E_q[log p(Dᵢ|z)].
pub fn elbo_estimate_mc<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    prior: &NaturalParams,
    data: &[Example],
    n_mc: usize,
    rng: &mut R,
) -> Result<ElboEstimate> {
    check_model(model, lam)?;
    if n_mc == 0 {
        return Err(Error::contract("n_mc must be at least 1"));
    }
    let kl = kl_divergence(lam, prior)?;
    if data.is_empty() {
        return Ok(ElboEstimate {
            value: -kl,
            std_error: 0.0,
        });
    }
    let sampler = Sampler::new(lam)?;
    let per_sample: Vec<f64> = (0..n_mc)
        .map(|_| {
            let z = sampler.draw(rng);
            data.iter().map(|ex| model.log_lik(z.as_slice(), ex)).sum()
        })
        .collect();
    let n = n_mc as f64;
    let mean = per_sample.iter().sum::<f64>() / n;
    let var = if n_mc > 1 {
        per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ElboEstimate {
        value: mean - kl,
        std_error: (var / n).sqrt(),
    })
}

pub fn elbo_value_mc<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    prior: &NaturalParams,
    data: &[Example],
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    elbo_estimate_mc(model, lam, prior, data, n_mc, rng).map(|e| e.value)
}

/// ELBO with the expectation strategy chosen by `cfg`.
pub fn elbo_value<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    lam: &NaturalParams,
    prior: &NaturalParams,
    data: &[Example],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<f64> {
    match cfg.integrator {
        Integrator::MonteCarlo => elbo_value_mc(model, lam, prior, data, cfg.n_mc, rng),
        Integrator::GaussHermite { nodes } => {
            check_model(model, lam)?;
            let link = model
                .glm()
                .ok_or_else(|| Error::contract("quadrature expectations need a GLM likelihood"))?;
            let kl = kl_divergence(lam, prior)?;
            let moments = nat_to_moment(lam)?;
            let gh = GaussHermite::new(nodes);
            let lik: f64 = data
                .iter()
                .map(|ex| {
                    let (m, v) =
                        linear_predictor_moments(moments.mean(), moments.cov(), &ex.features);
                    gh.expect(m, v, |a| link.derivatives(a, ex.target).0)
                })
                .sum();
            Ok(lik - kl)
        }
    }
}

/// Mean-field Gaussian with σ = softplus(ρ), as optimised by Bayes-by-Backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct BbbParams {
    pub mean: DVector<f64>,
    pub rho: DVector<f64>,
}

impl BbbParams {
    /// m equal to the prior mean and σ equal to the prior standard deviation.
    pub fn from_prior(prior: &NaturalParams) -> Result<Self> {
        if prior.mode() != Mode::Diagonal {
            return Err(Error::contract("Bayes-by-Backprop needs a diagonal prior"));
        }
        let p = nat_to_moment(prior)?;
        let rho = p.cov().diagonal().map(|v| inverse_softplus(v.sqrt()));
        Ok(BbbParams {
            mean: p.mean().clone(),
            rho,
        })
    }

    pub fn std(&self) -> DVector<f64> {
        self.rho.map(softplus)
    }

    pub fn to_natural(&self) -> Result<NaturalParams> {
        NaturalParams::from_mean_std(&self.mean, &self.std())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// ρ with softplus(ρ) = σ.
pub fn inverse_softplus(sigma: f64) -> f64 {
    if sigma > 30.0 {
        sigma
    } else {
        sigma.exp_m1().ln()
    }
}

/// Gradient of the negative ELBO with respect to (m, ρ).
#[derive(Debug, Clone, PartialEq)]
pub struct BbbGradient {
    pub d_mean: DVector<f64>,
    pub d_rho: DVector<f64>,
}

/// Reparameterised gradient of −ELBO for the mean-field Gaussian.
///
/// Noise is drawn as `n_mc` blocks of D standard normals, the same order used
/// by [`Sampler::draw`], so a finite difference of [`elbo_value_mc`] with the
/// same seed sees identical draws. Under quadrature the σ-part uses
/// E[g∘ε] = σ∘E[diag H] with exact curvature.
pub fn bbb_gradient<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    params: &BbbParams,
    prior: &NaturalParams,
    batch: &[Example],
    n_total: usize,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<BbbGradient> {
    let d = params.dim();
    if prior.mode() != Mode::Diagonal || prior.dim() != d || model.dim() != d {
        return Err(Error::contract(
            "Bayes-by-Backprop needs matching diagonal dimensions",
        ));
    }
    if n_total > 0 && batch.is_empty() {
        return Err(Error::contract("empty minibatch with N_total > 0"));
    }
    let sigma = params.std();
    let prior_m = nat_to_moment(prior)?;
    let prior_var = prior_m.cov().diagonal();

    // KL(q‖p) part
    let mut d_mean = (&params.mean - prior_m.mean()).component_div(&prior_var);
    let mut d_sigma = DVector::from_fn(d, |j, _| sigma[j] / prior_var[j] - 1.0 / sigma[j]);

    if n_total > 0 {
        let scale = n_total as f64 / batch.len() as f64;
        let mut g_mean = DVector::zeros(d);
        let mut g_sigma = DVector::zeros(d);
        match cfg.integrator {
            Integrator::MonteCarlo => {
                if cfg.n_mc == 0 {
                    return Err(Error::contract("n_mc must be at least 1"));
                }
                for s in 0..cfg.n_mc {
                    let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let z = &params.mean + sigma.component_mul(&eps);
                    let mut gsum = DVector::zeros(d);
                    for (i, ex) in batch.iter().enumerate() {
                        let g = model.grad(z.as_slice(), ex);
                        if g.iter().any(|v| !v.is_finite()) {
                            return Err(Error::Evaluator {
                                sample: s,
                                example: i,
                                what: "gradient".into(),
                            });
                        }
                        gsum += g;
                    }
                    g_sigma += gsum.component_mul(&eps);
                    g_mean += gsum;
                }
                let inv = 1.0 / cfg.n_mc as f64;
                g_mean *= inv;
                g_sigma *= inv;
            }
            Integrator::GaussHermite { .. } => {
                let exact = EstimatorConfig {
                    hessian_mode: HessianMode::Exact,
                    ..*cfg
                };
                let lam = params.to_natural()?;
                let derivs = expected_derivatives(model, &lam, batch, &exact, rng)?;
                g_mean = derivs.grad;
                g_sigma = sigma.component_mul(&derivs.hess.diagonal());
            }
        }
        d_mean -= g_mean * scale;
        d_sigma -= g_sigma * scale;
    }

    let d_rho = d_sigma.component_mul(&params.rho.map(sigmoid));
    Ok(BbbGradient { d_mean, d_rho })
}

/// Central differences, one coordinate at a time.
pub fn fd_gradient<F: FnMut(&FlatVec) -> f64>(mut f: F, x: &FlatVec, step: f64) -> Result<FlatVec> {
    let mut out = FlatVec::zeros(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let up = f(&probe);
        probe[k] = x[k] - step;
        let down = f(&probe);
        probe[k] = x[k];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite { coordinate: k });
        }
        out[k] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// Central-difference Hessian (four-point stencil), symmetrised.
pub fn fd_hessian<F: FnMut(&FlatVec) -> f64>(
    mut f: F,
    x: &FlatVec,
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for i in 0..n {
        for j in i..n {
            let mut eval = |si: f64, sj: f64| {
                probe.copy_from(x);
                probe[i] += si * step;
                probe[j] += sj * step;
                f(&probe)
            };
            let vals = [
                eval(1.0, 1.0),
                eval(1.0, -1.0),
                eval(-1.0, 1.0),
                eval(-1.0, -1.0),
            ];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { coordinate: i });
            }
            let v = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * step * step);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}
