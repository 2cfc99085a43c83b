//! Per-example site parameters.
//!
//! The global approximation is q(z) ∝ p(z)·Πᵢ exp(φ(z)ᵀλ̃⁽ⁱ⁾), i.e.
//! λ = η₀ + Σᵢ λ̃⁽ⁱ⁾. A CVI step with step size α rewrites as: every site
//! decays by (1−α) and each selected site i gains α·(N/|B|)·g̃ᵢ(λ). Run in
//! lockstep with [`crate::optimizers::cvi_step`] this reproduces its λ
//! trajectory exactly.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expfam::{FlatVec, NaturalParams};
use crate::gradients::{likelihood_natural_part, EstimatorConfig};
use crate::models::{Example, LikelihoodModel};
use crate::optimizers::MAX_HALVINGS;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteParams {
    pub sites: Vec<FlatVec>,
    pub prior: NaturalParams,
}

impl SiteParams {
    /// `n` all-zero sites, so that reconstruction gives the prior.
    pub fn zeros(n: usize, prior: NaturalParams) -> Self {
        let len = prior.to_flat().len();
        SiteParams {
            sites: vec![FlatVec::zeros(len); n],
            prior,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    fn flat_sum(&self) -> FlatVec {
        let mut acc = self.prior.to_flat();
        for s in &self.sites {
            acc += s;
        }
        acc
    }
}

/// η₀ + Σᵢ λ̃⁽ⁱ⁾; a domain error if the sum leaves Ω.
pub fn reconstruct(sp: &SiteParams) -> Result<NaturalParams> {
    let len = sp.prior.to_flat().len();
    if let Some(i) = sp.sites.iter().position(|s| s.len() != len) {
        return Err(Error::contract(format!("site {i} has the wrong length")));
    }
    NaturalParams::from_flat(&sp.flat_sum(), sp.prior.mode())
}

/// Single-example update: batch {i}, scale N.
pub fn site_update(
    sp: &SiteParams,
    i: usize,
    g_tilde: &FlatVec,
    n_total: usize,
    alpha: f64,
) -> Result<SiteParams> {
    site_update_batch(sp, &[i], std::slice::from_ref(g_tilde), n_total, alpha)
}

/// λ̃⁽ʲ⁾ ← (1−α)λ̃⁽ʲ⁾ + α·(N/|B|)·g̃ⱼ·[j ∈ B] for every site j.
///
/// `g_tildes[k]` is g̃ for example `batch[k]`, evaluated at the current
/// reconstruction. Infeasible results are retried with α halved.
pub fn site_update_batch(
    sp: &SiteParams,
    batch: &[usize],
    g_tildes: &[FlatVec],
    n_total: usize,
    alpha: f64,
) -> Result<SiteParams> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::contract(format!(
            "step size must lie in (0, 1], got {alpha}"
        )));
    }
    if batch.len() != g_tildes.len() || batch.is_empty() {
        return Err(Error::contract("one g̃ per selected site is required"));
    }
    let len = sp.prior.to_flat().len();
    for (&i, g) in batch.iter().zip(g_tildes) {
        if i >= sp.len() {
            return Err(Error::contract(format!("site index {i} out of range")));
        }
        if g.len() != len {
            return Err(Error::contract("g̃ has the wrong length"));
        }
    }
    let scale = n_total as f64 / batch.len() as f64;
    let mut a = alpha;
    let mut last = String::new();
    for _ in 0..=MAX_HALVINGS {
        let mut next = sp.clone();
        for s in next.sites.iter_mut() {
            *s *= 1.0 - a;
        }
        for (&i, g) in batch.iter().zip(g_tildes) {
            next.sites[i] += g * (a * scale);
        }
        match reconstruct(&next) {
            Ok(_) => return Ok(next),
            Err(e) => last = e.to_string(),
        }
        a *= 0.5;
    }
    Err(Error::StepFailure {
        halvings: MAX_HALVINGS,
        reason: last,
    })
}

/// ‖λ − η₀ − Σᵢ g̃ᵢ(λ)‖∞ at λ = reconstruct(sp), summing over all of `data`.
pub fn fixed_point_residual<R: Rng + ?Sized>(
    sp: &SiteParams,
    model: &dyn LikelihoodModel,
    data: &[Example],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<f64> {
    let lam = reconstruct(sp)?;
    let lik = likelihood_natural_part(model, &lam, data, data.len(), cfg, rng)?;
    let r = lam.to_flat() - sp.prior.to_flat() - lik;
    Ok(r.amax())
}

/// CSV with one row per site: index, ‖λ̃‖₂, ‖block 1‖₂, ‖block 2‖₂.
pub fn write_site_dump(sp: &SiteParams, path: &Path) -> Result<()> {
    let d = sp.prior.dim();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "norm", "block1_norm", "block2_norm"])?;
    for (i, s) in sp.sites.iter().enumerate() {
        let b1 = s.rows(0, d).norm();
        let b2 = s.rows(d, s.len() - d).norm();
        w.write_record([
            i.to_string(),
            s.norm().to_string(),
            b1.to_string(),
            b2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable summary of the largest sites.
pub fn describe_top_sites<W: Write>(sp: &SiteParams, k: usize, out: &mut W) -> Result<()> {
    let mut order: Vec<(usize, f64)> = sp.sites.iter().map(|s| s.norm()).enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, n) in order.into_iter().take(k) {
        writeln!(out, "site {i:>5}  norm {n:.6e}")?;
    }
    Ok(())
}
