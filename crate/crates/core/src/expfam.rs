//! Gaussian exponential family in moment, natural and expectation coordinates.
//!
//! With sufficient statistics φ(z) = (z, zzᵀ) the density is
//!
//! ```text
//! q(z) = h(z) · exp(λ₁ᵀz + tr(λ₂ zzᵀ) − A(λ)),     h(z) = (2π)^(−D/2)
//! A(λ) = −¼ λ₁ᵀ λ₂⁻¹ λ₁ − ½ log det(−2λ₂)
//! ```
//!
//! The (2π)^(−D/2) factor lives in the base measure h, so A carries no
//! constant and its Hessian is exactly the Fisher information. Other
//! base-measure conventions shift A by a constant and leave every gradient
//! unchanged.
//!
//! Two coordinate systems share the [`FlatVec`] layout `[block₁ ; block₂]`:
//!
//! * primal (λ and gradients with respect to μ): the symmetric second block is
//!   packed upper-triangle row-major, off-diagonals stored as-is;
//! * dual (μ and gradients with respect to λ): same order, off-diagonals
//!   doubled.
//!
//! The plain inner product of a primal and a dual vector then equals
//! λ₁ᵀμ₁ + tr(λ₂μ₂), and the finite-difference gradient of A in primal
//! coordinates is exactly the dual-packed μ. Diagonal mode stores D entries
//! per block and needs no such distinction.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, cholesky_jittered, pack_upper, packed_len, require_positive, require_spd,
    symmetrize, unpack_upper, upper_pairs,
};

/// Canonical flat encoding of Gaussian parameters, gradients and FIM products.
pub type FlatVec = DVector<f64>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    Diagonal,
}

/// Length of a flat vector for dimension `d`.
pub fn flat_len(mode: Mode, d: usize) -> usize {
    match mode {
        Mode::Full => d + packed_len(d),
        Mode::Diagonal => 2 * d,
    }
}

/// Inverse of [`flat_len`].
pub fn dim_for_flat_len(mode: Mode, len: usize) -> Option<usize> {
    match mode {
        Mode::Diagonal => len.is_multiple_of(2).then_some(len / 2),
        Mode::Full => {
            // d + d(d+1)/2 = len  ⇔  d² + 3d − 2len = 0
            let d = ((9.0 + 8.0 * len as f64).sqrt() - 3.0) / 2.0;
            let d = d.round() as usize;
            (flat_len(Mode::Full, d) == len).then_some(d)
        }
    }
}

/// A symmetric D×D quantity: either dense, or its diagonal only.
#[derive(Debug, Clone, PartialEq)]
pub enum SymBlock {
    Full(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl SymBlock {
    pub fn mode(&self) -> Mode {
        match self {
            SymBlock::Full(_) => Mode::Full,
            SymBlock::Diag(_) => Mode::Diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SymBlock::Full(a) => a.nrows(),
            SymBlock::Diag(v) => v.len(),
        }
    }

    pub fn zeros(mode: Mode, d: usize) -> Self {
        match mode {
            Mode::Full => SymBlock::Full(DMatrix::zeros(d, d)),
            Mode::Diagonal => SymBlock::Diag(DVector::zeros(d)),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SymBlock::Full(a) => a.clone(),
            SymBlock::Diag(v) => DMatrix::from_diagonal(v),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            SymBlock::Full(a) => a.diagonal(),
            SymBlock::Diag(v) => v.clone(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        match self {
            SymBlock::Full(a) => SymBlock::Full(a * c),
            SymBlock::Diag(v) => SymBlock::Diag(v * c),
        }
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SymBlock::Full(a) => a * x,
            SymBlock::Diag(v) => v.component_mul(x),
        }
    }

    pub(crate) fn push_packed(&self, offdiag_factor: f64, out: &mut Vec<f64>) {
        match self {
            SymBlock::Full(a) => pack_upper(a, offdiag_factor, out),
            SymBlock::Diag(v) => out.extend(v.iter()),
        }
    }

    fn from_packed(v: &[f64], mode: Mode, d: usize, offdiag_factor: f64) -> Self {
        match mode {
            Mode::Full => SymBlock::Full(unpack_upper(v, d, offdiag_factor)),
            Mode::Diagonal => SymBlock::Diag(DVector::from_column_slice(v)),
        }
    }

    pub fn max_abs_diff(&self, other: &SymBlock) -> f64 {
        (self.to_dense() - other.to_dense()).amax()
    }
}

fn checked_symmetric(block: SymBlock, what: &str) -> Result<SymBlock> {
    match block {
        SymBlock::Full(a) => {
            if a.nrows() != a.ncols() {
                return Err(Error::contract(format!("{what} must be square")));
            }
            let scale = a.amax().max(1.0);
            if asymmetry(&a) > 1e-10 * scale {
                return Err(Error::contract(format!("{what} is not symmetric")));
            }
            Ok(SymBlock::Full(symmetrize(&a)))
        }
        d => Ok(d),
    }
}

fn check_dims(first: usize, second: &SymBlock, what: &str) -> Result<()> {
    if first != second.dim() {
        return Err(Error::contract(format!(
            "{what}: vector has dimension {first} but matrix block has {}",
            second.dim()
        )));
    }
    Ok(())
}

/// Mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentParams {
    mean: DVector<f64>,
    cov: SymBlock,
}

impl MomentParams {
    pub fn new(mean: DVector<f64>, cov: SymBlock) -> Result<Self> {
        check_dims(mean.len(), &cov, "moment parameters")?;
        let cov = checked_symmetric(cov, "covariance")?;
        match &cov {
            SymBlock::Full(v) => require_spd(v, "covariance")?,
            SymBlock::Diag(v) => require_positive(v, "covariance diagonal")?,
        }
        Ok(MomentParams { mean, cov })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SymBlock {
        &self.cov
    }

    pub fn mode(&self) -> Mode {
        self.cov.mode()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Natural parameters λ = (λ₁, λ₂) = (V⁻¹m, −½V⁻¹), always inside Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    lambda1: DVector<f64>,
    lambda2: SymBlock,
}

impl NaturalParams {
    /// Validates λ ∈ Ω: −2λ₂ positive definite (full) or strictly positive (diagonal).
    pub fn new(lambda1: DVector<f64>, lambda2: SymBlock) -> Result<Self> {
        check_dims(lambda1.len(), &lambda2, "natural parameters")?;
        if lambda1.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("lambda1 has non-finite entries"));
        }
        let lambda2 = checked_symmetric(lambda2, "lambda2")?;
        match &lambda2 {
            SymBlock::Full(a) => require_spd(&(a * -2.0), "-2·lambda2")?,
            SymBlock::Diag(v) => require_positive(&(v * -2.0), "-2·lambda2")?,
        }
        Ok(NaturalParams { lambda1, lambda2 })
    }

    /// Isotropic prior N(0, I/τ), i.e. η₀ = (0, −τI/2).
    pub fn isotropic_prior(d: usize, tau: f64, mode: Mode) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::domain(format!(
                "prior precision must be > 0, got {tau}"
            )));
        }
        let lambda2 = match mode {
            Mode::Full => SymBlock::Full(DMatrix::identity(d, d) * (-0.5 * tau)),
            Mode::Diagonal => SymBlock::Diag(DVector::from_element(d, -0.5 * tau)),
        };
        NaturalParams::new(DVector::zeros(d), lambda2)
    }

    /// Diagonal Gaussian from a mean and a precision vector.
    pub fn from_mean_precision(mean: &DVector<f64>, precision: &DVector<f64>) -> Result<Self> {
        NaturalParams::new(
            precision.component_mul(mean),
            SymBlock::Diag(precision * -0.5),
        )
    }

    /// Diagonal Gaussian from a mean and per-coordinate standard deviations.
    pub fn from_mean_std(mean: &DVector<f64>, std: &DVector<f64>) -> Result<Self> {
        let precision = std.map(|s| 1.0 / (s * s));
        NaturalParams::from_mean_precision(mean, &precision)
    }

    pub fn lambda1(&self) -> &DVector<f64> {
        &self.lambda1
    }

    pub fn lambda2(&self) -> &SymBlock {
        &self.lambda2
    }

    pub fn mode(&self) -> Mode {
        self.lambda2.mode()
    }

    pub fn dim(&self) -> usize {
        self.lambda1.len()
    }

    /// Precision −2λ₂.
    pub fn precision(&self) -> SymBlock {
        self.lambda2.scale(-2.0)
    }

    /// Primal packing `[λ₁ ; λ₂]`.
    pub fn to_flat(&self) -> FlatVec {
        let mut out = Vec::with_capacity(flat_len(self.mode(), self.dim()));
        out.extend(self.lambda1.iter());
        self.lambda2.push_packed(1.0, &mut out);
        FlatVec::from_vec(out)
    }

    /// Decodes a primal-packed vector and validates λ ∈ Ω.
    pub fn from_flat(v: &FlatVec, mode: Mode) -> Result<Self> {
        let d = dim_for_flat_len(mode, v.len()).ok_or_else(|| {
            Error::contract(format!(
                "flat length {} is not valid for {mode:?} mode",
                v.len()
            ))
        })?;
        let s = v.as_slice();
        NaturalParams::new(
            DVector::from_column_slice(&s[..d]),
            SymBlock::from_packed(&s[d..], mode, d, 1.0),
        )
    }

    pub(crate) fn check_compatible(&self, other: &NaturalParams, what: &str) -> Result<()> {
        if self.mode() != other.mode() || self.dim() != other.dim() {
            return Err(Error::contract(format!(
                "{what}: ({:?}, D={}) vs ({:?}, D={})",
                self.mode(),
                self.dim(),
                other.mode(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Expectation parameters μ = (E[z], E[zzᵀ]); diagonal mode keeps E[zⱼ²].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationParams {
    mu1: DVector<f64>,
    mu2: SymBlock,
}

impl ExpectationParams {
    /// Validates that μ₂ − μ₁μ₁ᵀ is positive definite (strictly positive in diagonal mode).
    pub fn new(mu1: DVector<f64>, mu2: SymBlock) -> Result<Self> {
        check_dims(mu1.len(), &mu2, "expectation parameters")?;
        let mu2 = checked_symmetric(mu2, "mu2")?;
        let e = ExpectationParams { mu1, mu2 };
        match e.covariance() {
            SymBlock::Full(v) => require_spd(&v, "mu2 - mu1·mu1ᵀ")?,
            SymBlock::Diag(v) => require_positive(&v, "mu2 - mu1²")?,
        }
        Ok(e)
    }

    pub fn mu1(&self) -> &DVector<f64> {
        &self.mu1
    }

    pub fn mu2(&self) -> &SymBlock {
        &self.mu2
    }

    pub fn mode(&self) -> Mode {
        self.mu2.mode()
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    fn covariance(&self) -> SymBlock {
        match &self.mu2 {
            SymBlock::Full(a) => {
                SymBlock::Full(symmetrize(&(a - &self.mu1 * self.mu1.transpose())))
            }
            SymBlock::Diag(v) => SymBlock::Diag(v - self.mu1.component_mul(&self.mu1)),
        }
    }

    /// Dual packing `[μ₁ ; μ₂]` with doubled off-diagonals.
    pub fn to_flat(&self) -> FlatVec {
        let mut out = Vec::with_capacity(flat_len(self.mode(), self.dim()));
        out.extend(self.mu1.iter());
        self.mu2.push_packed(2.0, &mut out);
        FlatVec::from_vec(out)
    }

    pub fn from_flat(v: &FlatVec, mode: Mode) -> Result<Self> {
        let d = dim_for_flat_len(mode, v.len()).ok_or_else(|| {
            Error::contract(format!(
                "flat length {} is not valid for {mode:?} mode",
                v.len()
            ))
        })?;
        let s = v.as_slice();
        ExpectationParams::new(
            DVector::from_column_slice(&s[..d]),
            SymBlock::from_packed(&s[d..], mode, d, 2.0),
        )
    }
}

/// λ₁ = V⁻¹m, λ₂ = −½V⁻¹.
pub fn moment_to_nat(p: &MomentParams) -> Result<NaturalParams> {
    match &p.cov {
        SymBlock::Diag(v) => {
            require_positive(v, "covariance diagonal")?;
            let prec = v.map(|x| 1.0 / x);
            NaturalParams::from_mean_precision(&p.mean, &prec)
        }
        SymBlock::Full(v) => {
            let f = cholesky_jittered(v, "covariance")?;
            let prec = f.inverse();
            let lambda1 = &prec * &p.mean;
            NaturalParams::new(lambda1, SymBlock::Full(prec * -0.5))
        }
    }
}

/// V = (−2λ₂)⁻¹, m = Vλ₁.
pub fn nat_to_moment(lam: &NaturalParams) -> Result<MomentParams> {
    match &lam.lambda2 {
        SymBlock::Diag(l2) => {
            let var = l2.map(|x| -0.5 / x);
            let mean = var.component_mul(&lam.lambda1);
            MomentParams::new(mean, SymBlock::Diag(var))
        }
        SymBlock::Full(l2) => {
            let f = cholesky_jittered(&(l2 * -2.0), "-2·lambda2")?;
            let cov = f.inverse();
            let mean = f.solve(&lam.lambda1);
            MomentParams::new(mean, SymBlock::Full(cov))
        }
    }
}

/// μ = ∇A(λ) = (m, mmᵀ + V).
pub fn nat_to_exp(lam: &NaturalParams) -> Result<ExpectationParams> {
    let p = nat_to_moment(lam)?;
    let mu2 = match &p.cov {
        SymBlock::Full(v) => SymBlock::Full(v + &p.mean * p.mean.transpose()),
        SymBlock::Diag(v) => SymBlock::Diag(v + p.mean.component_mul(&p.mean)),
    };
    ExpectationParams::new(p.mean, mu2)
}

/// Inverse of [`nat_to_exp`] (the Legendre map back to λ).
pub fn exp_to_nat(mu: &ExpectationParams) -> Result<NaturalParams> {
    let p = MomentParams::new(mu.mu1.clone(), mu.covariance())?;
    moment_to_nat(&p)
}

/// A(λ) = −¼λ₁ᵀλ₂⁻¹λ₁ − ½ log det(−2λ₂).
pub fn log_partition(lam: &NaturalParams) -> Result<f64> {
    match &lam.lambda2 {
        SymBlock::Diag(l2) => Ok(lam
            .lambda1
            .iter()
            .zip(l2.iter())
            .map(|(a, b)| -0.25 * a * a / b - 0.5 * (-2.0 * b).ln())
            .sum()),
        SymBlock::Full(l2) => {
            let f = cholesky_jittered(&(l2 * -2.0), "-2·lambda2")?;
            let x = f.solve(&lam.lambda1);
            Ok(0.5 * lam.lambda1.dot(&x) - 0.5 * f.log_det())
        }
    }
}

/// Legendre conjugate A*(μ) = −D/2 − ½ log det(μ₂ − μ₁μ₁ᵀ); its Hessian is F(λ)⁻¹.
pub fn conjugate_log_partition(mu: &ExpectationParams) -> Result<f64> {
    let d = mu.dim() as f64;
    match mu.covariance() {
        SymBlock::Diag(v) => {
            require_positive(&v, "mu2 - mu1²")?;
            Ok(-0.5 * d - 0.5 * v.iter().map(|x| x.ln()).sum::<f64>())
        }
        SymBlock::Full(v) => {
            let f = cholesky_jittered(&v, "mu2 - mu1·mu1ᵀ")?;
            Ok(-0.5 * d - 0.5 * f.log_det())
        }
    }
}

/// Fisher information ∇²A(λ) in primal flat coordinates, i.e. the covariance
/// of the sufficient statistics (z, zᵢ², 2zᵢzⱼ for i<j). Dense; meant for small D.
pub fn fisher_information(lam: &NaturalParams) -> Result<DMatrix<f64>> {
    let p = nat_to_moment(lam)?;
    let d = p.dim();
    let m = &p.mean;
    match &p.cov {
        SymBlock::Diag(v) => {
            let mut f = DMatrix::zeros(2 * d, 2 * d);
            for j in 0..d {
                let (mj, vj) = (m[j], v[j]);
                f[(j, j)] = vj;
                f[(j, d + j)] = 2.0 * mj * vj;
                f[(d + j, j)] = 2.0 * mj * vj;
                f[(d + j, d + j)] = 2.0 * vj * vj + 4.0 * mj * mj * vj;
            }
            Ok(f)
        }
        SymBlock::Full(v) => {
            let pairs = upper_pairs(d);
            let n = d + pairs.len();
            let weight = |(i, j): (usize, usize)| if i == j { 1.0 } else { 2.0 };
            let mut f = DMatrix::zeros(n, n);
            for a in 0..d {
                for b in 0..d {
                    f[(a, b)] = v[(a, b)];
                }
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    // Cov(z_a, z_i z_j)
                    let c = weight((i, j)) * (m[i] * v[(a, j)] + m[j] * v[(a, i)]);
                    f[(a, d + k)] = c;
                    f[(d + k, a)] = c;
                }
            }
            for (r, &(i, j)) in pairs.iter().enumerate() {
                for (c, &(k, l)) in pairs.iter().enumerate().skip(r) {
                    // Isserlis: Cov(z_i z_j, z_k z_l)
                    let cov = v[(i, k)] * v[(j, l)]
                        + v[(i, l)] * v[(j, k)]
                        + m[i] * m[k] * v[(j, l)]
                        + m[i] * m[l] * v[(j, k)]
                        + m[j] * m[k] * v[(i, l)]
                        + m[j] * m[l] * v[(i, k)];
                    let val = weight((i, j)) * weight((k, l)) * cov;
                    f[(d + r, d + c)] = val;
                    f[(d + c, d + r)] = val;
                }
            }
            Ok(f)
        }
    }
}

/// F(λ)·v without forming F in diagonal mode.
pub fn fisher_vector_product(lam: &NaturalParams, v: &FlatVec) -> Result<FlatVec> {
    let d = lam.dim();
    if v.len() != flat_len(lam.mode(), d) {
        return Err(Error::contract(
            "flat vector length does not match parameters",
        ));
    }
    match lam.mode() {
        Mode::Full => Ok(fisher_information(lam)? * v),
        Mode::Diagonal => {
            let p = nat_to_moment(lam)?;
            let var = p.cov.diagonal();
            let mut out = FlatVec::zeros(2 * d);
            for j in 0..d {
                let (mj, vj) = (p.mean[j], var[j]);
                out[j] = vj * v[j] + 2.0 * mj * vj * v[d + j];
                out[d + j] = 2.0 * mj * vj * v[j] + (2.0 * vj * vj + 4.0 * mj * mj * vj) * v[d + j];
            }
            Ok(out)
        }
    }
}

/// Reparameterised sampler z = m + Lε with L a covariance factor.
#[derive(Debug, Clone)]
pub struct Sampler {
    mean: DVector<f64>,
    factor: SymBlock,
}

impl Sampler {
    pub fn new(lam: &NaturalParams) -> Result<Self> {
        let p = nat_to_moment(lam)?;
        let factor = match &p.cov {
            SymBlock::Diag(v) => SymBlock::Diag(v.map(f64::sqrt)),
            SymBlock::Full(v) => SymBlock::Full(cholesky_jittered(v, "covariance")?.l()),
        };
        Ok(Sampler {
            mean: p.mean,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn transform(&self, eps: &DVector<f64>) -> DVector<f64> {
        &self.mean + self.factor.mul_vec(eps)
    }

    /// D standard-normal draws in coordinate order.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let eps = self.draw_noise(rng);
        self.transform(&eps)
    }
}

/// `count` draws from q_λ, deterministic given the state of `rng`.
pub fn sample<R: Rng + ?Sized>(
    lam: &NaturalParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let sampler = Sampler::new(lam)?;
    Ok((0..count).map(|_| sampler.draw(rng)).collect())
}

/// Closed-form KL(q ‖ p).
pub fn kl_divergence(q: &NaturalParams, p: &NaturalParams) -> Result<f64> {
    q.check_compatible(p, "kl_divergence operands differ")?;
    if q == p {
        return Ok(0.0);
    }
    let mq = nat_to_moment(q)?;
    let d = q.dim() as f64;
    let prec_p = p.precision();
    let diff = nat_to_moment(p)?.mean - &mq.mean;
    let kl = match (&mq.cov, &prec_p) {
        (SymBlock::Diag(vq), SymBlock::Diag(pp)) => {
            let trace: f64 = vq.component_mul(pp).sum();
            let maha: f64 = diff.component_mul(&diff).component_mul(pp).sum();
            let logdet_q: f64 = vq.iter().map(|x| x.ln()).sum();
            let logdet_pp: f64 = pp.iter().map(|x| x.ln()).sum();
            0.5 * (trace + maha - d - logdet_pp - logdet_q)
        }
        (SymBlock::Full(vq), SymBlock::Full(pp)) => {
            let trace = (pp * vq).trace();
            let maha = diff.dot(&(pp * &diff));
            let logdet_q = cholesky_jittered(vq, "covariance of q")?.log_det();
            let logdet_pp = cholesky_jittered(pp, "precision of p")?.log_det();
            0.5 * (trace + maha - d - logdet_pp - logdet_q)
        }
        _ => unreachable!("modes checked above"),
    };
    Ok(kl.max(0.0))
}

/// log q_λ(z) = λ₁ᵀz + zᵀλ₂z − A(λ) − (D/2) log 2π.
pub fn log_density(lam: &NaturalParams, z: &DVector<f64>) -> Result<f64> {
    if z.len() != lam.dim() {
        return Err(Error::contract(
            "point dimension does not match distribution",
        ));
    }
    let quad = z.dot(&lam.lambda2.mul_vec(z));
    Ok(lam.lambda1.dot(z) + quad - log_partition(lam)? - 0.5 * lam.dim() as f64 * LN_2PI)
}

impl fmt::Display for NaturalParams {
    /// Side-by-side table of (m, V) and (λ₁, λ₂).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let moments = nat_to_moment(self).map_err(|_| fmt::Error)?;
        let v = moments.cov.to_dense();
        let l2 = self.lambda2.to_dense();
        writeln!(f, "Gaussian ({:?}, D={})", self.mode(), self.dim())?;
        let width = match self.mode() {
            Mode::Full => self.dim(),
            Mode::Diagonal => 1,
        };
        for i in 0..self.dim() {
            write!(f, "  m[{i}]={:>12.5e} V[{i}]=[", moments.mean[i])?;
            for j in 0..width {
                let col = if self.mode() == Mode::Full { j } else { i };
                write!(f, " {:>12.5e}", v[(i, col)])?;
            }
            write!(f, " ] | λ1[{i}]={:>12.5e} λ2[{i}]=[", self.lambda1[i])?;
            for j in 0..width {
                let col = if self.mode() == Mode::Full { j } else { i };
                write!(f, " {:>12.5e}", l2[(i, col)])?;
            }
            writeln!(f, " ]")?;
        }
        Ok(())
    }
}
