//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use natgrad_vi::expfam::{Mode, NaturalParams, SymBlock};
use natgrad_vi::models::{sigmoid, Example};
use natgrad_vi::quadrature::GaussHermite;
use rand::Rng;
use rand_distr::StandardNormal;

/// ‖a − b‖∞ / max(‖b‖∞, floor).
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

pub fn normal_vec<R: Rng>(d: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// B Bᵀ/d + floor·I with B standard normal.
pub fn random_spd<R: Rng>(d: usize, floor: f64, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * floor
}

/// λ for N(m, V) computed with a general LU inverse.
pub fn lambda_from_moments(m: &DVector<f64>, v: &DMatrix<f64>) -> NaturalParams {
    let p = v.clone().lu().try_inverse().expect("invertible covariance");
    let p = (&p + p.transpose()) * 0.5;
    NaturalParams::new(&p * m, SymBlock::Full(p * -0.5)).unwrap()
}

pub fn random_full_lambda<R: Rng>(d: usize, rng: &mut R) -> NaturalParams {
    let v = random_spd(d, 0.3, rng);
    let m = normal_vec(d, 1.0, rng);
    lambda_from_moments(&m, &v)
}

pub fn design(data: &[Example]) -> (DMatrix<f64>, DVector<f64>) {
    let d = data[0].features.len();
    let x = DMatrix::from_fn(data.len(), d, |i, j| data[i].features[j]);
    let y = DVector::from_iterator(data.len(), data.iter().map(|e| e.target));
    (x, y)
}

/// Bayesian linear regression with prior N(0, I/τ): V* = (τI + XᵀX/σ²)⁻¹, m* = V*Xᵀy/σ².
pub fn blr_posterior(tau: f64, noise_var: f64, data: &[Example]) -> (DVector<f64>, DMatrix<f64>) {
    let (x, y) = design(data);
    let d = x.ncols();
    let prec = DMatrix::identity(d, d) * tau + x.transpose() * &x / noise_var;
    let v = prec.lu().try_inverse().unwrap();
    let m = &v * x.transpose() * y / noise_var;
    (m, v)
}

/// log N(y | 0, XXᵀ/τ + σ²I).
pub fn blr_log_evidence(tau: f64, noise_var: f64, data: &[Example]) -> f64 {
    let (x, y) = design(data);
    let n = y.len();
    let c = &x * x.transpose() / tau + DMatrix::identity(n, n) * noise_var;
    let lu = c.clone().lu();
    let quad = y.dot(&lu.solve(&y).unwrap());
    let logdet = lu.determinant().ln();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

pub fn gaussian_data<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let y: f64 = rng.sample::<f64, _>(StandardNormal) + x.iter().sum::<f64>() * 0.5;
            Example::new(x, y)
        })
        .collect()
}

pub fn logistic_data<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Example> {
    let w = normal_vec(d, 1.0, rng);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let a: f64 = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let y = if rng.random::<f64>() < sigmoid(a) {
                1.0
            } else {
                0.0
            };
            Example::new(x, y)
        })
        .collect()
}

/// E over N(m, V) of f(z) for D ≤ 2, by nested conditional Gauss–Hermite rules.
pub fn gauss_expect(
    m: &DVector<f64>,
    v: &DMatrix<f64>,
    nodes: usize,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let gh = GaussHermite::new(nodes);
    match m.len() {
        1 => gh.expect(m[0], v[(0, 0)], |z| f(&[z])),
        2 => {
            let (m1, m2) = (m[0], m[1]);
            let (v11, v12, v22) = (v[(0, 0)], v[(0, 1)], v[(1, 1)]);
            let cond_var = v22 - v12 * v12 / v11;
            gh.expect(m1, v11, |z1| {
                let cm = m2 + v12 / v11 * (z1 - m1);
                gh.expect(cm, cond_var, |z2| f(&[z1, z2]))
            })
        }
        d => panic!("gauss_expect supports D ≤ 2, got {d}"),
    }
}

/// Mean and covariance of a full or diagonal λ, via a direct LU solve.
pub fn moments_of(lam: &NaturalParams) -> (DVector<f64>, DMatrix<f64>) {
    let prec = lam.lambda2().to_dense() * -2.0;
    let v = prec.clone().lu().try_inverse().unwrap();
    let m = &v * lam.lambda1();
    (m, v)
}

pub fn diag_prior(d: usize, tau: f64) -> NaturalParams {
    NaturalParams::isotropic_prior(d, tau, Mode::Diagonal).unwrap()
}

pub fn full_prior(d: usize, tau: f64) -> NaturalParams {
    NaturalParams::isotropic_prior(d, tau, Mode::Full).unwrap()
}
