//! Dense linear-algebra helpers shared by the Gaussian routines.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of a symmetric positive-definite matrix, plus the diagonal
/// jitter (absolute) that had to be added to obtain it.
pub struct SpdFactor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl SpdFactor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrize(&self.chol.inverse())
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Cholesky with bounded jitter escalation.
///
/// A plain factorization is tried first. On failure, `c · trace/D` is added to
/// the diagonal for c = 1e-10, 1e-9, …, 1e-4; if all fail, a domain error
/// carrying the smallest eigenvalue is returned.
pub fn cholesky_jittered(a: &DMatrix<f64>, what: &str) -> Result<SpdFactor> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(SpdFactor { chol, jitter: 0.0 });
    }
    let n = a.nrows().max(1);
    let scale = (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut c = JITTER_START;
    while c <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = c * scale;
        let mut b = a.clone();
        for i in 0..a.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(b) {
            return Ok(SpdFactor { chol, jitter });
        }
        c *= 10.0;
    }
    Err(Error::domain(format!(
        "{what} is not positive definite (smallest eigenvalue {:.6e})",
        min_eigenvalue(a)
    )))
}

/// Strict positive-definiteness check; reports the smallest eigenvalue on failure.
pub fn require_spd(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(format!("{what} has non-finite entries")));
    }
    if Cholesky::new(a.clone()).is_some() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{what} is not positive definite (smallest eigenvalue {:.6e})",
            min_eigenvalue(a)
        )))
    }
}

/// Elementwise strict positivity; reports the first offending entry.
pub fn require_positive(v: &DVector<f64>, what: &str) -> Result<()> {
    match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        None => Ok(()),
        Some(j) => Err(Error::domain(format!(
            "{what} entry {j} is {} (must be finite and > 0)",
            v[j]
        ))),
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    let eig = symmetrize(a).symmetric_eigen();
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Maximum absolute asymmetry |a_ij − a_ji|.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Upper triangle, row-major. `offdiag_factor` is 1 for plain packing and 2 for
/// the dual (covector) packing.
pub fn pack_upper(a: &DMatrix<f64>, offdiag_factor: f64, out: &mut Vec<f64>) {
    let n = a.nrows();
    for i in 0..n {
        out.push(a[(i, i)]);
        for j in (i + 1)..n {
            out.push(offdiag_factor * a[(i, j)]);
        }
    }
}

pub fn unpack_upper(v: &[f64], d: usize, offdiag_factor: f64) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), packed_len(d));
    let mut a = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        a[(i, i)] = v[k];
        k += 1;
        for j in (i + 1)..d {
            let x = v[k] / offdiag_factor;
            a[(i, j)] = x;
            a[(j, i)] = x;
            k += 1;
        }
    }
    a
}

/// Upper-triangle (i ≤ j) index pairs in packing order.
pub fn upper_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(packed_len(d));
    for i in 0..d {
        for j in i..d {
            pairs.push((i, j));
        }
    }
    pairs
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}
