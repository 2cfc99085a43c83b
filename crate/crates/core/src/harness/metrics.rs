use rand::Rng;

use crate::error::{Error, Result};
use crate::expfam::{nat_to_moment, NaturalParams, Sampler, SymBlock};
use crate::models::{Example, LikelihoodModel};
use crate::quadrature::GaussHermite;

/// Posterior-predictive test metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveMetrics {
    /// −(1/N) Σ log₂ p̄(yᵢ|xᵢ), in bits.
    pub log2_loss: f64,
    /// Same quantity in nats.
    pub nll: f64,
    pub accuracy: f64,
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Monte Carlo predictive with one set of S draws shared by every test point.
///
/// p̄(y|x) = (1/S)Σₛ p(y|x, zₛ); a point counts as correct when the averaged
/// probability of the positive class (target > `threshold`) is on the right
/// side of ½.
pub fn evaluate_predictive<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    q: &NaturalParams,
    test: &[Example],
    n_mc: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<PredictiveMetrics> {
    if n_mc == 0 {
        return Err(Error::contract("n_mc must be at least 1"));
    }
    if test.is_empty() {
        return Err(Error::contract("empty test set"));
    }
    if model.dim() != q.dim() {
        return Err(Error::contract("model and posterior dimensions differ"));
    }
    let sampler = Sampler::new(q)?;
    let draws: Vec<_> = (0..n_mc).map(|_| sampler.draw(rng)).collect();
    let mut nll = 0.0;
    let mut correct = 0usize;
    let mut ll = vec![0.0; n_mc];
    for ex in test {
        let mut p_pos = 0.0;
        for (slot, z) in ll.iter_mut().zip(&draws) {
            *slot = model.log_lik(z.as_slice(), ex);
            p_pos += model.predict_prob(z.as_slice(), &ex.features);
        }
        nll -= log_mean_exp(&ll);
        p_pos /= n_mc as f64;
        if (p_pos > 0.5) == (ex.target > threshold) {
            correct += 1;
        }
    }
    let n = test.len() as f64;
    let nll = nll / n;
    Ok(PredictiveMetrics {
        log2_loss: nll / std::f64::consts::LN_2,
        nll,
        accuracy: correct as f64 / n,
    })
}

pub fn predictive_log2_loss<R: Rng + ?Sized>(
    model: &dyn LikelihoodModel,
    q: &NaturalParams,
    test: &[Example],
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    evaluate_predictive(model, q, test, n_mc, 0.5, rng).map(|m| m.log2_loss)
}

/// Sample-free predictive log₂-loss for GLM likelihoods.
pub fn predictive_log2_loss_quadrature(
    model: &dyn LikelihoodModel,
    q: &NaturalParams,
    test: &[Example],
    nodes: usize,
) -> Result<f64> {
    let link = model
        .glm()
        .ok_or_else(|| Error::contract("quadrature predictive needs a GLM likelihood"))?;
    if test.is_empty() {
        return Err(Error::contract("empty test set"));
    }
    let moments = nat_to_moment(q)?;
    let gh = GaussHermite::new(nodes);
    let mut total = 0.0;
    for ex in test {
        let x = nalgebra::DVector::from_column_slice(&ex.features);
        let mean = moments.mean().dot(&x);
        let var = match moments.cov() {
            SymBlock::Full(v) => x.dot(&(v * &x)),
            SymBlock::Diag(v) => x.component_mul(&x).dot(v),
        };
        let p = gh.expect(mean, var, |a| link.derivatives(a, ex.target).0.exp());
        total -= p.log2();
    }
    Ok(total / test.len() as f64)
}
