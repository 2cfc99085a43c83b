mod support;

use nalgebra::{DMatrix, DVector};
use natgrad_vi::expfam::{FlatVec, Mode, NaturalParams, SymBlock};
use natgrad_vi::gradients::{
    elbo_gradient_lambda, elbo_value, expected_derivatives, likelihood_natural_part,
    EstimatorConfig,
};
use natgrad_vi::linalg::min_eigenvalue;
use natgrad_vi::models::{Example, HessianMode, LinearGaussian, Logistic};
use natgrad_vi::optimizers::{cvi_step, sgd_nat_step, vogn_step, CviState, VognState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn in_omega(lam: &NaturalParams) -> bool {
    match lam.lambda2() {
        SymBlock::Full(a) => min_eigenvalue(&(a * -2.0)) > 0.0,
        SymBlock::Diag(v) => v.iter().all(|x| *x < 0.0),
    }
}

#[test]
fn cvi_reaches_conjugate_posterior_in_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (tau, noise) = (0.8, 0.6);
    let data = gaussian_data(20, 3, &mut rng);
    let (m, v) = blr_posterior(tau, noise, &data);
    let target = lambda_from_moments(&m, &v).to_flat();
    let model = LinearGaussian::new(3, noise).unwrap();
    let prior = full_prior(3, tau);
    let cfg = EstimatorConfig::quadrature(6);
    for _ in 0..10 {
        let start = CviState::new(random_full_lambda(3, &mut rng));
        let lik =
            likelihood_natural_part(&model, &start.lam, &data, data.len(), &cfg, &mut cfg.rng())
                .unwrap();
        let next = cvi_step(&start, &prior, &lik, 1.0).unwrap();
        assert!((next.lam.to_flat() - &target).amax() < 1e-8);
    }
}

/// Features aligned with coordinate axes, so the exact posterior is diagonal.
fn axis_data(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let mut x = vec![0.0; d];
            x[i % d] = 0.5 + rng.random::<f64>();
            Example::new(x, rng.random::<f64>() * 2.0 - 1.0)
        })
        .collect()
}

#[test]
fn vogn_reaches_conjugate_posterior_in_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (tau, noise, d) = (1.2, 0.5, 3);
    let data = axis_data(12, d, &mut rng);
    let (m, v) = blr_posterior(tau, noise, &data);
    let model = LinearGaussian::new(d, noise).unwrap();
    let cfg = EstimatorConfig::quadrature(4);
    for _ in 0..10 {
        let start = VognState::new(
            normal_vec(d, 2.0, &mut rng),
            DVector::from_fn(d, |_, _| 0.1 + rng.random::<f64>()),
        )
        .unwrap();
        let derivs = expected_derivatives(
            &model,
            &start.to_natural().unwrap(),
            &data,
            &cfg,
            &mut cfg.rng(),
        )
        .unwrap();
        let next = vogn_step(
            &start,
            tau,
            &derivs.grad,
            &derivs.hess.diagonal(),
            data.len(),
            data.len(),
            1.0,
        )
        .unwrap();
        for j in 0..d {
            assert!((next.precision_diag[j] - 1.0 / v[(j, j)]).abs() < 1e-8);
            assert!((next.mean[j] - m[j]).abs() < 1e-8);
        }
    }
}

#[test]
fn cvi_is_a_no_op_at_the_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = gaussian_data(10, 2, &mut rng);
    let (m, v) = blr_posterior(1.0, 1.0, &data);
    let post = CviState::new(lambda_from_moments(&m, &v));
    let model = LinearGaussian::new(2, 1.0).unwrap();
    let cfg = EstimatorConfig::quadrature(6);
    let lik = likelihood_natural_part(&model, &post.lam, &data, data.len(), &cfg, &mut cfg.rng())
        .unwrap();
    for alpha in [1e-3, 0.1, 0.5, 1.0] {
        let next = cvi_step(&post, &full_prior(2, 1.0), &lik, alpha).unwrap();
        assert!((next.lam.to_flat() - post.lam.to_flat()).amax() < 1e-12);
    }
}

#[test]
fn cvi_and_vogn_agree_step_by_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 3;
    let data = logistic_data(40, d, &mut rng);
    let model = Logistic::new(d);
    let tau = 1.0;
    let prior = diag_prior(d, tau);
    let mut cvi = CviState::new(prior.clone());
    let mut vogn = VognState::from_prior(d, tau).unwrap();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for step in 0..60u64 {
        if step % 4 == 0 {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
        }
        let chunk = &order[(step as usize % 4) * 10..(step as usize % 4) * 10 + 10];
        let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
        let cfg = EstimatorConfig::monte_carlo(3, HessianMode::GaussNewton, 1000 + step).unwrap();
        let alpha = 0.2;
        let lik =
            likelihood_natural_part(&model, &cvi.lam, &batch, data.len(), &cfg, &mut cfg.rng())
                .unwrap();
        cvi = cvi_step(&cvi, &prior, &lik, alpha).unwrap();
        let dv = expected_derivatives(
            &model,
            &vogn.to_natural().unwrap(),
            &batch,
            &cfg,
            &mut cfg.rng(),
        )
        .unwrap();
        vogn = vogn_step(
            &vogn,
            tau,
            &dv.grad,
            &dv.hess.diagonal(),
            data.len(),
            batch.len(),
            alpha,
        )
        .unwrap();
        let a = cvi.lam.to_flat();
        let b = vogn.to_natural().unwrap().to_flat();
        assert!(
            (&a - &b).amax() < 1e-10 * (1.0 + a.amax()),
            "step {step}: {a} vs {b}"
        );
    }
}

#[test]
fn exact_cvi_increases_the_elbo_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = logistic_data(20, 2, &mut rng);
    let model = Logistic::new(2);
    let prior = full_prior(2, 1.0);
    let cfg = EstimatorConfig::quadrature(32);
    let mut s = CviState::new(prior.clone());
    let mut last = elbo_value(&model, &s.lam, &prior, &data, &cfg, &mut cfg.rng()).unwrap();
    for _ in 0..500 {
        let lik = likelihood_natural_part(&model, &s.lam, &data, data.len(), &cfg, &mut cfg.rng())
            .unwrap();
        s = cvi_step(&s, &prior, &lik, 0.1).unwrap();
        let e = elbo_value(&model, &s.lam, &prior, &data, &cfg, &mut cfg.rng()).unwrap();
        assert!(e >= last - 1e-9, "ELBO fell from {last} to {e}");
        last = e;
    }
}

#[test]
fn euclidean_step_does_not_reach_posterior_in_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data = gaussian_data(15, 2, &mut rng);
    let (m, v) = blr_posterior(1.0, 0.5, &data);
    let target = lambda_from_moments(&m, &v).to_flat();
    let model = LinearGaussian::new(2, 0.5).unwrap();
    let prior = full_prior(2, 1.0);
    let cfg = EstimatorConfig::quadrature(6);
    let start = CviState::new(prior.clone());
    let lik = likelihood_natural_part(&model, &start.lam, &data, data.len(), &cfg, &mut cfg.rng())
        .unwrap();
    let cvi_res = (cvi_step(&start, &prior, &lik, 1.0).unwrap().lam.to_flat() - &target).amax();
    let g = elbo_gradient_lambda(
        &model,
        &start.lam,
        &prior,
        &data,
        data.len(),
        &cfg,
        &mut cfg.rng(),
    )
    .unwrap();
    for rho in [1e-3, 1e-2, 1e-1, 1.0] {
        let sgd_res = (sgd_nat_step(&start, &g, rho).unwrap().lam.to_flat() - &target).amax();
        assert!(
            sgd_res > 1e3 * cvi_res.max(1e-14),
            "rho={rho}: {sgd_res} vs {cvi_res}"
        );
    }
}

fn nsd_block(d: usize, rng: &mut ChaCha8Rng, mode: Mode) -> SymBlock {
    match mode {
        Mode::Full => {
            let b = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
            SymBlock::Full(-(&b * b.transpose()))
        }
        Mode::Diagonal => SymBlock::Diag(DVector::from_fn(d, |_, _| -rng.random::<f64>() * 5.0)),
    }
}

fn packed(l1: DVector<f64>, l2: &SymBlock) -> FlatVec {
    let mut v: Vec<f64> = l1.iter().copied().collect();
    match l2 {
        SymBlock::Diag(x) => v.extend(x.iter()),
        SymBlock::Full(a) => {
            for i in 0..a.nrows() {
                for j in i..a.ncols() {
                    v.push(a[(i, j)]);
                }
            }
        }
    }
    FlatVec::from_vec(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cvi_keeps_lambda_in_omega(seed in 0u64..10_000, d in 1usize..4, full in any::<bool>(), alpha in 1e-3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = if full { Mode::Full } else { Mode::Diagonal };
        let prior = NaturalParams::isotropic_prior(d, 0.5 + rng.random::<f64>(), mode).unwrap();
        let mut s = CviState::new(prior.clone());
        for _ in 0..20 {
            let lik = packed(normal_vec(d, 3.0, &mut rng), &nsd_block(d, &mut rng, mode));
            s = cvi_step(&s, &prior, &lik, alpha).unwrap();
            prop_assert!(in_omega(&s.lam));
        }
    }

    #[test]
    fn vogn_precision_stays_positive(seed in 0u64..10_000, d in 1usize..6, alpha in 1e-3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = 1e-3 + rng.random::<f64>();
        let mut s = VognState::from_prior(d, tau).unwrap();
        for _ in 0..20 {
            let g = normal_vec(d, 10.0, &mut rng);
            let h = DVector::from_fn(d, |_, _| -rng.random::<f64>() * 100.0);
            s = vogn_step(&s, tau, &g, &h, 1000, 10, alpha).unwrap();
            prop_assert!(s.precision_diag.iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn sgd_accepted_steps_stay_in_omega(seed in 0u64..10_000, rho in 1e-3f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = random_full_lambda(2, &mut rng);
        let g = normal_vec(5, 5.0, &mut rng);
        if let Ok(next) = sgd_nat_step(&CviState::new(lam), &g, rho) {
            prop_assert!(in_omega(&next.lam));
        }
    }
}
