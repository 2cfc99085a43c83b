mod support;

use natgrad_vi::expfam::{FlatVec, Mode};
use natgrad_vi::gradients::{likelihood_natural_part, EstimatorConfig};
use natgrad_vi::local_approx::{
    describe_top_sites, fixed_point_residual, reconstruct, site_update_batch, write_site_dump,
    SiteParams,
};
use natgrad_vi::models::{Example, LikelihoodModel, LinearGaussian, Logistic};
use natgrad_vi::optimizers::{cvi_step, CviState};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn per_example(
    model: &dyn LikelihoodModel,
    sp: &SiteParams,
    data: &[Example],
    batch: &[usize],
    cfg: &EstimatorConfig,
) -> Vec<FlatVec> {
    let lam = reconstruct(sp).unwrap();
    batch
        .iter()
        .map(|&i| {
            likelihood_natural_part(
                model,
                &lam,
                std::slice::from_ref(&data[i]),
                1,
                cfg,
                &mut cfg.rng(),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn sites_track_cvi_under_random_minibatches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = logistic_data(10, 2, &mut rng);
    let model = Logistic::new(2);
    let prior = full_prior(2, 1.0);
    let cfg = EstimatorConfig::quadrature(20);
    let mut sp = SiteParams::zeros(data.len(), prior.clone());
    let mut cvi = CviState::new(prior.clone());
    for _ in 0..200 {
        let size = rng.random_range(1..=data.len());
        let batch = sample(&mut rng, data.len(), size).into_vec();
        let alpha = rng.random_range(0.01..0.5);
        let g = per_example(&model, &sp, &data, &batch, &cfg);
        sp = site_update_batch(&sp, &batch, &g, data.len(), alpha).unwrap();
        let b: Vec<Example> = batch.iter().map(|&i| data[i].clone()).collect();
        let lik = likelihood_natural_part(&model, &cvi.lam, &b, data.len(), &cfg, &mut cfg.rng())
            .unwrap();
        cvi = cvi_step(&cvi, &prior, &lik, alpha).unwrap();
        let diff = (reconstruct(&sp).unwrap().to_flat() - cvi.lam.to_flat()).amax();
        assert!(diff < 1e-10, "trajectories diverged by {diff}");
    }
}

#[test]
fn full_batch_sites_converge_to_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data = logistic_data(20, 2, &mut rng);
    let model = Logistic::new(2);
    let cfg = EstimatorConfig::quadrature(20);
    let mut sp = SiteParams::zeros(data.len(), full_prior(2, 1.0));
    let all: Vec<usize> = (0..data.len()).collect();
    for _ in 0..500 {
        let g = per_example(&model, &sp, &data, &all, &cfg);
        sp = site_update_batch(&sp, &all, &g, data.len(), 0.2).unwrap();
    }
    let r = fixed_point_residual(&sp, &model, &data, &cfg, &mut cfg.rng()).unwrap();
    assert!(r < 1e-6, "residual {r}");
    let g = per_example(&model, &sp, &data, &all, &cfg);
    for (s, gi) in sp.sites.iter().zip(&g) {
        assert!((s - gi).amax() < 1e-6);
    }
}

#[test]
fn conjugate_sites_equal_observation_contributions_after_one_full_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let data = gaussian_data(8, 3, &mut rng);
    let model = LinearGaussian::new(3, 0.7).unwrap();
    let cfg = EstimatorConfig::quadrature(4);
    let sp = SiteParams::zeros(data.len(), full_prior(3, 1.0));
    let all: Vec<usize> = (0..data.len()).collect();
    let g = per_example(&model, &sp, &data, &all, &cfg);
    let sp = site_update_batch(&sp, &all, &g, data.len(), 1.0).unwrap();
    for (s, ex) in sp.sites.iter().zip(&data) {
        let (l1, l2) = model.site_contribution(ex, Mode::Full);
        let mut expect: Vec<f64> = l1.iter().copied().collect();
        let a = l2.to_dense();
        for i in 0..3 {
            for j in i..3 {
                expect.push(a[(i, j)]);
            }
        }
        assert!((s - FlatVec::from_vec(expect)).amax() < 1e-10);
    }
    let (m, v) = blr_posterior(1.0, 0.7, &data);
    assert!(
        (reconstruct(&sp).unwrap().to_flat() - lambda_from_moments(&m, &v).to_flat()).amax() < 1e-9
    );
}

#[test]
fn reconstruction_is_linear_in_the_sites() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let prior = diag_prior(3, 2.0);
    let mut sp = SiteParams::zeros(5, prior.clone());
    for s in sp.sites.iter_mut() {
        *s = normal_vec(6, 0.1, &mut rng);
        for k in 3..6 {
            s[k] = -s[k].abs();
        }
    }
    let sum: FlatVec = sp.sites.iter().fold(prior.to_flat(), |acc, s| acc + s);
    assert!((reconstruct(&sp).unwrap().to_flat() - sum).amax() < 1e-14);
}

#[test]
fn site_dump_has_one_row_per_site() {
    let dir = tempfile::tempdir().unwrap();
    let mut sp = SiteParams::zeros(4, diag_prior(2, 1.0));
    sp.sites[2] = FlatVec::from_vec(vec![3.0, 0.0, -4.0, 0.0]);
    let path = dir.path().join("sites.csv");
    write_site_dump(&sp, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
    let mut out = Vec::new();
    describe_top_sites(&sp, 1, &mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().contains('2'));
}
