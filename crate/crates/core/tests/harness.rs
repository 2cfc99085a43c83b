use natgrad_vi::expfam::Mode;
use natgrad_vi::expfam::NaturalParams;
use natgrad_vi::harness::{
    compare_runs, evaluate_predictive, parse_config, read_trace, run, run_collect, DataFormat,
    ModelKind, OptimizerKind, RunConfig, TRACE_SCHEMA,
};
use natgrad_vi::models::{Example, Logistic};
use natgrad_vi::optimizers::Schedule;
use natgrad_vi::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(kind: OptimizerKind) -> RunConfig {
    let mut cfg = RunConfig::synthetic(500, 5);
    cfg.seed = 3;
    cfg.epochs = 5;
    cfg.optimizer.kind = kind;
    cfg.optimizer.minibatch = 50;
    cfg.optimizer.n_mc = 4;
    cfg.optimizer.schedule = Some(Schedule::Constant {
        alpha0: if kind == OptimizerKind::Bbb {
            0.05
        } else {
            0.1
        },
    });
    cfg.eval.n_mc = 50;
    cfg
}

#[test]
fn repeated_runs_write_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for k in 0..2 {
        let mut cfg = small(OptimizerKind::Vogn);
        cfg.output_dir = Some(dir.path().join(format!("r{k}")));
        run(&cfg).unwrap();
        texts.push(std::fs::read(dir.path().join(format!("r{k}/trace.csv"))).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let text = String::from_utf8(texts[0].clone()).unwrap();
    assert!(text.starts_with(TRACE_SCHEMA));
    let trace = read_trace(&dir.path().join("r0/trace.csv")).unwrap();
    assert_eq!(trace.len(), 6);
    for f in ["timing.csv", "summary.toml", "config.toml"] {
        assert!(dir.path().join("r0").join(f).exists(), "{f}");
    }
}

#[test]
fn every_optimizer_improves_on_the_prior() {
    for kind in [
        OptimizerKind::Vogn,
        OptimizerKind::Cvi,
        OptimizerKind::Bbb,
        OptimizerKind::SgdNat,
    ] {
        let mut cfg = small(kind);
        if kind == OptimizerKind::SgdNat {
            cfg.optimizer.schedule = Some(Schedule::Constant { alpha0: 1e-3 });
        }
        let out = run(&cfg).unwrap();
        let first = out.trace.first().unwrap().test_log2_loss;
        let last = out.trace.last().unwrap().test_log2_loss;
        assert!(last < first, "{}: {first} -> {last}", kind.name());
        assert!(out.trace.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
    }
}

#[test]
fn full_covariance_cvi_runs_on_a_linear_gaussian_model() {
    let mut cfg = small(OptimizerKind::Cvi);
    cfg.model.kind = ModelKind::LinearGaussian;
    cfg.optimizer.covariance = Mode::Full;
    cfg.dataset.bias = true;
    let out = run(&cfg).unwrap();
    assert_eq!(out.summary.param_dim, 6);
    assert!(out.trace.iter().all(|r| r.train_elbo.is_finite()));
}

#[test]
fn prior_predictive_is_near_one_bit_on_balanced_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = Logistic::new(4);
    let q = NaturalParams::isotropic_prior(4, 1e6, Mode::Diagonal).unwrap();
    let test: Vec<Example> = (0..400)
        .map(|i| Example::new(vec![0.3, -0.1, 0.2, 0.5], f64::from(i % 2 == 0)))
        .collect();
    let m = evaluate_predictive(&model, &q, &test, 100, 0.5, &mut rng).unwrap();
    assert!((m.log2_loss - 1.0).abs() < 0.1, "{}", m.log2_loss);
    assert!((m.nll - std::f64::consts::LN_2).abs() < 0.1);
}

#[test]
fn zero_epochs_records_only_the_initial_state() {
    let mut cfg = small(OptimizerKind::Vogn);
    cfg.epochs = 0;
    let out = run(&cfg).unwrap();
    assert_eq!(out.trace.len(), 1);
    assert_eq!(out.trace[0].epoch, 0);
    assert_eq!(out.summary.epochs_completed, 0);
}

#[test]
fn failing_run_keeps_its_partial_trace() {
    // An absurd learning rate sends BBB's σ to infinity within the first epoch.
    let mut cfg = small(OptimizerKind::Bbb);
    cfg.optimizer.schedule = Some(Schedule::Constant { alpha0: 1e300 });
    match run_collect(&cfg) {
        Err((trace, e)) => {
            assert!(!trace.is_empty());
            assert!(matches!(e, Error::Run { .. }), "{e}");
        }
        Ok(_) => panic!("an overflowing step size should abort the run"),
    }
}

#[test]
fn config_file_paths_resolve_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("d")).unwrap();
    let (ds, _) = natgrad_vi::data::synth_logistic(60, 2, 1).unwrap();
    natgrad_vi::data::write_libsvm(&ds, &dir.path().join("d/x.libsvm")).unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "epochs = 1\n[dataset]\nformat = \"libsvm\"\npath = \"d/x.libsvm\"\n",
    )
    .unwrap();
    let cfg = parse_config(&path, &["optimizer.minibatch=10".into()]).unwrap();
    assert_eq!(cfg.dataset.format, DataFormat::Libsvm);
    assert_eq!(cfg.optimizer.minibatch, 10);
    run(&cfg).unwrap();
    std::fs::write(
        &path,
        "[dataset]\nformat = \"libsvm\"\npath = \"d/x.libsvm\"\nbogus = 1\n",
    )
    .unwrap();
    assert!(matches!(parse_config(&path, &[]), Err(Error::Config(_))));
}

#[test]
fn comparison_aligns_runs_by_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let a = small(OptimizerKind::Vogn);
    let mut b = small(OptimizerKind::Bbb);
    b.epochs = 3;
    let report = compare_runs(&[a, b], dir.path()).unwrap();
    assert!(report.failures.is_empty());
    let text = std::fs::read_to_string(&report.path).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 7);
    assert!(rows[0].contains("run1_vogn") && rows[0].contains("run2_bbb"));
    let mut c = small(OptimizerKind::Vogn);
    c.seed = 99;
    assert!(matches!(
        compare_runs(&[small(OptimizerKind::Vogn), c], dir.path()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn invalid_model_settings_fail_before_any_work() {
    let mut cfg = small(OptimizerKind::Cvi);
    cfg.model.kind = ModelKind::Mlp;
    cfg.optimizer.hessian_mode = natgrad_vi::models::HessianMode::Exact;
    match run_collect(&cfg) {
        Err((trace, Error::Config(_))) => assert!(trace.is_empty()),
        other => panic!(
            "expected a config error, got {:?}",
            other.map(|o| o.trace.len())
        ),
    }
}
