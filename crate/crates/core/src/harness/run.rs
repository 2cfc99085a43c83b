use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{DataFormat, ModelKind, OptimizerKind, RunConfig};
use super::metrics::evaluate_predictive;
use crate::data::{load_csv, load_libsvm, split, standardize, synth_logistic, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::expfam::{Mode, NaturalParams};
use crate::gradients::{
    bbb_gradient, elbo_gradient_lambda, elbo_value, expected_derivatives, likelihood_natural_part,
    BbbParams, EstimatorConfig,
};
use crate::models::{Example, LikelihoodModel, LinearGaussian, Logistic, Mlp, MlpArchitecture};
use crate::optimizers::{
    bbb_adam_step, cvi_step, sgd_nat_step, vogn_step, AdamState, CviState, VognState,
};

pub const TRACE_SCHEMA: &str = "# schema: natgrad-trace/1";
pub const TRACE_COLUMNS: [&str; 6] = [
    "epoch",
    "train_elbo",
    "test_log2_loss",
    "test_nll",
    "test_accuracy",
    "step_size",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub epoch: usize,
    /// Wall-clock time since the run started; reported in timing.csv only.
    #[serde(skip)]
    pub elapsed_seconds: f64,
    pub train_elbo: f64,
    pub test_log2_loss: f64,
    pub test_nll: f64,
    pub test_accuracy: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub dataset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub feature_dim: usize,
    pub param_dim: usize,
    pub epochs_completed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(rename = "final", skip_serializing_if = "Option::is_none")]
    pub last: Option<TraceRecord>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: RunSummary,
}

/// Loads, splits and (optionally) standardizes the configured dataset.
pub fn prepare_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let d = &cfg.dataset;
    let missing = || Error::Config("dataset.path is required".into());
    let full = match d.format {
        DataFormat::Libsvm => load_libsvm(d.path.as_deref().ok_or_else(missing)?)?,
        DataFormat::Csv => load_csv(
            d.path.as_deref().ok_or_else(missing)?,
            d.label_column.as_deref().unwrap_or("label"),
        )?,
        DataFormat::Synthetic => {
            let n = d
                .synth_n
                .ok_or_else(|| Error::Config("dataset.synth_n is required".into()))?;
            let k = d
                .synth_d
                .ok_or_else(|| Error::Config("dataset.synth_d is required".into()))?;
            synth_logistic(n, k, cfg.seed)?.0
        }
    };
    if let Some(n) = d.expect_n {
        if full.len() != n {
            return Err(Error::Config(format!(
                "{}: expected N={n}, loaded N={}",
                full.name,
                full.len()
            )));
        }
    }
    if let Some(k) = d.expect_d {
        if full.feature_dim != k {
            return Err(Error::Config(format!(
                "{}: expected D={k}, loaded D={}",
                full.name, full.feature_dim
            )));
        }
    }
    let spec = SplitSpec {
        test_fraction: d.test_fraction,
        seed: d.split_seed.unwrap_or(cfg.seed),
    };
    let (train, test) = split(&full, &spec)?;
    let (train, test) = if d.standardize {
        let (tr, mut rest, _) = standardize(&train, &[&test])?;
        (tr, rest.remove(0))
    } else {
        (train, test)
    };
    if d.bias {
        Ok((train.with_bias(), test.with_bias()))
    } else {
        Ok((train, test))
    }
}

pub fn build_model(cfg: &RunConfig, feature_dim: usize) -> Result<Box<dyn LikelihoodModel>> {
    Ok(match cfg.model.kind {
        ModelKind::Logistic => Box::new(Logistic::new(feature_dim)),
        ModelKind::LinearGaussian => {
            Box::new(LinearGaussian::new(feature_dim, cfg.model.noise_var)?)
        }
        ModelKind::Mlp => Box::new(Mlp::new(MlpArchitecture::new(
            feature_dim,
            cfg.model.hidden_units,
        )?)),
    })
}

enum OptState {
    Natural(CviState),
    Vogn(VognState),
    Bbb(BbbParams, AdamState),
}

impl OptState {
    fn posterior(&self) -> Result<NaturalParams> {
        match self {
            OptState::Natural(s) => Ok(s.lam.clone()),
            OptState::Vogn(s) => s.to_natural(),
            OptState::Bbb(p, _) => p.to_natural(),
        }
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct Session<'a> {
    cfg: &'a RunConfig,
    model: Box<dyn LikelihoodModel>,
    prior: NaturalParams,
    train: Dataset,
    test: Dataset,
    est: EstimatorConfig,
    threshold: f64,
}

impl Session<'_> {
    fn evaluate(
        &self,
        state: &OptState,
        epoch: usize,
        step_size: f64,
        start: &Instant,
        rng: &mut ChaCha8Rng,
    ) -> Result<TraceRecord> {
        let q = state.posterior()?;
        let elbo_cfg = EstimatorConfig {
            n_mc: self.cfg.eval.elbo_n_mc,
            ..self.est
        };
        let train_elbo = elbo_value(
            self.model.as_ref(),
            &q,
            &self.prior,
            &self.train.examples,
            &elbo_cfg,
            rng,
        )?;
        let m = evaluate_predictive(
            self.model.as_ref(),
            &q,
            &self.test.examples,
            self.cfg.eval.n_mc,
            self.threshold,
            rng,
        )?;
        Ok(TraceRecord {
            epoch,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            train_elbo,
            test_log2_loss: m.log2_loss,
            test_nll: m.nll,
            test_accuracy: m.accuracy,
            step_size,
        })
    }

    fn step(
        &self,
        state: OptState,
        batch: &[Example],
        alpha: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<OptState> {
        let model = self.model.as_ref();
        let n = self.train.len();
        let o = &self.cfg.optimizer;
        Ok(match state {
            OptState::Natural(s) => match o.kind {
                OptimizerKind::SgdNat => {
                    let g =
                        elbo_gradient_lambda(model, &s.lam, &self.prior, batch, n, &self.est, rng)?;
                    OptState::Natural(sgd_nat_step(&s, &g, alpha)?)
                }
                _ => {
                    let lik = likelihood_natural_part(model, &s.lam, batch, n, &self.est, rng)?;
                    OptState::Natural(cvi_step(&s, &self.prior, &lik, alpha)?)
                }
            },
            OptState::Vogn(s) => {
                let d = expected_derivatives(model, &s.to_natural()?, batch, &self.est, rng)?;
                OptState::Vogn(vogn_step(
                    &s,
                    o.tau,
                    &d.grad,
                    &d.hess.diagonal(),
                    n,
                    batch.len(),
                    alpha,
                )?)
            }
            OptState::Bbb(p, adam) => {
                let adam = AdamState { lr: alpha, ..adam };
                let g = bbb_gradient(model, &p, &self.prior, batch, n, &self.est, rng)?;
                let (p, adam) = bbb_adam_step(&p, &g, &adam)?;
                OptState::Bbb(p, adam)
            }
        })
    }
}

fn initial_state(cfg: &RunConfig, prior: &NaturalParams) -> Result<OptState> {
    let o = &cfg.optimizer;
    let d = prior.dim();
    Ok(match o.kind {
        OptimizerKind::Cvi | OptimizerKind::SgdNat => {
            OptState::Natural(CviState::new(prior.clone()))
        }
        OptimizerKind::Vogn => OptState::Vogn(VognState::from_prior(d, o.tau)?),
        OptimizerKind::Bbb => OptState::Bbb(
            BbbParams::from_prior(prior)?,
            AdamState::new(
                2 * d,
                o.effective_schedule().alpha0(),
                o.beta1,
                o.beta2,
                o.adam_eps,
            )?,
        ),
    })
}

/// Runs the configured experiment; `Err` carries the partial trace alongside the error.
pub fn run_collect(cfg: &RunConfig) -> std::result::Result<RunOutput, (Vec<TraceRecord>, Error)> {
    cfg.validate().map_err(|e| (Vec::new(), e))?;
    let (train, test) = prepare_data(cfg).map_err(|e| (Vec::new(), e))?;
    let model = build_model(cfg, train.feature_dim).map_err(|e| (Vec::new(), e))?;
    let o = &cfg.optimizer;
    let mode = match o.kind {
        OptimizerKind::Vogn | OptimizerKind::Bbb => Mode::Diagonal,
        _ => o.covariance,
    };
    let prior =
        NaturalParams::isotropic_prior(model.dim(), o.tau, mode).map_err(|e| (Vec::new(), e))?;
    let est = EstimatorConfig {
        n_mc: o.n_mc,
        hessian_mode: o.hessian_mode,
        seed: cfg.seed,
        integrator: o.integrator,
    };
    let threshold = if cfg.model.kind == ModelKind::LinearGaussian {
        0.0
    } else {
        0.5
    };
    let session = Session {
        cfg,
        model,
        prior,
        train,
        test,
        est,
        threshold,
    };
    let mut summary = RunSummary {
        dataset: session.train.name.trim_end_matches("-train").to_string(),
        n_train: session.train.len(),
        n_test: session.test.len(),
        feature_dim: session.train.feature_dim,
        param_dim: session.model.dim(),
        epochs_completed: 0,
        failure: None,
        last: None,
        config: cfg.clone(),
    };

    let start = Instant::now();
    let mut train_rng = rng_stream(cfg.seed, 1);
    let mut eval_rng = rng_stream(cfg.seed, 2);
    let mut shuffle_rng = rng_stream(cfg.seed, 3);
    let schedule = o.effective_schedule();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let mut state = initial_state(cfg, &session.prior).map_err(|e| (Vec::new(), e))?;
    match session.evaluate(&state, 0, schedule.alpha(0), &start, &mut eval_rng) {
        Ok(r) => trace.push(r),
        Err(e) => return Err((trace, e)),
    }

    let n = session.train.len();
    let bs = o.minibatch.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t: u64 = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut alpha = schedule.alpha(t);
        for (step, chunk) in order.chunks(bs).enumerate() {
            let batch: Vec<Example> = chunk
                .iter()
                .map(|&i| session.train.examples[i].clone())
                .collect();
            alpha = schedule.alpha(t);
            state = match session.step(state, &batch, alpha, &mut train_rng) {
                Ok(s) => s,
                Err(e) => {
                    let err = Error::Run {
                        epoch,
                        step,
                        source: Box::new(e),
                    };
                    return Err((trace, err));
                }
            };
            t += 1;
        }
        match session.evaluate(&state, epoch, alpha, &start, &mut eval_rng) {
            Ok(r) => trace.push(r),
            Err(e) => {
                let err = Error::Run {
                    epoch,
                    step: 0,
                    source: Box::new(e),
                };
                return Err((trace, err));
            }
        }
    }
    summary.epochs_completed = cfg.epochs;
    summary.last = trace.last().cloned();
    Ok(RunOutput { trace, summary })
}

/// Runs the experiment and writes its outputs when `output_dir` is set.
///
/// On failure the partial trace is still written before the error is returned.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    match run_collect(cfg) {
        Ok(out) => {
            if let Some(dir) = &cfg.output_dir {
                write_outputs(dir, &out.trace, &out.summary)?;
            }
            Ok(out)
        }
        Err((trace, err)) => {
            if let Some(dir) = &cfg.output_dir {
                let summary = RunSummary {
                    dataset: String::new(),
                    n_train: 0,
                    n_test: 0,
                    feature_dim: 0,
                    param_dim: 0,
                    epochs_completed: trace.len().saturating_sub(1),
                    failure: Some(err.to_string()),
                    last: trace.last().cloned(),
                    config: cfg.clone(),
                };
                write_outputs(dir, &trace, &summary)?;
            }
            Err(err)
        }
    }
}

pub fn write_outputs(dir: &Path, trace: &[TraceRecord], summary: &RunSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trace(&dir.join("trace.csv"), trace)?;
    let mut timing = csv::Writer::from_path(dir.join("timing.csv"))?;
    timing.write_record(["epoch", "elapsed_seconds"])?;
    for r in trace {
        timing.write_record([r.epoch.to_string(), format!("{:.6}", r.elapsed_seconds)])?;
    }
    timing.flush()?;
    let text = toml::to_string(summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("summary.toml"), text)?;
    fs::write(dir.join("config.toml"), summary.config.to_toml())?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{TRACE_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(TRACE_COLUMNS)?;
    for r in trace {
        w.write_record([
            r.epoch.to_string(),
            r.train_elbo.to_string(),
            r.test_log2_loss.to_string(),
            r.test_nll.to_string(),
            r.test_accuracy.to_string(),
            r.step_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace.csv written by [`write_trace`] (elapsed time is not stored there).
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: k + 3,
                    message: format!("bad {} cell", TRACE_COLUMNS[i]),
                })
        };
        out.push(TraceRecord {
            epoch: num(0)? as usize,
            elapsed_seconds: 0.0,
            train_elbo: num(1)?,
            test_log2_loss: num(2)?,
            test_nll: num(3)?,
            test_accuracy: num(4)?,
            step_size: num(5)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Schedule;

    fn small(kind: OptimizerKind) -> RunConfig {
        let mut cfg = RunConfig::synthetic(120, 3);
        cfg.epochs = 3;
        cfg.optimizer.kind = kind;
        cfg.optimizer.minibatch = 32;
        cfg.optimizer.n_mc = 4;
        cfg.optimizer.schedule = Some(Schedule::Constant {
            alpha0: if kind == OptimizerKind::Bbb {
                0.05
            } else {
                0.1
            },
        });
        cfg.eval.n_mc = 20;
        cfg
    }

    #[test]
    fn zero_epochs_gives_one_record() {
        let mut cfg = small(OptimizerKind::Vogn);
        cfg.epochs = 0;
        let out = run(&cfg).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].epoch, 0);
    }

    #[test]
    fn every_optimizer_runs() {
        for kind in [
            OptimizerKind::Cvi,
            OptimizerKind::Vogn,
            OptimizerKind::Bbb,
            OptimizerKind::SgdNat,
        ] {
            let mut cfg = small(kind);
            if kind == OptimizerKind::SgdNat {
                cfg.optimizer.schedule = Some(Schedule::Constant { alpha0: 1e-3 });
            }
            let out = run(&cfg).unwrap_or_else(|e| panic!("{kind:?}: {e}"));
            assert_eq!(out.trace.len(), 4);
            for r in &out.trace {
                assert!(r.test_log2_loss >= 0.0 && (0.0..=1.0).contains(&r.test_accuracy));
            }
        }
    }

    #[test]
    fn prior_start_is_optimizer_independent() {
        let a = run(&small(OptimizerKind::Vogn)).unwrap();
        let b = run(&small(OptimizerKind::Bbb)).unwrap();
        let c = run(&small(OptimizerKind::Cvi)).unwrap();
        assert!((a.trace[0].test_log2_loss - b.trace[0].test_log2_loss).abs() < 1e-9);
        assert!((a.trace[0].test_log2_loss - c.trace[0].test_log2_loss).abs() < 1e-9);
    }

    #[test]
    fn writes_and_reads_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(OptimizerKind::Cvi);
        cfg.output_dir = Some(dir.path().join("out"));
        let out = run(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
        assert!(text.starts_with(TRACE_SCHEMA));
        assert_eq!(text.lines().nth(1).unwrap(), TRACE_COLUMNS.join(","));
        let back = read_trace(&dir.path().join("out/trace.csv")).unwrap();
        assert_eq!(back.len(), out.trace.len());
        assert_eq!(back[2].test_log2_loss, out.trace[2].test_log2_loss);
        assert!(dir.path().join("out/summary.toml").exists());
        assert!(dir.path().join("out/timing.csv").exists());
    }

    #[test]
    fn expected_shape_mismatch_fails() {
        let mut cfg = small(OptimizerKind::Vogn);
        cfg.dataset.expect_d = Some(7);
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
    }
}
