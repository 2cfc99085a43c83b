use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::Mode;
use crate::gradients::Integrator;
use crate::models::HessianMode;
use crate::optimizers::{Schedule, DEFAULT_ALPHA, DEFAULT_BBB_LR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Where trace.csv, timing.csv, summary.toml and config.toml go; nothing is written if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Libsvm,
    Csv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub format: DataFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    /// Size of a synthetic logistic dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_d: Option<usize>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Append a constant-1 feature (linear models).
    #[serde(default)]
    pub bias: bool,
    /// Fail unless the loaded file has exactly this many examples / features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_d: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp,
    LinearGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model_kind")]
    pub kind: ModelKind,
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default = "default_one")]
    pub noise_var: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: default_model_kind(),
            hidden_units: default_hidden(),
            noise_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Cvi,
    Vogn,
    Bbb,
    SgdNat,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Cvi => "cvi",
            OptimizerKind::Vogn => "vogn",
            OptimizerKind::Bbb => "bbb",
            OptimizerKind::SgdNat => "sgd_nat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_optimizer_kind")]
    pub kind: OptimizerKind,
    /// Prior precision τ.
    #[serde(default = "default_one")]
    pub tau: f64,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    /// Defaults to a constant 0.01 (CVI, VOGN, SGD) or 0.001 (BBB).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default = "default_hessian_mode")]
    pub hessian_mode: HessianMode,
    /// Covariance structure of q; VOGN and BBB require diagonal.
    #[serde(default = "default_covariance")]
    pub covariance: Mode,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: default_optimizer_kind(),
            tau: 1.0,
            n_mc: default_n_mc(),
            minibatch: default_minibatch(),
            schedule: None,
            hessian_mode: default_hessian_mode(),
            covariance: default_covariance(),
            integrator: default_integrator(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
        }
    }
}

impl OptimizerConfig {
    pub fn effective_schedule(&self) -> Schedule {
        self.schedule.unwrap_or(Schedule::Constant {
            alpha0: match self.kind {
                OptimizerKind::Bbb => DEFAULT_BBB_LR,
                _ => DEFAULT_ALPHA,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Posterior samples shared by every test point.
    #[serde(default = "default_eval_mc")]
    pub n_mc: usize,
    /// Samples for the training-ELBO estimate.
    #[serde(default = "default_elbo_mc")]
    pub elbo_n_mc: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_mc: default_eval_mc(),
            elbo_n_mc: default_elbo_mc(),
        }
    }
}

fn default_epochs() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}
fn default_model_kind() -> ModelKind {
    ModelKind::Logistic
}
fn default_hidden() -> usize {
    64
}
fn default_one() -> f64 {
    1.0
}
fn default_optimizer_kind() -> OptimizerKind {
    OptimizerKind::Vogn
}
fn default_n_mc() -> usize {
    16
}
fn default_minibatch() -> usize {
    128
}
fn default_hessian_mode() -> HessianMode {
    HessianMode::GaussNewton
}
fn default_covariance() -> Mode {
    Mode::Diagonal
}
fn default_integrator() -> Integrator {
    Integrator::MonteCarlo
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_eval_mc() -> usize {
    100
}
fn default_elbo_mc() -> usize {
    10
}

fn range(ok: bool, name: &str, detail: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} out of range: {detail}")))
    }
}

impl RunConfig {
    /// A synthetic-logistic config with every other setting at its default.
    pub fn synthetic(n: usize, d: usize) -> Self {
        let ds = DatasetConfig {
            format: DataFormat::Synthetic,
            path: None,
            label_column: None,
            synth_n: Some(n),
            synth_d: Some(d),
            test_fraction: default_test_fraction(),
            split_seed: None,
            standardize: true,
            bias: false,
            expect_n: None,
            expect_d: None,
        };
        RunConfig {
            seed: 0,
            epochs: default_epochs(),
            output_dir: None,
            dataset: ds,
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Parses TOML text, applies `key.path=value` overrides, validates, and
    /// fills in the effective schedule so the echo is complete.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.optimizer.schedule = Some(cfg.optimizer.effective_schedule());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig always serializes")
    }

    /// Makes relative dataset and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &self.dataset.path {
            if p.is_relative() {
                self.dataset.path = Some(base.join(p));
            }
        }
        if let Some(p) = &self.output_dir {
            if p.is_relative() {
                self.output_dir = Some(base.join(p));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        range(o.tau > 0.0 && o.tau.is_finite(), "optimizer.tau", o.tau)?;
        range(o.n_mc >= 1, "optimizer.n_mc", o.n_mc)?;
        range(o.minibatch >= 1, "optimizer.minibatch", o.minibatch)?;
        range((0.0..1.0).contains(&o.beta1), "optimizer.beta1", o.beta1)?;
        range((0.0..1.0).contains(&o.beta2), "optimizer.beta2", o.beta2)?;
        range(o.adam_eps > 0.0, "optimizer.adam_eps", o.adam_eps)?;
        if let Integrator::GaussHermite { nodes } = o.integrator {
            range(nodes >= 1, "optimizer.integrator.nodes", nodes)?;
        }
        let sched = o.effective_schedule();
        match o.kind {
            OptimizerKind::Cvi | OptimizerKind::Vogn => sched.validate_unit()?,
            OptimizerKind::Bbb | OptimizerKind::SgdNat => sched.validate_positive()?,
        }
        if matches!(o.kind, OptimizerKind::Vogn | OptimizerKind::Bbb)
            && o.covariance != Mode::Diagonal
        {
            return Err(Error::Config(format!(
                "optimizer.covariance must be diagonal for {:?}",
                o.kind
            )));
        }
        if self.model.kind == ModelKind::Mlp {
            if o.hessian_mode == HessianMode::Exact && o.kind != OptimizerKind::Bbb {
                return Err(Error::Config(
                    "the MLP has no exact Hessian; use gauss_newton".into(),
                ));
            }
            if matches!(o.integrator, Integrator::GaussHermite { .. }) {
                return Err(Error::Config(
                    "gauss_hermite needs a linear-predictor model; use monte_carlo for the MLP"
                        .into(),
                ));
            }
        }
        let m = &self.model;
        range(m.hidden_units >= 1, "model.hidden_units", m.hidden_units)?;
        range(
            m.noise_var > 0.0 && m.noise_var.is_finite(),
            "model.noise_var",
            m.noise_var,
        )?;
        let d = &self.dataset;
        range(
            d.test_fraction > 0.0 && d.test_fraction < 1.0,
            "dataset.test_fraction",
            d.test_fraction,
        )?;
        match d.format {
            DataFormat::Libsvm | DataFormat::Csv if d.path.is_none() => {
                return Err(Error::Config("dataset.path is required".into()))
            }
            DataFormat::Csv if d.label_column.is_none() => {
                return Err(Error::Config(
                    "dataset.label_column is required for csv".into(),
                ))
            }
            DataFormat::Synthetic => {
                range(
                    d.synth_n.unwrap_or(0) >= 2,
                    "dataset.synth_n",
                    format!("{:?}", d.synth_n),
                )?;
                range(
                    d.synth_d.unwrap_or(0) >= 1,
                    "dataset.synth_d",
                    format!("{:?}", d.synth_d),
                )?;
            }
            _ => {}
        }
        range(self.eval.n_mc >= 1, "eval.n_mc", self.eval.n_mc)?;
        range(
            self.eval.elbo_n_mc >= 1,
            "eval.elbo_n_mc",
            self.eval.elbo_n_mc,
        )?;
        Ok(())
    }
}

/// Reads a config file; relative paths inside it resolve against its directory.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(Error::io_at(path))?;
    let mut cfg = RunConfig::from_toml_str(&text, overrides)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
