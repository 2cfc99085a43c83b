use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::run::{read_trace, run, TraceRecord};
use crate::error::{Error, Result};

pub const COMPARE_SCHEMA: &str = "# schema: natgrad-compare/1";

/// One run's test log₂-loss curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub label: String,
    pub values: Vec<f64>,
    /// False for aborted runs; their header cell gets a `[incomplete]` suffix.
    pub complete: bool,
}

#[derive(Debug)]
pub struct CompareReport {
    pub path: PathBuf,
    pub columns: Vec<Column>,
    /// Runs that aborted, with their errors.
    pub failures: Vec<(String, Error)>,
}

/// Configs must agree on the dataset section and the seed.
pub fn check_comparable(configs: &[RunConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(Error::contract("nothing to compare"));
    };
    for (k, c) in configs.iter().enumerate().skip(1) {
        if c.dataset != first.dataset {
            return Err(Error::contract(format!(
                "config {} uses a different dataset or split",
                k + 1
            )));
        }
        if c.seed != first.seed {
            return Err(Error::contract(format!(
                "config {} has seed {}, expected {}",
                k + 1,
                c.seed,
                first.seed
            )));
        }
    }
    Ok(())
}

/// Epoch-aligned CSV text; short columns are padded with empty cells.
pub fn align_columns(columns: &[Column]) -> String {
    let rows = columns.iter().map(|c| c.values.len()).max().unwrap_or(0);
    let mut out = String::new();
    out.push_str(COMPARE_SCHEMA);
    out.push('\n');
    out.push_str("epoch");
    for c in columns {
        out.push(',');
        out.push_str(&c.label);
        out.push_str("_test_log2_loss");
        if !c.complete {
            out.push_str(" [incomplete]");
        }
    }
    out.push('\n');
    for e in 0..rows {
        out.push_str(&e.to_string());
        for c in columns {
            out.push(',');
            if let Some(v) = c.values.get(e) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

fn label_for(k: usize, cfg: &RunConfig) -> String {
    format!("run{}_{}", k + 1, cfg.optimizer.kind.name())
}

/// Runs each config into `out_dir/<label>/` and writes `out_dir/comparison.csv`.
pub fn compare_runs(configs: &[RunConfig], out_dir: &Path) -> Result<CompareReport> {
    check_comparable(configs)?;
    fs::create_dir_all(out_dir)?;
    let mut columns = Vec::new();
    let mut failures = Vec::new();
    for (k, cfg) in configs.iter().enumerate() {
        let label = label_for(k, cfg);
        let mut cfg = cfg.clone();
        cfg.output_dir = Some(out_dir.join(&label));
        let (trace, complete) = match run(&cfg) {
            Ok(out) => (out.trace, true),
            Err(e) => {
                let trace = read_trace(&out_dir.join(&label).join("trace.csv")).unwrap_or_default();
                failures.push((label.clone(), e));
                (trace, false)
            }
        };
        columns.push(Column {
            label,
            values: trace
                .iter()
                .map(|r: &TraceRecord| r.test_log2_loss)
                .collect(),
            complete,
        });
    }
    let path = out_dir.join("comparison.csv");
    let mut f = fs::File::create(&path)?;
    f.write_all(align_columns(&columns).as_bytes())?;
    Ok(CompareReport {
        path,
        columns,
        failures,
    })
}
