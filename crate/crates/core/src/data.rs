//! Dataset loading, splitting and preprocessing.
//!
//! Two on-disk formats are supported:
//!
//! * LIBSVM sparse text: `label idx:value idx:value ...`, 1-based indices,
//!   whitespace separated. Missing indices are zero.
//! * Numeric CSV with a header row; one column holds the label.
//!
//! Labels in {−1, +1} or {1, 2} are remapped to {0, 1}.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sigmoid, Example};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_dim: usize,
        examples: Vec<Example>,
    ) -> Result<Self> {
        if let Some(i) = examples
            .iter()
            .position(|e| e.features.len() != feature_dim)
        {
            return Err(Error::contract(format!(
                "example {i} has {} features, expected {feature_dim}",
                examples[i].features.len()
            )));
        }
        Ok(Dataset {
            name: name.into(),
            feature_dim,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Appends a constant-1 feature.
    pub fn with_bias(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_dim: self.feature_dim + 1,
            examples: self
                .examples
                .iter()
                .map(|e| {
                    let mut f = e.features.clone();
                    f.push(1.0);
                    Example::new(f, e.target)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Maps {−1,+1} and {1,2} onto {0,1}; {0,1} passes through.
fn remap_labels(raw: &[f64]) -> std::result::Result<Vec<f64>, String> {
    let mut distinct: Vec<f64> = Vec::new();
    for &y in raw {
        if !distinct.contains(&y) {
            distinct.push(y);
        }
    }
    let within = |set: [f64; 2]| distinct.iter().all(|y| set.contains(y));
    let map: fn(f64) -> f64 = if within([0.0, 1.0]) {
        |y| y
    } else if within([-1.0, 1.0]) {
        |y| if y > 0.0 { 1.0 } else { 0.0 }
    } else if within([1.0, 2.0]) {
        |y| y - 1.0
    } else {
        return Err(format!("unsupported label set {distinct:?}"));
    };
    Ok(raw.iter().map(|&y| map(y)).collect())
}

fn name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(Error::io_at(path))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(k + 1, format!("bad label {label_tok:?}")))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(k + 1, format!("expected index:value, got {tok:?}")))?;
            let i: usize = i
                .parse()
                .map_err(|_| parse_err(k + 1, format!("bad index {i:?}")))?;
            if i == 0 {
                return Err(parse_err(k + 1, "indices are 1-based".into()));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| parse_err(k + 1, format!("bad value {v:?}")))?;
            max_index = max_index.max(i);
            row.push((i - 1, v));
        }
        labels.push(label);
        rows.push(row);
    }
    let labels = remap_labels(&labels).map_err(|m| parse_err(0, m))?;
    let examples = rows
        .into_iter()
        .zip(labels)
        .map(|(row, y)| {
            let mut f = vec![0.0; max_index];
            for (i, v) in row {
                f[i] = v;
            }
            Example::new(f, y)
        })
        .collect();
    Dataset::new(name_of(path), max_index, examples)
}

/// Writes labels as 0/1 and every feature explicitly (round-trips through [`load_libsvm`]).
pub fn write_libsvm(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for e in &ds.examples {
        write!(out, "{}", e.target)?;
        for (i, v) in e.features.iter().enumerate() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a numeric CSV with a header row; `label_column` names the target.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(Error::io_at(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("no column named {label_column:?}"),
        })?;
    let width = headers.len();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut row = Vec::with_capacity(width - 1);
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!(
                    "column {} ({:?}): not a number: {cell:?}",
                    c + 1,
                    &headers[c]
                ),
            })?;
            if c == label_idx {
                labels.push(v);
            } else {
                row.push(v);
            }
        }
        features.push(row);
    }
    let labels = remap_labels(&labels).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    })?;
    let examples = features
        .into_iter()
        .zip(labels)
        .map(|(f, y)| Example::new(f, y))
        .collect();
    Dataset::new(name_of(path), width - 1, examples)
}

/// Writes `x1..xD,label`.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(fs::File::create(path).map_err(Error::io_at(path))?);
    let mut header: Vec<String> = (1..=ds.feature_dim).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for e in &ds.examples {
        let mut rec: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
        rec.push(e.target.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-feature affine map x ↦ (x − mean)/std fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; zero-variance features record std = 1.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::contract(
                "cannot standardize on an empty training set",
            ));
        }
        let n = train.len() as f64;
        let d = train.feature_dim;
        let mut means = vec![0.0; d];
        for e in &train.examples {
            for (m, x) in means.iter_mut().zip(&e.features) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for e in &train.examples {
            for j in 0..d {
                vars[j] += (e.features[j] - means[j]).powi(2);
            }
        }
        let stds = vars
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 * (1.0 + means_scale(&means)) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { means, stds })
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let examples = ds
            .examples
            .iter()
            .map(|e| {
                let f = e
                    .features
                    .iter()
                    .zip(self.means.iter().zip(&self.stds))
                    .map(|(x, (m, s))| (x - m) / s)
                    .collect();
                Example::new(f, e.target)
            })
            .collect();
        Dataset {
            name: ds.name.clone(),
            feature_dim: ds.feature_dim,
            examples,
        }
    }
}

fn means_scale(means: &[f64]) -> f64 {
    means.iter().fold(0.0, |a, m| a.max(m.abs()))
}

/// Standardizes `train` and every entry of `others` with train statistics.
pub fn standardize(
    train: &Dataset,
    others: &[&Dataset],
) -> Result<(Dataset, Vec<Dataset>, Standardizer)> {
    let st = Standardizer::fit(train)?;
    let out = others.iter().map(|d| st.apply(d)).collect();
    Ok((st.apply(train), out, st))
}

/// Seeded shuffle, then the first round(N·f) examples form the test set.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let f = spec.test_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::contract(format!(
            "test_fraction must lie in (0, 1), got {f}"
        )));
    }
    let n = ds.len();
    let n_test = (n as f64 * f).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::contract(format!(
            "split of {n} examples at fraction {f} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let pick = |idx: &[usize], suffix: &str| Dataset {
        name: format!("{}-{suffix}", ds.name),
        feature_dim: ds.feature_dim,
        examples: idx.iter().map(|&i| ds.examples[i].clone()).collect(),
    };
    let test = pick(&order[..n_test], "test");
    let train = pick(&order[n_test..], "train");
    Ok((train, test))
}

/// z* ~ N(0, I), x ~ N(0, I), y ~ Bernoulli(σ(z*ᵀx)).
pub fn synth_logistic(n: usize, d: usize, seed: u64) -> Result<(Dataset, DVector<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::contract("synth_logistic needs n, d ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
    let examples = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let a: f64 = x.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
            let y = if rng.random::<f64>() < sigmoid(a) {
                1.0
            } else {
                0.0
            };
            Example::new(x, y)
        })
        .collect();
    Ok((
        Dataset::new(format!("synth-logistic-{n}x{d}-{seed}"), d, examples)?,
        z,
    ))
}
