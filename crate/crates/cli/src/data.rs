//! Dataset and metalearning-record I/O.
//!
//! Datasets use the svmlight/libsvm sparse text format: one sample per
//! line, `label idx:val idx:val ...` with 1-based, strictly ascending
//! feature indices; `#` starts a comment. Labels are normalized at load:
//! positive values map to `+1`, everything else to `-1` (so `{0, 1}` files
//! become `{-1, +1}`).
//!
//! Metalearning records are a four-column CSV with the exact header
//! `objective_tag,task_tag,data_tag,best_value`.

use std::fs;
use std::path::Path;

use accsmbo::{HyperparamPoint, MetaRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CliError, Result};

/// A parsed sparse classification dataset, before train/validation
/// splitting. Feature columns are 0-based internally.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseData {
    pub rows: Vec<Vec<(u32, f64)>>,
    pub labels: Vec<f64>,
    pub n_features: usize,
}

impl SparseData {
    /// Fraction of zero entries in the dense `rows x n_features` view.
    pub fn sparsity(&self) -> f64 {
        let total = self.rows.len() * self.n_features;
        if total == 0 {
            return 0.0;
        }
        let nonzero: usize = self.rows.iter().map(Vec::len).sum();
        1.0 - nonzero as f64 / total as f64
    }
}

/// Read an svmlight file. Errors carry the offending line number.
pub fn read_svmlight(path: &Path) -> Result<SparseData> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0u32;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_token = tokens.next().expect("non-empty line has a first token");
        let label: f64 = label_token.parse().map_err(|_| {
            CliError::at_line(path.display(), lineno, format!("invalid label '{label_token}'"))
        })?;
        if !label.is_finite() {
            return Err(CliError::at_line(path.display(), lineno, "label must be finite"));
        }
        let mut row: Vec<(u32, f64)> = Vec::new();
        for token in tokens {
            let (idx_str, val_str) = token.split_once(':').ok_or_else(|| {
                CliError::at_line(
                    path.display(),
                    lineno,
                    format!("expected 'index:value', got '{token}'"),
                )
            })?;
            let idx: u32 = idx_str.parse().map_err(|_| {
                CliError::at_line(path.display(), lineno, format!("invalid feature index '{idx_str}'"))
            })?;
            if idx == 0 {
                return Err(CliError::at_line(
                    path.display(),
                    lineno,
                    "feature indices are 1-based; got 0",
                ));
            }
            let val: f64 = val_str.parse().map_err(|_| {
                CliError::at_line(path.display(), lineno, format!("invalid feature value '{val_str}'"))
            })?;
            if !val.is_finite() {
                return Err(CliError::at_line(
                    path.display(),
                    lineno,
                    format!("feature value must be finite, got '{val_str}'"),
                ));
            }
            if let Some(&(prev, _)) = row.last() {
                if idx <= prev + 1 {
                    return Err(CliError::at_line(
                        path.display(),
                        lineno,
                        format!("feature indices must be strictly ascending ({} then {idx})", prev + 1),
                    ));
                }
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no samples (empty or all-comment file)",
            path.display()
        )));
    }
    Ok(SparseData {
        rows,
        labels,
        n_features: max_index as usize,
    })
}

/// Write a dataset in svmlight format (ascending 1-based indices, labels
/// as `+1`/`-1`). Byte-deterministic given identical inputs.
pub fn write_svmlight(path: &Path, data: &SparseData) -> Result<()> {
    let mut out = String::new();
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        out.push_str(if label > 0.0 { "+1" } else { "-1" });
        for &(col, val) in row {
            out.push_str(&format!(" {}:{}", col + 1, val));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path.display(), e))
}

/// Generate a synthetic sparse classification dataset: features are
/// standard normal with independent `1 - sparsity` fill probability,
/// labels come from a planted normal separator and flip with probability
/// `noise`. Deterministic per seed.
pub fn gen_classification(
    rows: usize,
    cols: usize,
    sparsity: f64,
    noise: f64,
    seed: u64,
) -> Result<SparseData> {
    if rows == 0 || cols == 0 {
        return Err(CliError::Config("dataset needs at least one row and column".into()));
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(CliError::Config(format!(
            "sparsity must lie in [0, 1), got {sparsity}"
        )));
    }
    if !(0.0..=0.5).contains(&noise) {
        return Err(CliError::Config(format!(
            "label noise must lie in [0, 0.5], got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = {
        let mut spare: Option<f64> = None;
        move |rng: &mut ChaCha8Rng| -> f64 {
            if let Some(z) = spare.take() {
                return z;
            }
            // Box-Muller on (0, 1] uniforms.
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            spare = Some(r * theta.sin());
            r * theta.cos()
        }
    };
    let separator: Vec<f64> = (0..cols).map(|_| normal(&mut rng)).collect();
    let mut data_rows = Vec::with_capacity(rows);
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut row: Vec<(u32, f64)> = Vec::new();
        let mut margin = 0.0;
        for col in 0..cols {
            if rng.random::<f64>() < sparsity {
                continue;
            }
            let value = normal(&mut rng);
            margin += separator[col] * value;
            row.push((col as u32, value));
        }
        let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < noise {
            label = -label;
        }
        data_rows.push(row);
        labels.push(label);
    }
    Ok(SparseData {
        rows: data_rows,
        labels,
        n_features: cols,
    })
}

/// The exact metalearning CSV header.
pub const META_HEADER: &str = "objective_tag,task_tag,data_tag,best_value";

/// Read metalearning records; best values become scalar points in `[0, 1]`.
pub fn read_meta_records(path: &Path) -> Result<Vec<MetaRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == META_HEADER => {}
        Some((_, header)) => {
            return Err(CliError::at_line(
                path.display(),
                1,
                format!("expected header '{META_HEADER}', got '{header}'"),
            ))
        }
        None => return Err(CliError::Data(format!("{}: empty file", path.display()))),
    }
    let mut records = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::at_line(
                path.display(),
                lineno,
                format!("expected 4 comma-separated fields, got {}", fields.len()),
            ));
        }
        let value: f64 = fields[3].trim().parse().map_err(|_| {
            CliError::at_line(path.display(), lineno, format!("invalid best_value '{}'", fields[3]))
        })?;
        let point = HyperparamPoint::scalar(value)
            .map_err(|e| CliError::at_line(path.display(), lineno, e))?;
        let record = MetaRecord::new(fields[0].trim(), fields[1].trim(), fields[2].trim(), point)
            .map_err(|e| CliError::at_line(path.display(), lineno, e))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "{}: header but no records",
            path.display()
        )));
    }
    Ok(records)
}

/// Write metalearning records with the canonical header. Tags must stay
/// CSV-safe (no commas or newlines), or the file could not be read back.
pub fn write_meta_records(path: &Path, records: &[MetaRecord]) -> Result<()> {
    let mut out = String::from(META_HEADER);
    out.push('\n');
    for r in records {
        for tag in [r.objective_tag(), r.task_tag(), r.data_tag()] {
            if tag.contains(',') || tag.contains('\n') {
                return Err(CliError::Data(format!(
                    "tag '{tag}' contains a comma or newline and cannot be written as CSV"
                )));
            }
        }
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.objective_tag(),
            r.task_tag(),
            r.data_tag(),
            r.best_point().value()
        ));
    }
    fs::write(path, out).map_err(|e| CliError::io(path.display(), e))
}

/// Distribution of generated best-hyperparameter locations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetaDistribution {
    /// Normal, resampled until the draw lands inside `[0, 1]`.
    Normal { mean: f64, sd: f64 },
    /// Uniform over `[lo, hi]`, which must sit inside `[0, 1]`.
    Uniform { lo: f64, hi: f64 },
}

/// Generate `count` best-value locations in `[0, 1]`, deterministic per
/// seed.
pub fn gen_meta_values(count: usize, dist: MetaDistribution, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(CliError::Config("record count must be at least 1".into()));
    }
    match dist {
        MetaDistribution::Normal { mean, sd } => {
            if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                return Err(CliError::Config(format!(
                    "normal distribution needs finite mean and positive sd, got mean={mean} sd={sd}"
                )));
            }
        }
        MetaDistribution::Uniform { lo, hi } => {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(CliError::Config(format!(
                    "uniform bounds must satisfy 0 <= lo < hi <= 1, got lo={lo} hi={hi}"
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let v = match dist {
            MetaDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            MetaDistribution::Normal { mean, sd } => {
                let mut attempts = 0;
                loop {
                    // Box-Muller, cosine branch only (independent draws).
                    let u1: f64 = 1.0 - rng.random::<f64>();
                    let u2: f64 = rng.random();
                    let z = (-2.0 * u1.ln()).sqrt()
                        * (2.0 * std::f64::consts::PI * u2).cos();
                    let v = mean + sd * z;
                    if (0.0..=1.0).contains(&v) {
                        break v;
                    }
                    attempts += 1;
                    if attempts >= 10_000 {
                        return Err(CliError::Config(format!(
                            "normal(mean={mean}, sd={sd}) puts almost no mass in [0, 1]"
                        )));
                    }
                }
            }
        };
        values.push(v);
    }
    Ok(values)
}
