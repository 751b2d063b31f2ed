//! Trace CSV emission/parsing and benchmark execution with aggregate
//! reporting.
//!
//! A trace file is `epoch,lambda,loss,best_loss,evals,wall_ms` with one
//! row per epoch; run notes appear as `# note: ...` lines between the
//! header and the rows, and multi-dimensional `lambda` joins coordinates
//! with `;`. Floats print through Rust's shortest round-trip formatting,
//! so `parse_trace(emit_trace(t)) == t` exactly and output never depends
//! on the locale.
//!
//! The report pairs a human-readable summary with `[machine-readable]`
//! CSV blocks. Wall-clock times never enter the report, so it is
//! byte-stable across runs; raw traces are byte-stable modulo their
//! `wall_ms` column (see [`strip_wall_column`]).

use std::collections::BTreeMap;

use accsmbo::{
    fit_epdf, grid_search, hoag_descent, random_search, run_acc_smbo, run_smbo, BilevelLogistic,
    Dataset, Epdf, InnerSolverConfig, Objective, SmboConfig, SyntheticKind, SyntheticObjective,
    TagFilter, Trace, TraceRow,
};

use crate::config::{parse_kernels, ExperimentConfig, ObjectiveSpec, OptimizerSpec};
use crate::data::{read_meta_records, read_svmlight};
use crate::{CliError, Result};

/// The trace CSV header.
pub const TRACE_HEADER: &str = "epoch,lambda,loss,best_loss,evals,wall_ms";

/// Render a trace as CSV text (header, `# note:` lines, then rows).
pub fn emit_trace(trace: &Trace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for note in trace.notes() {
        out.push_str("# note: ");
        out.push_str(note);
        out.push('\n');
    }
    for row in trace.rows() {
        let lambda: Vec<String> = row.lambda.iter().map(f64::to_string).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.epoch,
            lambda.join(";"),
            row.loss,
            row.best_loss,
            row.evals,
            row.wall_ms
        ));
    }
    out
}

/// Parse trace CSV text back into a [`Trace`]; exact inverse of
/// [`emit_trace`], including `wall_ms`.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let bad = |lineno: usize, message: String| CliError::Data(format!("trace line {lineno}: {message}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRACE_HEADER => {}
        _ => {
            return Err(CliError::Data(format!(
                "trace must start with the header '{TRACE_HEADER}'"
            )))
        }
    }
    let mut trace = Trace::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(note) = line.strip_prefix("# note: ") {
            trace.push_note(note);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(lineno, format!("expected 6 fields, got {}", fields.len())));
        }
        let epoch: usize = fields[0]
            .parse()
            .map_err(|_| bad(lineno, format!("invalid epoch '{}'", fields[0])))?;
        let lambda = fields[1]
            .split(';')
            .map(|c| c.parse::<f64>().map_err(|_| bad(lineno, format!("invalid lambda '{c}'"))))
            .collect::<Result<Vec<f64>>>()?;
        let float = |idx: usize, name: &str| -> Result<f64> {
            fields[idx]
                .parse()
                .map_err(|_| bad(lineno, format!("invalid {name} '{}'", fields[idx])))
        };
        let loss = float(2, "loss")?;
        let best_loss = float(3, "best_loss")?;
        let wall_ms = float(5, "wall_ms")?;
        let evals: usize = fields[4]
            .parse()
            .map_err(|_| bad(lineno, format!("invalid evals '{}'", fields[4])))?;
        trace.push_row(TraceRow {
            epoch,
            lambda,
            loss,
            best_loss,
            evals,
            wall_ms,
        });
    }
    Ok(trace)
}

/// Drop the final (wall-clock) column from every CSV row, leaving comment
/// lines untouched. Traces agree byte-for-byte under this projection when
/// a run is replayed with the same seed.
pub fn strip_wall_column(csv: &str) -> String {
    let mut out = String::new();
    for line in csv.lines() {
        if line.starts_with('#') {
            out.push_str(line);
        } else if let Some(pos) = line.rfind(',') {
            out.push_str(&line[..pos]);
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

/// One optimizer x seed cell of a benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub optimizer: String,
    pub seed: u64,
    /// The trace, or the error message when the run failed.
    pub outcome: std::result::Result<Trace, String>,
}

/// Aggregate statistics over a benchmark's runs. Optimizers whose runs
/// all failed are absent; failed runs never contribute.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregates {
    /// Per optimizer: median over seeds of the final best loss.
    pub final_best: Vec<(String, f64)>,
    /// Per optimizer: `(epoch, median best loss across seeds)` points.
    pub curves: Vec<(String, Vec<(usize, f64)>)>,
    /// Per optimizer: median epochs-to-target; a run that never reaches
    /// the target counts as its budget + 1. Empty without a target loss.
    pub epochs_to_target: Vec<(String, f64)>,
    /// `(a, b, ratio)` for ordered optimizer pairs: `a` reaches the
    /// target `ratio` x faster than `b` (ratio = median_b / median_a).
    pub speedups: Vec<(String, String, f64)>,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Recompute every aggregate from raw run records.
pub fn compute_aggregates(runs: &[RunRecord], target_loss: Option<f64>) -> Aggregates {
    // Optimizer labels in first-appearance order.
    let mut labels: Vec<&str> = Vec::new();
    for run in runs {
        if !labels.contains(&run.optimizer.as_str()) {
            labels.push(&run.optimizer);
        }
    }
    let mut final_best = Vec::new();
    let mut curves = Vec::new();
    let mut epochs_to_target = Vec::new();
    for &label in &labels {
        let traces: Vec<&Trace> = runs
            .iter()
            .filter(|r| r.optimizer == label)
            .filter_map(|r| r.outcome.as_ref().ok())
            .filter(|t| !t.rows().is_empty())
            .collect();
        if traces.is_empty() {
            continue;
        }
        let finals: Vec<f64> = traces.iter().filter_map(|t| t.final_best_loss()).collect();
        final_best.push((label.to_string(), median(finals)));

        let mut per_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for t in &traces {
            for row in t.rows() {
                per_epoch.entry(row.epoch).or_default().push(row.best_loss);
            }
        }
        let curve: Vec<(usize, f64)> = per_epoch
            .into_iter()
            .map(|(epoch, losses)| (epoch, median(losses)))
            .collect();
        curves.push((label.to_string(), curve));

        if let Some(target) = target_loss {
            let reached: Vec<f64> = traces
                .iter()
                .map(|t| {
                    let budget = t.rows().last().expect("non-empty trace").epoch;
                    t.epochs_to_target(target)
                        .map_or((budget + 1) as f64, |e| e as f64)
                })
                .collect();
            epochs_to_target.push((label.to_string(), median(reached)));
        }
    }
    let mut speedups = Vec::new();
    for (a, med_a) in &epochs_to_target {
        for (b, med_b) in &epochs_to_target {
            if a != b && *med_a > 0.0 {
                speedups.push((a.clone(), b.clone(), med_b / med_a));
            }
        }
    }
    Aggregates {
        final_best,
        curves,
        epochs_to_target,
        speedups,
    }
}

/// A finished benchmark: every optimizer x seed trace plus aggregates.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub objective: String,
    pub epochs: usize,
    pub target_loss: Option<f64>,
    pub runs: Vec<RunRecord>,
    pub aggregates: Aggregates,
}

/// The objective built once per benchmark; dataset files are read and
/// split a single time, then shared across every run.
pub enum BuiltObjective {
    Synthetic(SyntheticKind),
    Data(Dataset),
}

/// Load/construct the configured objective.
pub fn build_objective(spec: &ObjectiveSpec) -> Result<BuiltObjective> {
    match spec {
        ObjectiveSpec::Dataset {
            path,
            val_fraction,
            split_seed,
        } => {
            let raw = read_svmlight(path)?;
            let data = Dataset::new(raw.rows, raw.labels, raw.n_features, *val_fraction, *split_seed)?;
            Ok(BuiltObjective::Data(data))
        }
        ObjectiveSpec::Unimodal { center } => {
            Ok(BuiltObjective::Synthetic(SyntheticKind::Unimodal { center: *center }))
        }
        ObjectiveSpec::WavyUnimodal {
            center,
            amplitude,
            frequency,
        } => Ok(BuiltObjective::Synthetic(SyntheticKind::WavyUnimodal {
            center: *center,
            amplitude: *amplitude,
            frequency: *frequency,
        })),
        ObjectiveSpec::Multimodal => Ok(BuiltObjective::Synthetic(SyntheticKind::Multimodal)),
    }
}

impl BuiltObjective {
    /// Instantiate the objective for one run; the seed feeds the bilevel
    /// inner solver (synthetic surfaces are deterministic already).
    pub fn for_seed(&self, seed: u64) -> Box<dyn Objective> {
        match self {
            BuiltObjective::Synthetic(kind) => Box::new(SyntheticObjective::new(*kind)),
            BuiltObjective::Data(data) => Box::new(BilevelLogistic::new(
                data.clone(),
                InnerSolverConfig {
                    seed,
                    ..InnerSolverConfig::default()
                },
            )),
        }
    }
}

/// Fit the metalearning prior an optimizer entry asks for, once.
pub fn load_prior(spec: &OptimizerSpec) -> Result<Option<Epdf>> {
    if let OptimizerSpec::AccSmbo {
        meta_path: Some(path),
        meta_bins,
        meta_filter,
        ..
    } = spec
    {
        let records = read_meta_records(path)?;
        let filter = meta_filter.as_ref().map(|f| TagFilter {
            objective_tag: f.objective_tag.clone(),
            task_tag: f.task_tag.clone(),
            data_tag: f.data_tag.clone(),
        });
        let prior = fit_epdf(&records, filter.as_ref(), *meta_bins, None)?;
        return Ok(Some(prior));
    }
    Ok(None)
}

/// Execute one optimizer on one objective with one seed.
pub fn run_single(
    objective: &dyn Objective,
    spec: &OptimizerSpec,
    epochs: usize,
    seed: u64,
    prior: Option<&Epdf>,
) -> Result<Trace> {
    match spec {
        OptimizerSpec::Smbo {
            challengers,
            pool_size,
            kernels,
            exploration_offset,
            ..
        } => {
            let cfg = SmboConfig {
                epochs,
                challengers_per_epoch: *challengers,
                pool_size: *pool_size,
                seed,
                kernels: parse_kernels(kernels)?,
                meta_rate: 0.0,
                exploration_offset: *exploration_offset,
            };
            Ok(run_smbo(objective, &cfg)?)
        }
        OptimizerSpec::AccSmbo {
            challengers,
            pool_size,
            kernels,
            rate,
            exploration_offset,
            ..
        } => {
            let cfg = SmboConfig {
                epochs,
                challengers_per_epoch: *challengers,
                pool_size: *pool_size,
                seed,
                kernels: parse_kernels(kernels)?,
                meta_rate: *rate,
                exploration_offset: *exploration_offset,
            };
            Ok(run_acc_smbo(objective, &cfg, prior)?)
        }
        OptimizerSpec::Grid { points, .. } => Ok(grid_search(objective, *points)?),
        OptimizerSpec::Random { .. } => Ok(random_search(objective, epochs, seed)?),
        OptimizerSpec::Hoag { step, .. } => Ok(hoag_descent(objective, epochs, *step)?),
    }
}

/// Run the full optimizer x seed matrix. Individual run failures are
/// recorded in the report; only setup failures (unreadable dataset or
/// metalearning file) abort.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    let objective = build_objective(&cfg.objective)?;
    let mut runs = Vec::new();
    for spec in &cfg.optimizers {
        let prior = load_prior(spec)?;
        let label = spec.label();
        for &seed in &cfg.seeds {
            let instance = objective.for_seed(seed);
            let outcome = run_single(instance.as_ref(), spec, cfg.epochs, seed, prior.as_ref())
                .map_err(|e| e.to_string());
            match &outcome {
                Ok(trace) => log::info!(
                    "{label} seed {seed}: best loss {:?} in {} evaluations",
                    trace.best().map(|r| r.loss),
                    trace.total_evals()
                ),
                Err(e) => log::warn!("{label} seed {seed} failed: {e}"),
            }
            runs.push(RunRecord {
                optimizer: label.clone(),
                seed,
                outcome,
            });
        }
    }
    let aggregates = compute_aggregates(&runs, cfg.target_loss);
    Ok(BenchmarkReport {
        objective: cfg.objective.describe(),
        epochs: cfg.epochs,
        target_loss: cfg.target_loss,
        runs,
        aggregates,
    })
}

/// Render the report: a human-readable summary followed by
/// `[machine-readable]` CSV blocks. Aggregates are recomputed from the
/// raw runs at write time and must match the stored ones.
pub fn emit_report(report: &BenchmarkReport) -> Result<String> {
    let recomputed = compute_aggregates(&report.runs, report.target_loss);
    if recomputed != report.aggregates {
        return Err(CliError::Data(
            "report aggregates do not match their raw traces".into(),
        ));
    }
    let agg = &report.aggregates;
    let failures: Vec<(&str, u64, &str)> = report
        .runs
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .err()
                .map(|e| (r.optimizer.as_str(), r.seed, e.as_str()))
        })
        .collect();

    let mut out = String::new();
    out.push_str("benchmark report\n");
    out.push_str("================\n");
    out.push_str(&format!("objective:   {}\n", report.objective));
    out.push_str(&format!("epochs:      {}\n", report.epochs));
    match report.target_loss {
        Some(t) => out.push_str(&format!("target loss: {t}\n")),
        None => out.push_str("target loss: none\n"),
    }
    let ok = report.runs.len() - failures.len();
    out.push_str(&format!(
        "runs:        {} total, {} succeeded, {} failed\n\n",
        report.runs.len(),
        ok,
        failures.len()
    ));

    let label_width = agg
        .final_best
        .iter()
        .map(|(l, _)| l.len())
        .chain(std::iter::once("optimizer".len()))
        .max()
        .unwrap_or(9);
    out.push_str(&format!(
        "{:<label_width$}  {:<24}  {}\n",
        "optimizer", "median final best loss", "median epochs to target"
    ));
    for (label, loss) in &agg.final_best {
        let to_target = agg
            .epochs_to_target
            .iter()
            .find(|(l, _)| l == label)
            .map_or("-".to_string(), |(_, e)| e.to_string());
        out.push_str(&format!("{label:<label_width$}  {:<24}  {to_target}\n", loss.to_string()));
    }

    if !agg.speedups.is_empty() {
        out.push_str("\nspeedup (ratio of median epochs-to-target):\n");
        for (a, b, ratio) in &agg.speedups {
            out.push_str(&format!("  {a} is {ratio}x faster than {b}\n"));
        }
    }
    if !failures.is_empty() {
        out.push_str("\nfailures:\n");
        for (label, seed, err) in &failures {
            out.push_str(&format!("  {label} seed {seed}: {err}\n"));
        }
    }

    out.push_str("\n[machine-readable]\n");
    out.push_str("\n[meta]\nkey,value\n");
    out.push_str(&format!("objective,{}\n", report.objective));
    out.push_str(&format!("epochs,{}\n", report.epochs));
    out.push_str(&format!(
        "target_loss,{}\n",
        report.target_loss.map_or(String::new(), |t| t.to_string())
    ));
    out.push_str(&format!("runs_failed,{}\n", failures.len()));

    out.push_str("\n[final-best-loss]\noptimizer,median_final_best_loss\n");
    for (label, loss) in &agg.final_best {
        out.push_str(&format!("{label},{loss}\n"));
    }

    out.push_str("\n[median-best-loss-curve]\noptimizer,epoch,median_best_loss\n");
    for (label, curve) in &agg.curves {
        for (epoch, loss) in curve {
            out.push_str(&format!("{label},{epoch},{loss}\n"));
        }
    }

    out.push_str("\n[epochs-to-target]\noptimizer,median_epochs_to_target\n");
    for (label, epochs) in &agg.epochs_to_target {
        out.push_str(&format!("{label},{epochs}\n"));
    }

    out.push_str("\n[speedup]\nfaster,slower,ratio\n");
    for (a, b, ratio) in &agg.speedups {
        out.push_str(&format!("{a},{b},{ratio}\n"));
    }

    out.push_str("\n[failures]\noptimizer,seed,error\n");
    for (label, seed, err) in &failures {
        out.push_str(&format!("{label},{seed},{err}\n"));
    }
    Ok(out)
}
