//! `accsmbo` command line: run optimizers from a config file, benchmark
//! the full optimizer x seed matrix, and generate synthetic inputs.
//!
//! Log verbosity is controlled by the `RUST_LOG` environment variable
//! (`warn` by default; `info` prints one line per benchmark run).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use accsmbo::{fit_epdf, HyperparamPoint, MetaRecord, TagFilter};
use clap::{Args, Parser, Subcommand, ValueEnum};
use env_logger::Env;

use accsmbo_cli::config::{ExperimentConfig, OptimizerSpec};
use accsmbo_cli::data::{
    gen_classification, gen_meta_values, read_meta_records, write_meta_records, write_svmlight,
    MetaDistribution,
};
use accsmbo_cli::trace::{
    build_objective, emit_report, emit_trace, load_prior, run_benchmark, run_single,
};
use accsmbo_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "accsmbo",
    version,
    about = "Accelerated sequential model-based hyperparameter optimization",
    after_help = "Set RUST_LOG=info (or debug) for per-run progress output."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer from a config file and emit its trace CSV.
    Optimize(OptimizeArgs),
    /// Run every optimizer x seed cell and write traces plus a report.
    Benchmark(BenchmarkArgs),
    /// Generate a synthetic sparse classification dataset (svmlight).
    GenData(GenDataArgs),
    /// Generate synthetic metalearning records (CSV).
    GenMeta(GenMetaArgs),
    /// Fit the metalearning density from records and emit it as CSV.
    FitEpdf(FitEpdfArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// Experiment config file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Label of the optimizer to run (default: first in the config).
    #[arg(long, value_name = "LABEL")]
    optimizer: Option<String>,
    /// Override the run seed (default: the config's first seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the metalearning influence rate (acc-smbo only).
    #[arg(long)]
    rate: Option<f64>,
    /// Trace output path (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Experiment config file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (default: the config's out_dir, else `results`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Output svmlight file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    rows: usize,
    #[arg(long, default_value_t = 20)]
    cols: usize,
    /// Fraction of zero entries.
    #[arg(long, default_value_t = 0.9)]
    sparsity: f64,
    /// Label-flip probability.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistArg {
    Normal,
    Uniform,
}

#[derive(Args)]
struct GenMetaArgs {
    /// Output CSV file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Distribution of the best-hyperparameter locations.
    #[arg(long, value_enum, default_value_t = DistArg::Normal)]
    dist: DistArg,
    /// Mean of the normal distribution.
    #[arg(long, default_value_t = 0.3)]
    mean: f64,
    /// Standard deviation of the normal distribution.
    #[arg(long, default_value_t = 0.05)]
    sd: f64,
    /// Lower end of the uniform distribution.
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    /// Upper end of the uniform distribution.
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "logloss")]
    objective_tag: String,
    #[arg(long, default_value = "synthetic")]
    task_tag: String,
    #[arg(long, default_value = "gen")]
    data_tag: String,
}

#[derive(Args)]
struct FitEpdfArgs {
    /// Metalearning records CSV.
    #[arg(long, value_name = "PATH")]
    meta: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Density output path (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Keep only records with this objective tag (needs all three tags).
    #[arg(long)]
    objective_tag: Option<String>,
    /// Keep only records with this task tag (needs all three tags).
    #[arg(long)]
    task_tag: Option<String>,
    /// Keep only records with this data tag (needs all three tags).
    #[arg(long)]
    data_tag: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(Env::default().default_filter_or("warn")).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: category={}: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::GenData(args) => cmd_gen_data(args),
        Command::GenMeta(args) => cmd_gen_meta(args),
        Command::FitEpdf(args) => cmd_fit_epdf(args),
    }
}

fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let mut spec = cfg.select_optimizer(args.optimizer.as_deref())?.clone();
    if let Some(rate) = args.rate {
        match &mut spec {
            OptimizerSpec::AccSmbo { rate: r, .. } => {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(CliError::Config(format!(
                        "rate must lie in [0, 1], got {rate}"
                    )));
                }
                *r = rate;
            }
            other => {
                return Err(CliError::Config(format!(
                    "--rate applies to acc-smbo only, not {}",
                    other.kind_name()
                )))
            }
        }
    }
    let epochs = args.epochs.unwrap_or(cfg.epochs);
    if epochs == 0 {
        return Err(CliError::Config("epochs must be at least 1".into()));
    }
    let seed = args.seed.unwrap_or(cfg.seeds[0]);
    let objective = build_objective(&cfg.objective)?;
    let prior = load_prior(&spec)?;
    let instance = objective.for_seed(seed);
    let trace = run_single(instance.as_ref(), &spec, epochs, seed, prior.as_ref())?;
    let text = emit_trace(&trace);
    match &args.out {
        Some(path) => {
            fs::write(path, &text).map_err(|e| CliError::io(path.display(), e))?;
            let best = trace.best().expect("completed run has rows");
            let lambda: Vec<String> = best.lambda.iter().map(f64::to_string).collect();
            println!(
                "{}: best loss {} at lambda {} after {} evaluations; trace: {}",
                spec.label(),
                best.loss,
                lambda.join(";"),
                trace.total_evals(),
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// File-name-safe form of an optimizer label.
fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '-' })
        .collect()
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let out_dir = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
    let report = run_benchmark(&cfg)?;
    for run in &report.runs {
        if let Ok(trace) = &run.outcome {
            let path = out_dir.join(format!("trace-{}-seed{}.csv", sanitize(&run.optimizer), run.seed));
            fs::write(&path, emit_trace(trace)).map_err(|e| CliError::io(path.display(), e))?;
        }
    }
    let report_path = out_dir.join("report.txt");
    fs::write(&report_path, emit_report(&report)?)
        .map_err(|e| CliError::io(report_path.display(), e))?;
    let failed = report.runs.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "wrote {} ({} runs, {} failed)",
        report_path.display(),
        report.runs.len(),
        failed
    );
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let data = gen_classification(args.rows, args.cols, args.sparsity, args.noise, args.seed)?;
    write_svmlight(&args.out, &data)?;
    println!(
        "wrote {} ({} x {}, sparsity {:.3})",
        args.out.display(),
        args.rows,
        args.cols,
        data.sparsity()
    );
    Ok(())
}

fn cmd_gen_meta(args: GenMetaArgs) -> Result<()> {
    let dist = match args.dist {
        DistArg::Normal => MetaDistribution::Normal {
            mean: args.mean,
            sd: args.sd,
        },
        DistArg::Uniform => MetaDistribution::Uniform {
            lo: args.lo,
            hi: args.hi,
        },
    };
    let values = gen_meta_values(args.count, dist, args.seed)?;
    let records = values
        .into_iter()
        .map(|v| {
            let point = HyperparamPoint::scalar(v)?;
            MetaRecord::new(&args.objective_tag, &args.task_tag, &args.data_tag, point)
        })
        .collect::<accsmbo::Result<Vec<MetaRecord>>>()?;
    write_meta_records(&args.out, &records)?;
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_fit_epdf(args: FitEpdfArgs) -> Result<()> {
    let filter = match (args.objective_tag, args.task_tag, args.data_tag) {
        (None, None, None) => None,
        (Some(objective_tag), Some(task_tag), Some(data_tag)) => Some(TagFilter {
            objective_tag,
            task_tag,
            data_tag,
        }),
        _ => {
            return Err(CliError::Config(
                "--objective-tag, --task-tag, and --data-tag must be given together".into(),
            ))
        }
    };
    let records = read_meta_records(&args.meta)?;
    let epdf = fit_epdf(&records, filter.as_ref(), args.bins, None)?;
    let mut out = format!("# smoothing_bandwidth: {}\n", epdf.smoothing_bandwidth());
    out.push_str("bin_lo,bin_hi,density\n");
    let edges = epdf.bin_edges();
    for (i, density) in epdf.densities().iter().enumerate() {
        out.push_str(&format!("{},{},{density}\n", edges[i], edges[i + 1]));
    }
    match &args.out {
        Some(path) => {
            fs::write(path, &out).map_err(|e| CliError::io(path.display(), e))?;
            println!("wrote {}", path.display());
        }
        None => print!("{out}"),
    }
    Ok(())
}
