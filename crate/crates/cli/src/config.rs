//! Experiment configuration: a single TOML file describing the objective,
//! the optimizers to run, the seeds, and the reporting targets.
//!
//! # Schema
//!
//! ```toml
//! epochs = 15                # acquisition epochs per run (>= 1)
//! seeds = [0, 1, 2]          # one run per optimizer per seed
//! target_loss = 0.001        # optional: enables epochs-to-target metrics
//! out_dir = "results"        # optional: default output directory
//!
//! [objective]
//! kind = "wavy-unimodal"     # dataset | unimodal | wavy-unimodal | multimodal
//! center = 0.3               # synthetic surface parameters
//! amplitude = 0.05
//! frequency = 40.0
//!
//! # kind = "dataset" instead takes:
//! # path = "train.svm"       # svmlight file, relative to this config file
//! # val_fraction = 0.3       # holdout fraction (default 0.3)
//! # split_seed = 0           # seed of the train/validation split
//!
//! [[optimizer]]
//! name = "acc-smbo"          # smbo | acc-smbo | grid | random | hoag
//! rate = 0.1                 # prior influence (acc-smbo)
//! meta_path = "meta.csv"     # metalearning records (acc-smbo, optional)
//!
//! [[optimizer]]
//! name = "smbo"
//! ```
//!
//! Unknown keys are rejected so typos fail loudly. Relative paths are
//! resolved against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use accsmbo::KernelKind;
use serde::Deserialize;

use crate::{CliError, Result};

fn default_val_fraction() -> f64 {
    0.3
}

fn default_challengers() -> usize {
    4
}

fn default_pool_size() -> usize {
    1000
}

fn default_rate() -> f64 {
    0.1
}

fn default_single_kernel() -> Vec<String> {
    vec!["gaussian".into()]
}

fn default_two_kernels() -> Vec<String> {
    vec!["gaussian".into(), "cubic".into()]
}

fn default_meta_bins() -> usize {
    20
}

fn default_grid_points() -> usize {
    20
}

fn default_hoag_step() -> f64 {
    1e-3
}

/// The objective a run optimizes over `lambda` in `[0, 1]`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum ObjectiveSpec {
    /// Regularized logistic regression on an svmlight dataset; the loss is
    /// the mean validation logistic loss after the inner solve.
    Dataset {
        path: PathBuf,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
    /// `(lambda - center)^2`.
    Unimodal { center: f64 },
    /// `(lambda - center)^2 + amplitude * sin(frequency * lambda)`.
    WavyUnimodal {
        center: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Two Gaussian wells with the global minimum at 0.75.
    Multimodal,
}

impl ObjectiveSpec {
    /// One-line description used in report headers.
    pub fn describe(&self) -> String {
        match self {
            ObjectiveSpec::Dataset { path, .. } => format!("dataset {}", path.display()),
            ObjectiveSpec::Unimodal { center } => format!("unimodal center={center}"),
            ObjectiveSpec::WavyUnimodal {
                center,
                amplitude,
                frequency,
            } => format!("wavy-unimodal center={center} amplitude={amplitude} frequency={frequency}"),
            ObjectiveSpec::Multimodal => "multimodal".into(),
        }
    }
}

/// Exact-match filter selecting which metalearning records feed the prior.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetaFilterSpec {
    pub objective_tag: String,
    pub task_tag: String,
    pub data_tag: String,
}

/// One optimizer entry; the `name` field selects the variant.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "name")]
pub enum OptimizerSpec {
    /// Plain GP-EI SMBO: single-kernel surrogate, expected improvement.
    Smbo {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_challengers")]
        challengers: usize,
        #[serde(default = "default_pool_size")]
        pool_size: usize,
        #[serde(default = "default_single_kernel")]
        kernels: Vec<String>,
        #[serde(default)]
        exploration_offset: Option<f64>,
    },
    /// Accelerated SMBO: gradient-based multikernel surrogate plus the
    /// metalearning prior (when `meta_path` is given).
    AccSmbo {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_challengers")]
        challengers: usize,
        #[serde(default = "default_pool_size")]
        pool_size: usize,
        #[serde(default = "default_two_kernels")]
        kernels: Vec<String>,
        #[serde(default = "default_rate")]
        rate: f64,
        #[serde(default)]
        meta_path: Option<PathBuf>,
        #[serde(default = "default_meta_bins")]
        meta_bins: usize,
        #[serde(default)]
        meta_filter: Option<MetaFilterSpec>,
        #[serde(default)]
        exploration_offset: Option<f64>,
    },
    /// Serial descending grid sweep from `lambda = 1` to `lambda = 0`.
    Grid {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_grid_points")]
        points: usize,
    },
    /// Uniform random search (first evaluation at `lambda = 1`).
    Random {
        #[serde(default)]
        label: Option<String>,
    },
    /// Fixed-step descent along the hypergradient.
    Hoag {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_hoag_step")]
        step: f64,
    },
}

impl OptimizerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OptimizerSpec::Smbo { .. } => "smbo",
            OptimizerSpec::AccSmbo { .. } => "acc-smbo",
            OptimizerSpec::Grid { .. } => "grid",
            OptimizerSpec::Random { .. } => "random",
            OptimizerSpec::Hoag { .. } => "hoag",
        }
    }

    /// The display label: the explicit `label` field, or the variant name.
    pub fn label(&self) -> String {
        let explicit = match self {
            OptimizerSpec::Smbo { label, .. }
            | OptimizerSpec::AccSmbo { label, .. }
            | OptimizerSpec::Grid { label, .. }
            | OptimizerSpec::Random { label, .. }
            | OptimizerSpec::Hoag { label, .. } => label,
        };
        explicit.clone().unwrap_or_else(|| self.kind_name().into())
    }
}

/// A full experiment: objective, optimizer list, seeds, and budget.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub epochs: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub target_loss: Option<f64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub objective: ObjectiveSpec,
    #[serde(rename = "optimizer")]
    pub optimizers: Vec<OptimizerSpec>,
}

/// One-line rendering of a TOML parse error (the default `Display` spans
/// several lines, which would break the one-line CLI error contract).
fn toml_one_line(text: &str, e: &toml::de::Error) -> String {
    let location = e
        .span()
        .map(|s| {
            let prefix = &text[..s.start.min(text.len())];
            let line = prefix.matches('\n').count() + 1;
            let column = prefix.rsplit('\n').next().unwrap_or("").chars().count() + 1;
            format!(" at line {line}, column {column}")
        })
        .unwrap_or_default();
    format!("{}{location}", e.message())
}

impl ExperimentConfig {
    /// Read, parse, resolve paths, and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), toml_one_line(&text, &e))))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse and validate config text with paths resolved against `base`.
    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(toml_one_line(text, &e)))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ObjectiveSpec::Dataset { path, .. } = &mut self.objective {
            resolve(path);
        }
        if let Some(dir) = &mut self.out_dir {
            resolve(dir);
        }
        for opt in &mut self.optimizers {
            if let OptimizerSpec::AccSmbo {
                meta_path: Some(p), ..
            } = opt
            {
                resolve(p);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CliError::Config("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        if self.optimizers.is_empty() {
            return Err(CliError::Config("at least one optimizer is required".into()));
        }
        if let Some(t) = self.target_loss {
            if !t.is_finite() {
                return Err(CliError::Config(format!("target_loss must be finite, got {t}")));
            }
        }
        let mut labels: Vec<String> = self.optimizers.iter().map(OptimizerSpec::label).collect();
        labels.sort();
        if let Some(dup) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Config(format!(
                "duplicate optimizer label '{}'; give repeated optimizers distinct labels",
                dup[0]
            )));
        }
        if let ObjectiveSpec::Dataset {
            path, val_fraction, ..
        } = &self.objective
        {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "dataset file does not exist: {}",
                    path.display()
                )));
            }
            if !(*val_fraction > 0.0 && *val_fraction < 1.0) {
                return Err(CliError::Config(format!(
                    "val_fraction must lie in (0, 1), got {val_fraction}"
                )));
            }
        }
        for opt in &self.optimizers {
            match opt {
                OptimizerSpec::Smbo { kernels, .. } => {
                    parse_kernels(kernels)?;
                }
                OptimizerSpec::AccSmbo {
                    kernels,
                    rate,
                    meta_path,
                    meta_bins,
                    ..
                } => {
                    parse_kernels(kernels)?;
                    if !(0.0..=1.0).contains(rate) {
                        return Err(CliError::Config(format!(
                            "rate must lie in [0, 1], got {rate}"
                        )));
                    }
                    if *meta_bins == 0 {
                        return Err(CliError::Config("meta_bins must be at least 1".into()));
                    }
                    if let Some(p) = meta_path {
                        if !p.is_file() {
                            return Err(CliError::Config(format!(
                                "metalearning file does not exist: {}",
                                p.display()
                            )));
                        }
                    }
                }
                OptimizerSpec::Grid { points, .. } => {
                    if *points < 2 {
                        return Err(CliError::Config(format!(
                            "grid needs at least 2 points, got {points}"
                        )));
                    }
                }
                OptimizerSpec::Random { .. } => {}
                OptimizerSpec::Hoag { step, .. } => {
                    if !(step.is_finite() && *step > 0.0) {
                        return Err(CliError::Config(format!(
                            "hoag step must be positive, got {step}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The optimizer matching `label`, or the first entry when `None`.
    pub fn select_optimizer(&self, label: Option<&str>) -> Result<&OptimizerSpec> {
        match label {
            None => Ok(&self.optimizers[0]),
            Some(l) => self
                .optimizers
                .iter()
                .find(|o| o.label() == l)
                .ok_or_else(|| {
                    let known: Vec<String> =
                        self.optimizers.iter().map(OptimizerSpec::label).collect();
                    CliError::Config(format!(
                        "no optimizer labeled '{l}' in config (have: {})",
                        known.join(", ")
                    ))
                }),
        }
    }
}

/// Parse kernel names: `gaussian` (bandwidth 1), `gaussian:<bandwidth>`,
/// or `cubic`.
pub fn parse_kernels(names: &[String]) -> Result<Vec<KernelKind>> {
    if names.is_empty() {
        return Err(CliError::Config("kernel list must be non-empty".into()));
    }
    names
        .iter()
        .map(|name| {
            if name == "cubic" {
                return Ok(KernelKind::CubicRbf);
            }
            if name == "gaussian" {
                return Ok(KernelKind::gaussian());
            }
            if let Some(bw) = name.strip_prefix("gaussian:") {
                let bandwidth: f64 = bw.parse().map_err(|_| {
                    CliError::Config(format!("invalid gaussian bandwidth '{bw}'"))
                })?;
                if !(bandwidth.is_finite() && bandwidth > 0.0) {
                    return Err(CliError::Config(format!(
                        "gaussian bandwidth must be positive, got {bandwidth}"
                    )));
                }
                return Ok(KernelKind::GaussianRbf { bandwidth });
            }
            Err(CliError::Config(format!(
                "unknown kernel '{name}' (expected gaussian, gaussian:<bandwidth>, or cubic)"
            )))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        epochs = 5
        seeds = [1, 2]

        [objective]
        kind = "unimodal"
        center = 0.3

        [[optimizer]]
        name = "smbo"
    "#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_str_with_base(text, Path::new("."))
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.target_loss, None);
        assert_eq!(
            cfg.objective,
            ObjectiveSpec::Unimodal { center: 0.3 }
        );
        match &cfg.optimizers[0] {
            OptimizerSpec::Smbo {
                challengers,
                pool_size,
                kernels,
                ..
            } => {
                assert_eq!(*challengers, 4);
                assert_eq!(*pool_size, 1000);
                assert_eq!(kernels, &["gaussian"]);
            }
            other => panic!("unexpected optimizer {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("epochs = 5", "epochs = 5\nepocs = 3");
        assert!(matches!(parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn empty_optimizer_list_is_rejected() {
        let text = r#"
            epochs = 5
            seeds = [1]

            [objective]
            kind = "multimodal"
        "#;
        let err = parse(text).unwrap_err();
        assert!(err.to_string().contains("optimizer"), "{err}");
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let text = MINIMAL.replace("seeds = [1, 2]", "seeds = []");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn missing_dataset_path_fails_validation() {
        let text = r#"
            epochs = 5
            seeds = [1]

            [objective]
            kind = "dataset"
            path = "no-such-file.svm"

            [[optimizer]]
            name = "random"
        "#;
        let err = parse(text).unwrap_err();
        assert_eq!(err.category(), "config");
        assert!(err.to_string().contains("no-such-file.svm"), "{err}");
    }

    #[test]
    fn duplicate_labels_are_rejected_and_explicit_labels_fix_them() {
        let dup = format!("{MINIMAL}\n[[optimizer]]\nname = \"smbo\"\n");
        assert!(parse(&dup).is_err());
        let fixed = format!("{MINIMAL}\n[[optimizer]]\nname = \"smbo\"\nlabel = \"smbo-2\"\n");
        let cfg = parse(&fixed).unwrap();
        assert_eq!(cfg.optimizers[1].label(), "smbo-2");
        assert_eq!(cfg.select_optimizer(Some("smbo-2")).unwrap().label(), "smbo-2");
        assert!(cfg.select_optimizer(Some("nope")).is_err());
    }

    #[test]
    fn kernel_names_parse_with_bandwidths() {
        let kinds = parse_kernels(&[
            "gaussian".into(),
            "gaussian:0.25".into(),
            "cubic".into(),
        ])
        .unwrap();
        assert_eq!(kinds[0], KernelKind::GaussianRbf { bandwidth: 1.0 });
        assert_eq!(kinds[1], KernelKind::GaussianRbf { bandwidth: 0.25 });
        assert_eq!(kinds[2], KernelKind::CubicRbf);
        assert!(parse_kernels(&["gaussian:-1".into()]).is_err());
        assert!(parse_kernels(&["quartic".into()]).is_err());
        assert!(parse_kernels(&[]).is_err());
    }

    #[test]
    fn rate_outside_unit_interval_is_rejected() {
        let text = MINIMAL.replace(
            "name = \"smbo\"",
            "name = \"acc-smbo\"\nrate = 1.5",
        );
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("rate"), "{err}");
    }
}
