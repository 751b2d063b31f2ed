//! Acquisition machinery: expected improvement, empirical densities fitted
//! from metalearning records, and the meta-acquisition reshaping.
//!
//! The meta-acquisition multiplies a base acquisition value by a prior term
//! derived from where previous tasks found their best hyperparameters:
//!
//! ```text
//! metaAC(x, epoch, p, ac) = ac * (rate * p(x) * e^-epoch + 1 - rate * e^-epoch)
//! ```
//!
//! so early epochs are steered toward high-density regions of the prior and
//! the influence decays to nothing as the epoch count grows.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gp::PosteriorEstimate;
use crate::kernels::{Bounds, HyperparamPoint};

/// One record from a metalearning store: which kind of problem it was and
/// where its best hyperparameter landed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaRecord {
    objective_tag: String,
    task_tag: String,
    data_tag: String,
    best_point: HyperparamPoint,
}

impl MetaRecord {
    pub fn new(
        objective_tag: impl Into<String>,
        task_tag: impl Into<String>,
        data_tag: impl Into<String>,
        best_point: HyperparamPoint,
    ) -> Result<Self> {
        let (objective_tag, task_tag, data_tag) =
            (objective_tag.into(), task_tag.into(), data_tag.into());
        if objective_tag.is_empty() || task_tag.is_empty() || data_tag.is_empty() {
            return Err(Error::InvalidInput(
                "metalearning record tags must be non-empty".into(),
            ));
        }
        Ok(MetaRecord {
            objective_tag,
            task_tag,
            data_tag,
            best_point,
        })
    }

    pub fn objective_tag(&self) -> &str {
        &self.objective_tag
    }

    pub fn task_tag(&self) -> &str {
        &self.task_tag
    }

    pub fn data_tag(&self) -> &str {
        &self.data_tag
    }

    pub fn best_point(&self) -> &HyperparamPoint {
        &self.best_point
    }
}

/// Exact-match filter over the three record tags.
#[derive(Clone, Debug, PartialEq)]
pub struct TagFilter {
    pub objective_tag: String,
    pub task_tag: String,
    pub data_tag: String,
}

impl TagFilter {
    pub fn matches(&self, record: &MetaRecord) -> bool {
        record.objective_tag == self.objective_tag
            && record.task_tag == self.task_tag
            && record.data_tag == self.data_tag
    }
}

/// Inputs the acquisition needs beyond the posterior itself.
#[derive(Clone, Copy, Debug)]
pub struct AcquisitionContext {
    /// Loss of the incumbent (best observation so far).
    pub f_best: f64,
    /// Epoch of the acquisition clock; 0 at the first acquisition
    /// maximization after the initial design point.
    pub epoch: u32,
    /// Influence of the metalearning prior, in `[0, 1]`; 0 disables it.
    pub rate: f64,
    /// Exploration offset (the EI "xi"); non-negative.
    pub exploration_offset: f64,
}

impl AcquisitionContext {
    pub fn new(f_best: f64, epoch: u32, rate: f64, exploration_offset: f64) -> Result<Self> {
        if !f_best.is_finite() {
            return Err(Error::InvalidInput("incumbent loss must be finite".into()));
        }
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidInput(format!(
                "rate must lie in [0, 1], got {rate}"
            )));
        }
        if !exploration_offset.is_finite() || exploration_offset < 0.0 {
            return Err(Error::InvalidInput(format!(
                "exploration offset must be non-negative, got {exploration_offset}"
            )));
        }
        Ok(AcquisitionContext {
            f_best,
            epoch,
            rate,
            exploration_offset,
        })
    }
}

/// Expected improvement below the incumbent, for minimization.
///
/// With `imp = f_best - mean - xi` and `z = imp / sigma`:
/// `EI = imp * Phi(z) + sigma * phi(z)` for `sigma > 0`, and
/// `max(imp, 0)` in the deterministic limit. Always non-negative.
pub fn expected_improvement(est: &PosteriorEstimate, ctx: &AcquisitionContext) -> f64 {
    let imp = ctx.f_best - est.mean - ctx.exploration_offset;
    let sigma = est.variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return imp.max(0.0);
    }
    let z = imp / sigma;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (imp * normal.cdf(z) + sigma * normal.pdf(z)).max(0.0)
}

/// An empirical probability density over a 1-D search interval: a histogram
/// of best-hyperparameter locations, smoothed with a Gaussian window and
/// renormalized to integrate to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Epdf {
    bin_edges: Vec<f64>,
    densities: Vec<f64>,
    smoothing_bandwidth: f64,
    bounds: Bounds,
}

/// Fraction of the uniform density added to every bin before normalization,
/// so the prior never hard-vetoes an unseen region.
const DENSITY_FLOOR: f64 = 1e-3;

impl Epdf {
    pub const DEFAULT_BINS: usize = 20;

    /// The exactly uniform density over a 1-D interval.
    pub fn uniform(bounds: Bounds, bins: usize) -> Result<Self> {
        if bounds.dim() != 1 {
            return Err(Error::InvalidInput(
                "EPDF supports 1-D hyperparameters only".into(),
            ));
        }
        if bins == 0 {
            return Err(Error::InvalidInput("EPDF needs at least one bin".into()));
        }
        let (lo, hi) = bounds.interval(0);
        let width = hi - lo;
        let bin_edges = (0..=bins)
            .map(|i| lo + width * i as f64 / bins as f64)
            .collect();
        Ok(Epdf {
            bin_edges,
            densities: vec![1.0 / width; bins],
            smoothing_bandwidth: width / bins as f64,
            bounds,
        })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn smoothing_bandwidth(&self) -> f64 {
        self.smoothing_bandwidth
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Piecewise-constant density lookup; zero outside the interval.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds.interval(0);
        if !x.is_finite() || x < lo || x > hi {
            return 0.0;
        }
        let bins = self.densities.len();
        let idx = (((x - lo) / (hi - lo)) * bins as f64) as usize;
        self.densities[idx.min(bins - 1)]
    }

    /// Density at a point's first coordinate.
    pub fn density_at(&self, point: &HyperparamPoint) -> f64 {
        self.density(point.coords()[0])
    }
}

/// Fit an EPDF from metalearning records.
///
/// Records are optionally filtered by exact tag match; the remaining
/// best-point locations are histogrammed over the bounds into `bins` bins,
/// smoothed by a Gaussian window (`bandwidth = None` selects Scott's rule),
/// floored at a small fraction of the uniform density, and renormalized.
/// Filtering away every record is an error; callers are expected to fall
/// back to the plain acquisition (rate = 0).
pub fn fit_epdf(
    records: &[MetaRecord],
    filter: Option<&TagFilter>,
    bins: usize,
    bandwidth: Option<f64>,
) -> Result<Epdf> {
    let kept: Vec<&MetaRecord> = records
        .iter()
        .filter(|r| filter.is_none_or(|f| f.matches(r)))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyMeta);
    }
    if bins == 0 {
        return Err(Error::InvalidInput("EPDF needs at least one bin".into()));
    }
    let bounds = kept[0].best_point().bounds().clone();
    if bounds.dim() != 1 {
        return Err(Error::InvalidInput(
            "EPDF supports 1-D hyperparameters only".into(),
        ));
    }
    if kept
        .iter()
        .any(|r| r.best_point().bounds() != &bounds)
    {
        return Err(Error::InvalidInput(
            "metalearning records must share one search interval".into(),
        ));
    }

    let (lo, hi) = bounds.interval(0);
    let width = hi - lo;
    let bin_width = width / bins as f64;

    let values: Vec<f64> = kept.iter().map(|r| r.best_point().coords()[0]).collect();
    let mut counts = vec![0.0f64; bins];
    for &v in &values {
        let idx = (((v - lo) / width) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1.0;
    }

    let bandwidth = match bandwidth {
        Some(h) => {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "smoothing bandwidth must be positive, got {h}"
                )));
            }
            h
        }
        None => scott_bandwidth(&values).max(bin_width / 2.0),
    };

    // Smooth by spreading each source bin's mass over its neighbors with
    // Gaussian weights normalized per source bin, so no mass leaks at the
    // interval edges.
    let centers: Vec<f64> = (0..bins)
        .map(|i| lo + bin_width * (i as f64 + 0.5))
        .collect();
    let mut smoothed = vec![0.0f64; bins];
    for (src, &mass) in counts.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let weights: Vec<f64> = centers
            .iter()
            .map(|&c| {
                let z = (c - centers[src]) / bandwidth;
                (-0.5 * z * z).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for (dst, w) in weights.iter().enumerate() {
            smoothed[dst] += mass * w / total;
        }
    }

    let n = values.len() as f64;
    let mut densities: Vec<f64> = smoothed
        .iter()
        .map(|&mass| mass / (n * bin_width) + DENSITY_FLOOR / width)
        .collect();
    let integral: f64 = densities.iter().map(|d| d * bin_width).sum();
    for d in &mut densities {
        *d /= integral;
    }

    let bin_edges = (0..=bins)
        .map(|i| lo + width * i as f64 / bins as f64)
        .collect();
    Ok(Epdf {
        bin_edges,
        densities,
        smoothing_bandwidth: bandwidth,
        bounds,
    })
}

/// Scott's-rule bandwidth: sample standard deviation scaled by `n^(-1/5)`.
fn scott_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt() * n.powf(-0.2)
}

/// The meta-acquisition transform for a known prior density value.
///
/// Computed as `ac * (1 + rate * e^-epoch * (p - 1))`, which is algebraically
/// the printed product form but returns `ac` bit-exactly when `rate = 0` or
/// `p = 1`.
pub fn meta_ac_with_density(ac_value: f64, density: f64, ctx: &AcquisitionContext) -> f64 {
    let decay = (-(ctx.epoch as f64)).exp();
    ac_value * (1.0 + ctx.rate * decay * (density - 1.0))
}

/// The meta-acquisition transform: reshape a base acquisition value by the
/// EPDF's density at the candidate point.
pub fn meta_ac(
    ac_value: f64,
    point: &HyperparamPoint,
    ctx: &AcquisitionContext,
    p: &Epdf,
) -> f64 {
    meta_ac_with_density(ac_value, p.density_at(point), ctx)
}
