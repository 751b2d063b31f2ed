//! Radial basis kernels, their gradients, and batch kernel-matrix assembly.
//!
//! Two kernel families are provided: the Gaussian RBF
//! `k(x1, x2) = exp(-||x1 - x2||^2 / h^2)` and the cubic RBF
//! `k(x1, x2) = ||x1 - x2||^3`. Distances are measured in the hyperparameter
//! box normalized to the unit cube, so a point set over `[0, 1]` with unit
//! bandwidth evaluates the textbook formulas verbatim, and rescaled search
//! boxes do not degenerate the kernels. Gradients are reported with respect
//! to the *raw* coordinates of the first argument (chain rule through the
//! normalization).

use crate::error::{Error, Result};

/// A kernel family together with its shape parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind {
    /// `exp(-||x1 - x2||^2 / bandwidth^2)`; positive definite.
    GaussianRbf { bandwidth: f64 },
    /// `||x1 - x2||^3`; conditionally positive definite only. Allowed in the
    /// multikernel mean fit, but not as the sole variance kernel.
    CubicRbf,
}

impl KernelKind {
    /// Gaussian RBF with unit bandwidth.
    pub fn gaussian() -> Self {
        KernelKind::GaussianRbf { bandwidth: 1.0 }
    }

    /// Gaussian RBF with an explicit bandwidth. Fails on `bandwidth <= 0`
    /// or non-finite values.
    pub fn gaussian_with_bandwidth(bandwidth: f64) -> Result<Self> {
        if !bandwidth.is_finite() || bandwidth <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "kernel bandwidth must be a positive finite number, got {bandwidth}"
            )));
        }
        Ok(KernelKind::GaussianRbf { bandwidth })
    }

    /// Whether kernel matrices of this kind are positive semidefinite, i.e.
    /// safe to factor with a Cholesky decomposition and usable for variance.
    pub fn is_positive_definite(&self) -> bool {
        matches!(self, KernelKind::GaussianRbf { .. })
    }
}

/// Per-dimension closed intervals delimiting the search box.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    intervals: Vec<(f64, f64)>,
}

impl Bounds {
    /// A box from explicit `(lo, hi)` intervals. Fails if empty, non-finite,
    /// or `lo >= hi` anywhere.
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidInput(
                "bounds must cover at least one dimension".into(),
            ));
        }
        for &(lo, hi) in &intervals {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidInput(format!(
                    "bound interval ({lo}, {hi}) is not a finite non-empty interval"
                )));
            }
        }
        Ok(Bounds { intervals })
    }

    /// The unit cube `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        Bounds {
            intervals: vec![(0.0, 1.0); dim.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        self.intervals[i]
    }

    pub fn width(&self, i: usize) -> f64 {
        let (lo, hi) = self.intervals[i];
        hi - lo
    }

    pub fn contains(&self, coords: &[f64]) -> bool {
        coords.len() == self.dim()
            && coords
                .iter()
                .zip(&self.intervals)
                .all(|(&c, &(lo, hi))| c >= lo && c <= hi)
    }

    /// Clamp raw coordinates into the box, in place.
    pub fn clamp(&self, coords: &mut [f64]) {
        for (c, &(lo, hi)) in coords.iter_mut().zip(&self.intervals) {
            *c = c.clamp(lo, hi);
        }
    }
}

/// A point in the hyperparameter box: raw coordinates plus the box they
/// live in. Construction validates that every coordinate is finite and
/// inside its interval.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperparamPoint {
    coords: Vec<f64>,
    bounds: Bounds,
}

impl HyperparamPoint {
    pub fn new(coords: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if coords.len() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                got: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "point coordinates must be finite".into(),
            ));
        }
        if !bounds.contains(&coords) {
            return Err(Error::InvalidInput(format!(
                "point {coords:?} lies outside its bounds"
            )));
        }
        Ok(HyperparamPoint { coords, bounds })
    }

    /// A point in the unit cube of matching dimension.
    pub fn unit(coords: Vec<f64>) -> Result<Self> {
        let bounds = Bounds::unit(coords.len());
        HyperparamPoint::new(coords, bounds)
    }

    /// Convenience for the 1-D experiments: a scalar in `[0, 1]`.
    pub fn scalar(value: f64) -> Result<Self> {
        HyperparamPoint::unit(vec![value])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The first coordinate; the common accessor in 1-D experiments.
    pub fn value(&self) -> f64 {
        self.coords[0]
    }

    /// Coordinate `i` mapped into the unit cube.
    pub fn normalized(&self, i: usize) -> f64 {
        let (lo, _) = self.bounds.interval(i);
        (self.coords[i] - lo) / self.bounds.width(i)
    }
}

fn check_pair(x1: &HyperparamPoint, x2: &HyperparamPoint) -> Result<()> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimensionMismatch {
            expected: x1.dim(),
            got: x2.dim(),
        });
    }
    if x1.bounds() != x2.bounds() {
        return Err(Error::InvalidInput(
            "points must share the same bounds".into(),
        ));
    }
    Ok(())
}

/// Squared distance between two points in normalized coordinates.
fn normalized_sq_dist(x1: &HyperparamPoint, x2: &HyperparamPoint) -> f64 {
    (0..x1.dim())
        .map(|i| {
            let d = x1.normalized(i) - x2.normalized(i);
            d * d
        })
        .sum()
}

/// Evaluate a kernel at a pair of points.
///
/// Symmetric in its arguments; the Gaussian kernel maps into `(0, 1]` and the
/// cubic kernel is non-negative.
pub fn eval_kernel(kind: KernelKind, x1: &HyperparamPoint, x2: &HyperparamPoint) -> Result<f64> {
    check_pair(x1, x2)?;
    let sq = normalized_sq_dist(x1, x2);
    Ok(match kind {
        KernelKind::GaussianRbf { bandwidth } => (-sq / (bandwidth * bandwidth)).exp(),
        KernelKind::CubicRbf => sq.sqrt().powi(3),
    })
}

/// Gradient of `eval_kernel` with respect to the raw coordinates of the
/// first argument.
///
/// For the Gaussian RBF this is `-2 (u1 - u2) k / h^2` and for the cubic RBF
/// `3 ||u1 - u2|| (u1 - u2)`, both in normalized coordinates `u`, scaled back
/// to raw coordinates by `1 / width_i` per dimension.
pub fn eval_kernel_grad(
    kind: KernelKind,
    x1: &HyperparamPoint,
    x2: &HyperparamPoint,
) -> Result<Vec<f64>> {
    check_pair(x1, x2)?;
    let d = x1.dim();
    let sq = normalized_sq_dist(x1, x2);
    let mut grad = vec![0.0; d];
    match kind {
        KernelKind::GaussianRbf { bandwidth } => {
            let k = (-sq / (bandwidth * bandwidth)).exp();
            for i in 0..d {
                let diff = x1.normalized(i) - x2.normalized(i);
                grad[i] = -2.0 * diff * k / (bandwidth * bandwidth) / x1.bounds().width(i);
            }
        }
        KernelKind::CubicRbf => {
            let r = sq.sqrt();
            for i in 0..d {
                let diff = x1.normalized(i) - x2.normalized(i);
                grad[i] = 3.0 * r * diff / x1.bounds().width(i);
            }
        }
    }
    Ok(grad)
}

/// The n-by-n kernel matrix over a point set: entry `(i, j)` is
/// `eval_kernel(points[i], points[j])`.
pub fn kernel_matrix(
    kind: KernelKind,
    points: &[HyperparamPoint],
) -> Result<nalgebra::DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "kernel matrix needs at least one point".into(),
        ));
    }
    let n = points.len();
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = eval_kernel(kind, &points[i], &points[j])?;
            m[(i, j)] = k;
            m[(j, i)] = k;
        }
    }
    Ok(m)
}

/// The (n*d)-by-n gradient kernel matrix over a point set.
///
/// Block row `i` (rows `i*d .. (i+1)*d`), column `j` holds
/// `eval_kernel_grad(points[i], points[j])`, so that for a coefficient
/// vector `a`, `(grad_matrix * a)` stacks the gradients of
/// `sum_j a_j k(., points[j])` evaluated at each training point.
pub fn kernel_grad_matrix(
    kind: KernelKind,
    points: &[HyperparamPoint],
) -> Result<nalgebra::DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "gradient kernel matrix needs at least one point".into(),
        ));
    }
    let n = points.len();
    let d = points[0].dim();
    let mut m = nalgebra::DMatrix::zeros(n * d, n);
    for i in 0..n {
        for j in 0..n {
            let g = eval_kernel_grad(kind, &points[i], &points[j])?;
            for (r, gi) in g.iter().enumerate() {
                m[(i * d + r, j)] = *gi;
            }
        }
    }
    Ok(m)
}
