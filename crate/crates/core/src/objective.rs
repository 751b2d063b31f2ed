//! Bilevel objectives: inner training, outer validation loss, and
//! hypergradients.
//!
//! The main objective is L2-regularized logistic regression: the inner
//! problem trains weights on the training split at a given regularization
//! weight, the outer loss is the validation logistic loss of those weights,
//! and the hypergradient comes from the implicit-function formula
//!
//! ```text
//! grad f = grad2_g - (d2h/dw dlam)^T (d2h/dw2)^-1 grad1_g
//! ```
//!
//! with the inverse Hessian applied by matrix-free conjugate gradient.
//! Analytic stand-ins (a quadratic bilevel problem and synthetic 1-D loss
//! shapes) share the same interfaces for oracle tests and benchmarks.
//!
//! Inner and outer losses are *means* over their splits rather than sums,
//! so tolerances do not scale with dataset size.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{Bounds, HyperparamPoint};

/// The logistic loss `log(1 + e^-t)`, evaluated stably for large `|t|`.
pub fn logistic_loss(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// Derivative of `logistic_loss`: `-1 / (1 + e^t)`.
pub fn logistic_loss_deriv(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + t.exp())
    }
}

/// Second derivative of `logistic_loss`: `sigma(t) * sigma(-t)`.
pub fn logistic_curvature(t: f64) -> f64 {
    let e = (-t.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// A sparse binary-classification dataset with a train/validation split.
#[derive(Clone, Debug)]
pub struct Dataset {
    rows: Vec<Vec<(u32, f64)>>,
    labels: Vec<f64>,
    n_features: usize,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
}

impl Dataset {
    /// Build a dataset with a seeded random split holding out `val_fraction`
    /// of the rows (default experimental protocol: 0.3).
    pub fn new(
        rows: Vec<Vec<(u32, f64)>>,
        labels: Vec<f64>,
        n_features: usize,
        val_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = rows.len();
        if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
            return Err(Error::InvalidInput(format!(
                "validation fraction must lie in (0, 1), got {val_fraction}"
            )));
        }
        let n_val = ((n as f64) * val_fraction).floor() as usize;
        if n_val == 0 || n_val == n {
            return Err(Error::InvalidInput(format!(
                "{n} rows cannot support a {val_fraction} validation split"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let val_idx = order[..n_val].to_vec();
        let train_idx = order[n_val..].to_vec();
        Dataset::with_split(rows, labels, n_features, train_idx, val_idx)
    }

    /// Build a dataset from an explicit split. The two index lists must
    /// partition `0..rows.len()` and both be non-empty.
    pub fn with_split(
        rows: Vec<Vec<(u32, f64)>>,
        labels: Vec<f64>,
        n_features: usize,
        train_idx: Vec<usize>,
        val_idx: Vec<usize>,
    ) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput(
                "labels must be +1 or -1 (remap at load time)".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|&(j, _)| j as usize >= n_features) {
                return Err(Error::InvalidInput(format!(
                    "row {i} references a feature index >= {n_features}"
                )));
            }
        }
        if train_idx.is_empty() || val_idx.is_empty() {
            return Err(Error::InvalidInput(
                "both train and validation splits must be non-empty".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &i in train_idx.iter().chain(&val_idx) {
            if i >= n || seen[i] {
                return Err(Error::InvalidInput(
                    "train/validation indices must partition the rows".into(),
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidInput(
                "train/validation indices must cover every row".into(),
            ));
        }
        Ok(Dataset {
            rows,
            labels,
            n_features,
            train_idx,
            val_idx,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> &[Vec<(u32, f64)>] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn val_indices(&self) -> &[usize] {
        &self.val_idx
    }
}

fn sparse_dot(row: &[(u32, f64)], w: &DVector<f64>) -> f64 {
    row.iter().map(|&(j, v)| v * w[j as usize]).sum()
}

/// Settings for the inner solver: SGD passes followed by an accelerated
/// full-gradient polish until the gradient norm meets `tolerance`.
#[derive(Clone, Copy, Debug)]
pub struct InnerSolverConfig {
    pub sgd_passes: usize,
    pub max_polish_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        InnerSolverConfig {
            sgd_passes: 3,
            max_polish_iters: 5000,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

/// Outcome of one inner training run.
#[derive(Clone, Debug)]
pub struct InnerSolveResult {
    pub weights: DVector<f64>,
    /// Regularized mean training loss at the returned weights.
    pub final_inner_loss: f64,
    /// Total SGD steps plus polish iterations.
    pub iterations: usize,
    /// Full-gradient norm at the returned weights.
    pub grad_norm: f64,
    /// Whether `grad_norm <= tolerance` was reached within budget.
    pub converged: bool,
}

fn full_gradient(data: &Dataset, w: &DVector<f64>, lam: f64) -> DVector<f64> {
    let train = data.train_indices();
    let n_tr = train.len() as f64;
    let mut g = w * (2.0 * lam);
    for &i in train {
        let y = data.labels()[i];
        let m = y * sparse_dot(&data.rows()[i], w);
        let c = logistic_loss_deriv(m) * y / n_tr;
        for &(j, v) in &data.rows()[i] {
            g[j as usize] += c * v;
        }
    }
    g
}

fn inner_loss(data: &Dataset, w: &DVector<f64>, lam: f64) -> f64 {
    let train = data.train_indices();
    let mean: f64 = train
        .iter()
        .map(|&i| logistic_loss(data.labels()[i] * sparse_dot(&data.rows()[i], w)))
        .sum::<f64>()
        / train.len() as f64;
    mean + lam * w.norm_squared()
}

/// Train the regularized logistic inner problem at regularization weight
/// `lambda` (a 1-D, non-negative hyperparameter).
///
/// Runs seeded SGD with a `1 / (L0 + 2 lambda t)` step decay, then polishes
/// with accelerated full-batch gradient descent (momentum restarts) until
/// the gradient norm reaches `cfg.tolerance`. Non-convergence within budget
/// is flagged on the result, not an error.
pub fn train_inner(
    data: &Dataset,
    lambda: &HyperparamPoint,
    cfg: &InnerSolverConfig,
) -> Result<InnerSolveResult> {
    if lambda.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: lambda.dim(),
        });
    }
    let lam = lambda.value();
    if lam < 0.0 {
        return Err(Error::InvalidInput(format!(
            "regularization weight must be non-negative, got {lam}"
        )));
    }

    let train = data.train_indices();
    let max_row_sq = train
        .iter()
        .map(|&i| data.rows()[i].iter().map(|&(_, v)| v * v).sum::<f64>())
        .fold(0.0f64, f64::max);
    let l0 = 0.25 * max_row_sq + 2.0 * lam;

    let mut w = DVector::zeros(data.n_features());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = train.to_vec();
    let mut t = 0usize;
    for _ in 0..cfg.sgd_passes {
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for &i in &order {
            t += 1;
            let step = 1.0 / (l0 + 2.0 * lam * t as f64);
            let y = data.labels()[i];
            let m = y * sparse_dot(&data.rows()[i], &w);
            let c = logistic_loss_deriv(m) * y;
            w *= 1.0 - 2.0 * lam * step;
            for &(j, v) in &data.rows()[i] {
                w[j as usize] -= step * c * v;
            }
        }
    }

    // Accelerated polish with adaptive momentum restarts.
    let mut v = w.clone();
    let mut momentum = 0usize;
    let mut polish = 0usize;
    let mut grad_norm = full_gradient(data, &w, lam).norm();
    while grad_norm > cfg.tolerance && polish < cfg.max_polish_iters {
        polish += 1;
        let g = full_gradient(data, &v, lam);
        let w_next = &v - &g / l0;
        let delta = &w_next - &w;
        if g.dot(&delta) > 0.0 {
            momentum = 0;
        } else {
            momentum += 1;
        }
        let beta = momentum as f64 / (momentum as f64 + 3.0);
        v = &w_next + &delta * beta;
        w = w_next;
        if g.norm() <= cfg.tolerance || polish % 16 == 0 || polish == cfg.max_polish_iters {
            grad_norm = full_gradient(data, &w, lam).norm();
        }
    }
    grad_norm = full_gradient(data, &w, lam).norm();

    let final_inner_loss = inner_loss(data, &w, lam);
    Ok(InnerSolveResult {
        converged: grad_norm <= cfg.tolerance,
        final_inner_loss,
        iterations: t + polish,
        grad_norm,
        weights: w,
    })
}

/// Mean validation logistic loss of a weight vector.
pub fn outer_loss(weights: &DVector<f64>, data: &Dataset) -> f64 {
    let val = data.val_indices();
    val.iter()
        .map(|&i| logistic_loss(data.labels()[i] * sparse_dot(&data.rows()[i], weights)))
        .sum::<f64>()
        / val.len() as f64
}

/// Conjugate gradient for a symmetric positive-definite operator given as a
/// matrix-vector product. Stops when the residual falls below
/// `rel_tol * ||b||`; returns the solution and iteration count, or `None`
/// if it fails to converge within `max_iters` (or the operator turns out
/// indefinite).
pub fn conjugate_gradient(
    mut apply: impl FnMut(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    rel_tol: f64,
    max_iters: usize,
) -> Option<(DVector<f64>, usize)> {
    let bnorm = b.norm();
    let mut x = DVector::zeros(b.len());
    if bnorm == 0.0 {
        return Some((x, 0));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    for k in 1..=max_iters {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return None;
        }
        let alpha = rs / pap;
        x += &p * alpha;
        r -= &ap * alpha;
        let rs_next = r.norm_squared();
        if rs_next.sqrt() <= rel_tol * bnorm {
            return Some((x, k));
        }
        p = &r + &p * (rs_next / rs);
        rs = rs_next;
    }
    None
}

/// CG settings for the hypergradient solve.
const HYPERGRAD_CG_TOL: f64 = 1e-8;
const HYPERGRAD_CG_MAX_ITERS: usize = 500;

/// Hypergradient of the validation loss with respect to the regularization
/// weight, through the trained inner weights.
///
/// Solves `(d2h/dw2) q = grad_w g` by CG on Hessian-vector products
/// (logistic curvature plus `2 lambda I`), then returns
/// `-(2 w)^T q` (the outer loss has no direct lambda dependence).
/// Returns `None` when the inner solve missed tolerance or CG fails:
/// the evaluation then contributes a value-only observation.
pub fn hypergradient(
    data: &Dataset,
    lambda: &HyperparamPoint,
    inner: &InnerSolveResult,
) -> Option<Vec<f64>> {
    if lambda.dim() != 1 || !inner.converged {
        return None;
    }
    let lam = lambda.value();
    let w = &inner.weights;
    let train = data.train_indices();
    let n_tr = train.len() as f64;

    // Per-row curvature weights at the trained margins.
    let curv: Vec<(usize, f64)> = train
        .iter()
        .map(|&i| {
            let m = data.labels()[i] * sparse_dot(&data.rows()[i], w);
            (i, logistic_curvature(m) / n_tr)
        })
        .collect();
    let hvp = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = v * (2.0 * lam);
        for &(i, c) in &curv {
            let s = sparse_dot(&data.rows()[i], v) * c;
            for &(j, x) in &data.rows()[i] {
                out[j as usize] += s * x;
            }
        }
        out
    };

    let val = data.val_indices();
    let n_val = val.len() as f64;
    let mut b = DVector::zeros(data.n_features());
    for &i in val {
        let y = data.labels()[i];
        let m = y * sparse_dot(&data.rows()[i], w);
        let c = logistic_loss_deriv(m) * y / n_val;
        for &(j, x) in &data.rows()[i] {
            b[j as usize] += c * x;
        }
    }

    let (q, _) = conjugate_gradient(hvp, &b, HYPERGRAD_CG_TOL, HYPERGRAD_CG_MAX_ITERS)?;
    Some(vec![-2.0 * w.dot(&q)])
}

/// Everything one objective evaluation produces.
#[derive(Clone, Debug)]
pub struct ObjectiveEvaluation {
    pub loss: f64,
    pub hypergrad: Option<Vec<f64>>,
    /// Present for bilevel objectives; analytic ones have no inner problem.
    pub inner: Option<InnerSolveResult>,
    pub wall_time: Duration,
}

/// A hyperparameter objective the optimizer loops can evaluate.
pub trait Objective {
    fn bounds(&self) -> &Bounds;
    fn evaluate(&self, point: &HyperparamPoint) -> Result<ObjectiveEvaluation>;
}

/// The regularized logistic bilevel objective over a dataset.
///
/// Each evaluation derives its SGD seed from the base seed and the bits of
/// lambda, so results are deterministic and independent of evaluation order.
pub struct BilevelLogistic {
    data: Dataset,
    inner_cfg: InnerSolverConfig,
    bounds: Bounds,
}

impl BilevelLogistic {
    pub fn new(data: Dataset, inner_cfg: InnerSolverConfig) -> Self {
        BilevelLogistic {
            data,
            inner_cfg,
            bounds: Bounds::unit(1),
        }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

fn mix_seed(seed: u64, x: f64) -> u64 {
    let mut z = seed ^ x.to_bits();
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Objective for BilevelLogistic {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, point: &HyperparamPoint) -> Result<ObjectiveEvaluation> {
        let start = Instant::now();
        let cfg = InnerSolverConfig {
            seed: mix_seed(self.inner_cfg.seed, point.value()),
            ..self.inner_cfg
        };
        let inner = train_inner(&self.data, point, &cfg)?;
        let loss = outer_loss(&inner.weights, &self.data);
        let hypergrad = hypergradient(&self.data, point, &inner);
        Ok(ObjectiveEvaluation {
            loss,
            hypergrad,
            inner: Some(inner),
            wall_time: start.elapsed(),
        })
    }
}

/// The analytic bilevel test problem
/// `h(lam, w) = (w - a)^2 + lam w^2`, `g(w) = (w - b)^2`.
///
/// Its inner solution is `A(lam) = a / (1 + lam)` and the exact
/// hypergradient is `-2 a (A(lam) - b) / (1 + lam)^2`, which the generic
/// implicit-gradient machinery must reproduce.
pub struct QuadraticBilevel {
    pub a: f64,
    pub b: f64,
    bounds: Bounds,
}

impl QuadraticBilevel {
    pub fn new(a: f64, b: f64, bounds: Bounds) -> Result<Self> {
        if bounds.dim() != 1 {
            return Err(Error::InvalidInput(
                "the quadratic bilevel problem is 1-D".into(),
            ));
        }
        Ok(QuadraticBilevel { a, b, bounds })
    }

    pub fn inner_solution(&self, lam: f64) -> f64 {
        self.a / (1.0 + lam)
    }

    pub fn loss(&self, lam: f64) -> f64 {
        let d = self.inner_solution(lam) - self.b;
        d * d
    }

    /// Closed-form hypergradient, for oracle comparisons.
    pub fn exact_hypergrad(&self, lam: f64) -> f64 {
        -2.0 * self.a * (self.inner_solution(lam) - self.b) / ((1.0 + lam) * (1.0 + lam))
    }

    /// Hypergradient via the same implicit-gradient route as the logistic
    /// objective: CG on the (here 1-by-1) inner Hessian.
    pub fn hypergrad(&self, lam: f64) -> Option<f64> {
        let w = self.inner_solution(lam);
        let hess = 2.0 + 2.0 * lam;
        let b = DVector::from_element(1, 2.0 * (w - self.b));
        let (q, _) = conjugate_gradient(|v| v * hess, &b, 1e-14, 8)?;
        Some(-2.0 * w * q[0])
    }
}

impl Objective for QuadraticBilevel {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, point: &HyperparamPoint) -> Result<ObjectiveEvaluation> {
        let start = Instant::now();
        let lam = point.value();
        let w = self.inner_solution(lam);
        Ok(ObjectiveEvaluation {
            loss: self.loss(lam),
            hypergrad: self.hypergrad(lam).map(|g| vec![g]),
            inner: Some(InnerSolveResult {
                weights: DVector::from_element(1, w),
                final_inner_loss: (w - self.a) * (w - self.a) + lam * w * w,
                iterations: 0,
                grad_norm: 0.0,
                converged: true,
            }),
            wall_time: start.elapsed(),
        })
    }
}

/// Closed-form 1-D loss shapes used by tests and benchmarks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyntheticKind {
    /// `(x - center)^2`.
    Unimodal { center: f64 },
    /// `(x - center)^2 + amplitude * sin(frequency * x)`; with
    /// `amplitude * frequency > 2` local gradients can oppose the trend.
    WavyUnimodal {
        center: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Two Gaussian wells: a local one at 0.25 (depth 0.7) and the global
    /// one at 0.75 (depth 1.0).
    Multimodal,
}

impl SyntheticKind {
    /// Value and exact gradient at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match *self {
            SyntheticKind::Unimodal { center } => {
                let d = x - center;
                (d * d, 2.0 * d)
            }
            SyntheticKind::WavyUnimodal {
                center,
                amplitude,
                frequency,
            } => {
                let d = x - center;
                (
                    d * d + amplitude * (frequency * x).sin(),
                    2.0 * d + amplitude * frequency * (frequency * x).cos(),
                )
            }
            SyntheticKind::Multimodal => {
                let g1 = (-((x - 0.25) / 0.12).powi(2)).exp();
                let g2 = (-((x - 0.75) / 0.10).powi(2)).exp();
                let value = -0.7 * g1 - g2;
                let grad = 0.7 * g1 * 2.0 * (x - 0.25) / (0.12 * 0.12)
                    + g2 * 2.0 * (x - 0.75) / (0.10 * 0.10);
                (value, grad)
            }
        }
    }
}

/// A synthetic objective over a 1-D box, with exact gradients.
pub struct SyntheticObjective {
    kind: SyntheticKind,
    bounds: Bounds,
}

impl SyntheticObjective {
    pub fn new(kind: SyntheticKind) -> Self {
        SyntheticObjective {
            kind,
            bounds: Bounds::unit(1),
        }
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }
}

impl Objective for SyntheticObjective {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, point: &HyperparamPoint) -> Result<ObjectiveEvaluation> {
        let start = Instant::now();
        let (loss, grad) = self.kind.eval(point.value());
        Ok(ObjectiveEvaluation {
            loss,
            hypergrad: Some(vec![grad]),
            inner: None,
            wall_time: start.elapsed(),
        })
    }
}
