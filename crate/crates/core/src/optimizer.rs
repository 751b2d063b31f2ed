//! Sequential model-based optimization loops and baseline searches.
//!
//! [`run_smbo`] is the classic loop: fit a single-kernel GP to the observed
//! losses, maximize expected improvement over a random candidate pool, and
//! evaluate a few challengers per epoch. [`run_acc_smbo`] is the accelerated
//! variant: it fits the gradient-based multikernel surrogate instead and
//! reshapes the acquisition by a metalearned prior density. With the prior
//! disabled, a single kernel, and value-only observations, the accelerated
//! loop reproduces the classic one bit for bit.
//!
//! The loop pieces — [`propose_candidates`] (pool scoring plus golden-section
//! refinement) and [`intensify_select`] (evaluate every challenger, keep the
//! argmin) — are exposed for direct testing and reuse.
//!
//! Baselines for comparison: descending [`grid_search`], [`random_search`],
//! and plain hypergradient descent ([`hoag_descent`]).

use std::cmp::Ordering;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{
    expected_improvement, meta_ac_with_density, AcquisitionContext, Epdf,
};
use crate::error::{Error, Result};
use crate::gp::{fit_multikernel_grad_gp, fit_standard_gp, History, Observation, SurrogateModel};
use crate::kernels::{Bounds, HyperparamPoint, KernelKind};
use crate::objective::Objective;

/// Candidates whose infinity-norm distance to an already-evaluated point is
/// below this are discarded (noise-free GPs cannot absorb duplicates).
const DEDUP_TOL: f64 = 1e-9;

/// Golden-section steps when refining a pool candidate.
const REFINE_STEPS: usize = 20;

/// Local search half-width around a pool candidate, in units of the box
/// width divided by the pool size.
const REFINE_SPAN: f64 = 2.5;

/// Settings shared by both SMBO loops.
#[derive(Clone, Debug)]
pub struct SmboConfig {
    /// Acquisition epochs after the initial design point.
    pub epochs: usize,
    /// Challengers proposed and evaluated per epoch.
    pub challengers_per_epoch: usize,
    /// Random candidates scored per acquisition maximization.
    pub pool_size: usize,
    pub seed: u64,
    /// Surrogate kernels. The classic loop uses the first kernel only; the
    /// accelerated loop fits all of them (the first must be positive
    /// definite).
    pub kernels: Vec<KernelKind>,
    /// Influence of the metalearning prior in the accelerated loop.
    pub meta_rate: f64,
    /// EI exploration offset; `None` selects 1% of the observed loss range.
    pub exploration_offset: Option<f64>,
}

impl Default for SmboConfig {
    fn default() -> Self {
        SmboConfig {
            epochs: 30,
            challengers_per_epoch: 4,
            pool_size: 1000,
            seed: 0,
            kernels: vec![KernelKind::gaussian(), KernelKind::CubicRbf],
            meta_rate: 0.1,
            exploration_offset: None,
        }
    }
}

/// One trace row: what an epoch evaluated and the incumbent after it.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    /// The epoch's selected point (SMBO: the intensification winner;
    /// baselines: the point evaluated at this step).
    pub lambda: Vec<f64>,
    /// Loss of `lambda`.
    pub loss: f64,
    /// Best loss over all evaluations so far.
    pub best_loss: f64,
    /// Cumulative objective evaluations, including the initial design.
    pub evals: usize,
    /// Wall-clock milliseconds since the run started. Excluded from
    /// determinism comparisons.
    pub wall_ms: f64,
}

/// A full optimization run: per-epoch rows plus free-form notes about
/// degraded steps (failed fits, missing gradients, discarded candidates).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    rows: Vec<TraceRow>,
    notes: Vec<String>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn push_row(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn push_note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// The best row: minimal loss, ties to the earliest epoch.
    pub fn best(&self) -> Option<&TraceRow> {
        self.rows
            .iter()
            .reduce(|best, row| if row.loss < best.loss { row } else { best })
    }

    /// Best loss after the final epoch.
    pub fn final_best_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.best_loss)
    }

    pub fn total_evals(&self) -> usize {
        self.rows.last().map_or(0, |r| r.evals)
    }

    /// First epoch whose incumbent loss is at or below `target`.
    pub fn epochs_to_target(&self, target: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.best_loss <= target)
            .map(|r| r.epoch)
    }
}

fn validate(cfg: &SmboConfig, bounds: &Bounds) -> Result<()> {
    if cfg.challengers_per_epoch == 0 {
        return Err(Error::InvalidInput(
            "at least one challenger per epoch is required".into(),
        ));
    }
    if cfg.pool_size < cfg.challengers_per_epoch {
        return Err(Error::InvalidInput(format!(
            "pool size {} cannot cover {} challengers",
            cfg.pool_size, cfg.challengers_per_epoch
        )));
    }
    if cfg.kernels.is_empty() {
        return Err(Error::InvalidInput("at least one kernel is required".into()));
    }
    if !cfg.kernels[0].is_positive_definite() {
        return Err(Error::InvalidInput(
            "the first kernel must be positive definite".into(),
        ));
    }
    if cfg.kernels.len() > bounds.dim() + 1 {
        return Err(Error::InvalidInput(format!(
            "kernel count must satisfy m <= d + 1 = {}, got {}",
            bounds.dim() + 1,
            cfg.kernels.len()
        )));
    }
    if !(0.0..=1.0).contains(&cfg.meta_rate) {
        return Err(Error::InvalidInput(format!(
            "meta rate must lie in [0, 1], got {}",
            cfg.meta_rate
        )));
    }
    if let Some(xi) = cfg.exploration_offset {
        if !xi.is_finite() || xi < 0.0 {
            return Err(Error::InvalidInput(format!(
                "exploration offset must be non-negative, got {xi}"
            )));
        }
    }
    Ok(())
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max)
}

/// The `lambda = 1` initial design point, clamped into the search box.
fn initial_point(bounds: &Bounds) -> HyperparamPoint {
    let mut coords = vec![1.0; bounds.dim()];
    bounds.clamp(&mut coords);
    HyperparamPoint::new(coords, bounds.clone()).expect("clamped coordinates are in bounds")
}

fn draw_uniform(rng: &mut ChaCha8Rng, bounds: &Bounds) -> HyperparamPoint {
    let mut coords: Vec<f64> = (0..bounds.dim())
        .map(|i| {
            let (lo, hi) = bounds.interval(i);
            lo + (hi - lo) * rng.random::<f64>()
        })
        .collect();
    bounds.clamp(&mut coords);
    HyperparamPoint::new(coords, bounds.clone()).expect("clamped coordinates are in bounds")
}

/// View of the history where every observation carries a gradient field, as
/// the multikernel fit requires; absent gradients become non-finite entries,
/// which the fit treats as value-only rows.
fn grad_view(history: &History) -> Result<History> {
    let observations = history
        .observations()
        .iter()
        .map(|o| {
            let grad = o
                .grad()
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![f64::NAN; o.point().dim()]);
            Observation::new(o.point().clone(), o.loss(), Some(grad))
        })
        .collect::<Result<Vec<_>>>()?;
    History::from_observations(observations)
}

fn fit_surrogate(history: &History, cfg: &SmboConfig, multikernel: bool) -> Result<SurrogateModel> {
    if multikernel && history.len() >= 2 {
        fit_multikernel_grad_gp(&grad_view(history)?, &cfg.kernels)
    } else {
        // The multikernel fit needs two points; the first epoch (and the
        // classic loop throughout) uses the single-kernel GP.
        fit_standard_gp(history, cfg.kernels[0])
    }
}

/// Golden-section refinement of the acquisition around a pool candidate.
/// Only applied in one dimension; keeps the best point ever scored.
fn refine_1d(
    score: &dyn Fn(&HyperparamPoint) -> f64,
    center: &HyperparamPoint,
    bounds: &Bounds,
    pool_size: usize,
) -> HyperparamPoint {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (lo, hi) = bounds.interval(0);
    let span = REFINE_SPAN * (hi - lo) / pool_size.max(1) as f64;
    let mut a = (center.value() - span).max(lo);
    let mut b = (center.value() + span).min(hi);
    let make = |x: f64| {
        HyperparamPoint::new(vec![x], bounds.clone()).expect("interval endpoints stay in bounds")
    };
    let mut best = (score(center), center.clone());
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut p1 = make(x1);
    let mut p2 = make(x2);
    let mut f1 = score(&p1);
    let mut f2 = score(&p2);
    for _ in 0..REFINE_STEPS {
        if f1 > best.0 {
            best = (f1, p1.clone());
        }
        if f2 > best.0 {
            best = (f2, p2.clone());
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            p2 = p1.clone();
            x1 = b - INV_PHI * (b - a);
            p1 = make(x1);
            f1 = score(&p1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            p1 = p2.clone();
            x2 = a + INV_PHI * (b - a);
            p2 = make(x2);
            f2 = score(&p2);
        }
    }
    if f1 > best.0 {
        best = (f1, p1);
    }
    if f2 > best.0 {
        best = (f2, p2);
    }
    best.1
}

/// Propose up to `challengers` candidates by maximizing an acquisition
/// closure over a candidate pool.
///
/// The pool is scored and ranked (stable: ties keep pool order), the top
/// candidates are refined by golden-section local search (1-D only), and
/// anything within `1e-9` of an evaluated or already-selected point is
/// dropped. A pool with no positive score anywhere carries no improvement
/// signal; the proposal then falls back to the pool's own (random) order.
pub fn propose_candidates<F>(
    score: F,
    pool: &[HyperparamPoint],
    history: &History,
    bounds: &Bounds,
    challengers: usize,
) -> Vec<HyperparamPoint>
where
    F: Fn(&HyperparamPoint) -> f64,
{
    if pool.is_empty() || challengers == 0 {
        return Vec::new();
    }
    let scores: Vec<f64> = pool.iter().map(&score).collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let mut selected: Vec<HyperparamPoint> = Vec::new();
    let is_fresh = |cand: &HyperparamPoint, selected: &[HyperparamPoint]| {
        history.min_distance(cand.coords()) > DEDUP_TOL
            && selected
                .iter()
                .all(|s| inf_dist(s.coords(), cand.coords()) > DEDUP_TOL)
    };

    if scores[order[0]] <= 0.0 {
        for p in pool {
            if selected.len() == challengers {
                break;
            }
            if is_fresh(p, &selected) {
                selected.push(p.clone());
            }
        }
        return selected;
    }

    for &i in &order {
        if selected.len() == challengers {
            break;
        }
        let refined = if bounds.dim() == 1 {
            refine_1d(&|p| score(p), &pool[i], bounds, pool.len())
        } else {
            pool[i].clone()
        };
        if is_fresh(&refined, &selected) {
            selected.push(refined);
        } else if is_fresh(&pool[i], &selected) {
            selected.push(pool[i].clone());
        }
    }
    selected
}

/// One successful challenger evaluation.
#[derive(Clone, Debug)]
pub struct EvaluatedPoint {
    pub point: HyperparamPoint,
    pub loss: f64,
    pub grad: Option<Vec<f64>>,
}

/// Result of intensification: every successful evaluation plus the winner.
#[derive(Clone, Debug)]
pub struct IntensifyOutcome {
    /// Index of the winner within `evaluations`.
    pub winner: usize,
    /// Successful evaluations, in challenger order.
    pub evaluations: Vec<EvaluatedPoint>,
    /// One entry per skipped challenger (failure or non-finite loss).
    pub notes: Vec<String>,
}

impl IntensifyOutcome {
    pub fn winner_point(&self) -> &EvaluatedPoint {
        &self.evaluations[self.winner]
    }
}

/// Evaluate every challenger once and select the argmin by observed loss
/// (ties resolve to the earliest challenger in list order). Challengers
/// whose evaluation fails or returns a non-finite loss are skipped with a
/// note; if every challenger fails the epoch is aborted.
pub fn intensify_select(
    objective: &dyn Objective,
    challengers: &[HyperparamPoint],
) -> Result<IntensifyOutcome> {
    if challengers.is_empty() {
        return Err(Error::AllChallengersFailed);
    }
    let d = objective.bounds().dim();
    let mut evaluations: Vec<EvaluatedPoint> = Vec::new();
    let mut notes = Vec::new();
    for ch in challengers {
        match objective.evaluate(ch) {
            Ok(ev) if ev.loss.is_finite() => {
                let grad = ev.hypergrad.filter(|g| g.len() == d);
                evaluations.push(EvaluatedPoint {
                    point: ch.clone(),
                    loss: ev.loss,
                    grad,
                });
            }
            Ok(ev) => notes.push(format!(
                "discarding challenger at {:?} with non-finite loss {}",
                ch.coords(),
                ev.loss
            )),
            Err(e) => notes.push(format!("challenger at {:?} failed: {e}", ch.coords())),
        }
    }
    if evaluations.is_empty() {
        return Err(Error::AllChallengersFailed);
    }
    let mut winner = 0;
    for i in 1..evaluations.len() {
        if evaluations[i].loss < evaluations[winner].loss {
            winner = i;
        }
    }
    Ok(IntensifyOutcome {
        winner,
        evaluations,
        notes,
    })
}

struct EngineMode<'a> {
    multikernel: bool,
    prior: Option<&'a Epdf>,
    rate: f64,
}

fn run_engine(objective: &dyn Objective, cfg: &SmboConfig, mode: EngineMode) -> Result<Trace> {
    let bounds = objective.bounds().clone();
    validate(cfg, &bounds)?;
    if let Some(p) = mode.prior {
        if p.bounds() != &bounds {
            return Err(Error::InvalidInput(
                "the prior density and the objective must share one search box".into(),
            ));
        }
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = History::new();
    let mut trace = Trace::new();
    let mut evals = 0usize;

    let init = initial_point(&bounds);
    let first = objective.evaluate(&init)?;
    if !first.loss.is_finite() {
        return Err(Error::EvaluationFailed(format!(
            "initial point returned a non-finite loss {}",
            first.loss
        )));
    }
    evals += 1;
    let grad = first.hypergrad.filter(|g| g.len() == bounds.dim());
    history.push(Observation::new(init.clone(), first.loss, grad)?)?;
    trace.push_row(TraceRow {
        epoch: 0,
        lambda: init.coords().to_vec(),
        loss: first.loss,
        best_loss: first.loss,
        evals,
        wall_ms: elapsed_ms(start),
    });

    for epoch in 1..=cfg.epochs {
        // Draw the pool before fitting so the random stream is identical
        // whether or not the fit succeeds.
        let pool: Vec<HyperparamPoint> = (0..cfg.pool_size)
            .map(|_| draw_uniform(&mut rng, &bounds))
            .collect();

        let incumbent = history.best().expect("history is non-empty").loss();
        let (lo_loss, hi_loss) = history.observations().iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), o| (lo.min(o.loss()), hi.max(o.loss())),
        );
        let xi = cfg
            .exploration_offset
            .unwrap_or(0.01 * (hi_loss - lo_loss));
        let ctx = AcquisitionContext::new(incumbent, (epoch - 1) as u32, mode.rate, xi)?;

        let challengers = match fit_surrogate(&history, cfg, mode.multikernel) {
            Ok(model) => {
                let score = |p: &HyperparamPoint| {
                    let ei = expected_improvement(&model.predict(p), &ctx);
                    match mode.prior {
                        Some(pr) => meta_ac_with_density(ei, pr.density_at(p), &ctx),
                        None => ei,
                    }
                };
                propose_candidates(
                    score,
                    &pool,
                    &history,
                    &bounds,
                    cfg.challengers_per_epoch,
                )
            }
            Err(e) => {
                trace.push_note(format!(
                    "epoch {epoch}: surrogate fit failed ({e}); using random candidates"
                ));
                // A zero score everywhere makes the proposal fall back to
                // the pool's random order.
                propose_candidates(
                    |_| 0.0,
                    &pool,
                    &history,
                    &bounds,
                    cfg.challengers_per_epoch,
                )
            }
        };

        let outcome = intensify_select(objective, &challengers)?;
        for note in &outcome.notes {
            trace.push_note(format!("epoch {epoch}: {note}"));
        }
        evals += outcome.evaluations.len();
        let win = outcome.winner_point().clone();
        for ev in outcome.evaluations {
            let obs = Observation::new(ev.point, ev.loss, ev.grad)?;
            if let Err(e) = history.push(obs) {
                trace.push_note(format!("epoch {epoch}: dropping duplicate evaluation ({e})"));
            }
        }

        let best_loss = history.best().expect("history is non-empty").loss();
        trace.push_row(TraceRow {
            epoch,
            lambda: win.point.coords().to_vec(),
            loss: win.loss,
            best_loss,
            evals,
            wall_ms: elapsed_ms(start),
        });
    }

    Ok(trace)
}

/// Classic SMBO: single-kernel GP surrogate on the observed losses and plain
/// expected improvement. Gradients in the evaluations are recorded but not
/// used.
pub fn run_smbo(objective: &dyn Objective, cfg: &SmboConfig) -> Result<Trace> {
    run_engine(
        objective,
        cfg,
        EngineMode {
            multikernel: false,
            prior: None,
            rate: 0.0,
        },
    )
}

/// Accelerated SMBO: the gradient-based multikernel surrogate plus the
/// meta-acquisition reshaped by `prior`.
///
/// Without a prior the acquisition reduces to plain expected improvement
/// (`rate` is treated as zero and a note records the downgrade).
pub fn run_acc_smbo(
    objective: &dyn Objective,
    cfg: &SmboConfig,
    prior: Option<&Epdf>,
) -> Result<Trace> {
    let mode = EngineMode {
        multikernel: true,
        prior,
        rate: if prior.is_some() { cfg.meta_rate } else { 0.0 },
    };
    let downgraded = prior.is_none() && cfg.meta_rate != 0.0;
    let mut trace = run_engine(objective, cfg, mode)?;
    if downgraded {
        trace.notes.insert(
            0,
            "no metalearning density supplied; prior influence disabled (rate treated as 0)"
                .to_string(),
        );
    }
    Ok(trace)
}

/// Evaluate a descending grid over a 1-D box, from the upper bound down to
/// the lower bound, one trace row per point.
pub fn grid_search(objective: &dyn Objective, n_points: usize) -> Result<Trace> {
    let bounds = objective.bounds().clone();
    if bounds.dim() != 1 {
        return Err(Error::InvalidInput(
            "the grid baseline supports 1-D hyperparameters only".into(),
        ));
    }
    if n_points == 0 {
        return Err(Error::InvalidInput("grid needs at least one point".into()));
    }
    let (lo, hi) = bounds.interval(0);
    let start = Instant::now();
    let mut trace = Trace::new();
    let mut best_loss = f64::INFINITY;
    for i in 0..n_points {
        let x = if n_points == 1 {
            hi
        } else {
            hi - (hi - lo) * i as f64 / (n_points - 1) as f64
        };
        let mut coords = vec![x];
        bounds.clamp(&mut coords);
        let point = HyperparamPoint::new(coords, bounds.clone())?;
        let ev = objective.evaluate(&point)?;
        best_loss = best_loss.min(ev.loss);
        trace.push_row(TraceRow {
            epoch: i,
            lambda: point.coords().to_vec(),
            loss: ev.loss,
            best_loss,
            evals: i + 1,
            wall_ms: elapsed_ms(start),
        });
    }
    Ok(trace)
}

/// Random search: the same `lambda = 1` initial point as the SMBO loops,
/// then uniform draws, one trace row per evaluation.
pub fn random_search(objective: &dyn Objective, epochs: usize, seed: u64) -> Result<Trace> {
    if epochs == 0 {
        return Err(Error::InvalidInput(
            "random search needs at least one evaluation".into(),
        ));
    }
    let bounds = objective.bounds().clone();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Trace::new();
    let mut best_loss = f64::INFINITY;
    for t in 0..epochs {
        let point = if t == 0 {
            initial_point(&bounds)
        } else {
            draw_uniform(&mut rng, &bounds)
        };
        let ev = objective.evaluate(&point)?;
        best_loss = best_loss.min(ev.loss);
        trace.push_row(TraceRow {
            epoch: t,
            lambda: point.coords().to_vec(),
            loss: ev.loss,
            best_loss,
            evals: t + 1,
            wall_ms: elapsed_ms(start),
        });
    }
    Ok(trace)
}

/// Plain hypergradient descent from `lambda = 1`: step along the negative
/// hypergradient, clamped to the box. Evaluations without a usable
/// hypergradient repeat the current point and leave a note.
pub fn hoag_descent(objective: &dyn Objective, epochs: usize, step: f64) -> Result<Trace> {
    if epochs == 0 {
        return Err(Error::InvalidInput(
            "hypergradient descent needs at least one evaluation".into(),
        ));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "step size must be positive, got {step}"
        )));
    }
    let bounds = objective.bounds().clone();
    let start = Instant::now();
    let mut trace = Trace::new();
    let mut best_loss = f64::INFINITY;
    let mut point = initial_point(&bounds);
    for t in 0..epochs {
        let ev = objective.evaluate(&point)?;
        best_loss = best_loss.min(ev.loss);
        trace.push_row(TraceRow {
            epoch: t,
            lambda: point.coords().to_vec(),
            loss: ev.loss,
            best_loss,
            evals: t + 1,
            wall_ms: elapsed_ms(start),
        });
        match ev
            .hypergrad
            .filter(|g| g.len() == bounds.dim() && g.iter().all(|v| v.is_finite()))
        {
            Some(g) => {
                let mut coords: Vec<f64> = point
                    .coords()
                    .iter()
                    .zip(&g)
                    .map(|(x, gi)| x - step * gi)
                    .collect();
                bounds.clamp(&mut coords);
                point = HyperparamPoint::new(coords, bounds.clone())?;
            }
            None => trace.push_note(format!(
                "epoch {t}: no usable hypergradient; repeating the current point"
            )),
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ObjectiveEvaluation, SyntheticKind, SyntheticObjective};

    /// Wraps an objective and strips gradients from its evaluations.
    struct ValueOnly(SyntheticObjective);

    impl Objective for ValueOnly {
        fn bounds(&self) -> &Bounds {
            self.0.bounds()
        }

        fn evaluate(&self, point: &HyperparamPoint) -> Result<ObjectiveEvaluation> {
            let mut ev = self.0.evaluate(point)?;
            ev.hypergrad = None;
            Ok(ev)
        }
    }

    fn unimodal(center: f64) -> SyntheticObjective {
        SyntheticObjective::new(SyntheticKind::Unimodal { center })
    }

    fn wavy() -> SyntheticObjective {
        SyntheticObjective::new(SyntheticKind::WavyUnimodal {
            center: 0.3,
            amplitude: 0.05,
            frequency: 40.0,
        })
    }

    fn small_cfg(seed: u64) -> SmboConfig {
        SmboConfig {
            epochs: 5,
            pool_size: 200,
            seed,
            ..Default::default()
        }
    }

    fn rows_match_except_wall(a: &Trace, b: &Trace) -> bool {
        a.rows().len() == b.rows().len()
            && a.rows().iter().zip(b.rows()).all(|(x, y)| {
                x.epoch == y.epoch
                    && x.lambda == y.lambda
                    && x.loss == y.loss
                    && x.best_loss == y.best_loss
                    && x.evals == y.evals
            })
    }

    fn uniform_pool(n: usize, seed: u64) -> Vec<HyperparamPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| HyperparamPoint::scalar(rng.random::<f64>()).unwrap())
            .collect()
    }

    #[test]
    fn budget_accounting_counts_initial_point_plus_challengers() {
        let trace = run_smbo(&unimodal(0.3), &small_cfg(1)).unwrap();
        assert_eq!(trace.rows().len(), 6);
        assert_eq!(trace.rows()[0].epoch, 0);
        assert_eq!(trace.rows()[0].evals, 1);
        assert_eq!(trace.rows()[0].lambda, vec![1.0]);
        for (e, row) in trace.rows().iter().enumerate() {
            assert_eq!(row.epoch, e);
            assert_eq!(row.evals, 1 + 4 * e);
        }
        assert_eq!(trace.total_evals(), 21);
    }

    #[test]
    fn runs_are_deterministic_for_a_fixed_seed() {
        let a = run_acc_smbo(&wavy(), &small_cfg(7), None).unwrap();
        let b = run_acc_smbo(&wavy(), &small_cfg(7), None).unwrap();
        assert!(rows_match_except_wall(&a, &b));
        assert_eq!(a.notes(), b.notes());

        let c = run_acc_smbo(&wavy(), &small_cfg(8), None).unwrap();
        let lambdas = |t: &Trace| t.rows().iter().map(|r| r.lambda.clone()).collect::<Vec<_>>();
        assert_ne!(lambdas(&a), lambdas(&c), "different seeds should diverge");
    }

    #[test]
    fn best_loss_is_monotone_and_matches_the_best_row() {
        let trace = run_acc_smbo(&wavy(), &small_cfg(3), None).unwrap();
        let mut prev = f64::INFINITY;
        for row in trace.rows() {
            assert!(row.best_loss <= prev + 1e-15);
            assert!(row.loss >= row.best_loss);
            prev = row.best_loss;
        }
        let best = trace.best().unwrap();
        assert_eq!(best.loss, trace.final_best_loss().unwrap());
    }

    #[test]
    fn accelerated_loop_reduces_to_the_classic_one_bit_for_bit() {
        // Single kernel, no usable gradients, prior influence zero: the
        // accelerated loop must reproduce the classic loop exactly.
        let objective = ValueOnly(wavy());
        let cfg = SmboConfig {
            epochs: 6,
            pool_size: 300,
            seed: 12,
            kernels: vec![KernelKind::gaussian()],
            meta_rate: 0.0,
            ..Default::default()
        };
        let plain = run_smbo(&objective, &cfg).unwrap();
        let uniform = Epdf::uniform(Bounds::unit(1), Epdf::DEFAULT_BINS).unwrap();
        let acc_with_prior = run_acc_smbo(&objective, &cfg, Some(&uniform)).unwrap();
        let acc_without = run_acc_smbo(&objective, &cfg, None).unwrap();
        assert!(rows_match_except_wall(&plain, &acc_with_prior));
        assert!(rows_match_except_wall(&plain, &acc_without));
    }

    #[test]
    fn missing_prior_with_nonzero_rate_leaves_a_note() {
        let cfg = SmboConfig {
            epochs: 1,
            pool_size: 50,
            meta_rate: 0.5,
            ..Default::default()
        };
        let trace = run_acc_smbo(&unimodal(0.4), &cfg, None).unwrap();
        assert!(trace.notes()[0].contains("rate treated as 0"));
    }

    #[test]
    fn smbo_improves_on_the_initial_point() {
        let trace = run_acc_smbo(&wavy(), &small_cfg(5), None).unwrap();
        assert!(trace.final_best_loss().unwrap() < trace.rows()[0].loss);
    }

    #[test]
    fn tiny_pools_still_produce_valid_runs() {
        let cfg = SmboConfig {
            epochs: 3,
            challengers_per_epoch: 4,
            pool_size: 4,
            seed: 2,
            ..Default::default()
        };
        let trace = run_smbo(&unimodal(0.5), &cfg).unwrap();
        assert_eq!(trace.rows().len(), 4);
        assert!(trace.total_evals() <= 13);
    }

    #[test]
    fn proposal_tracks_a_single_peak_acquisition() {
        // Closed-form single-peak score; a dense grid supplies the argmax
        // oracle. The refined top candidate must land within the local
        // search's resolution of it.
        let peak = 0.6180339;
        let score =
            |p: &HyperparamPoint| (-(p.value() - peak) * (p.value() - peak) / 0.01).exp();
        let pool = uniform_pool(1000, 3);
        let history = History::new();
        let bounds = Bounds::unit(1);
        let cands = propose_candidates(score, &pool, &history, &bounds, 4);
        assert_eq!(cands.len(), 4);
        let grid_argmax = (0..=200_000)
            .map(|i| i as f64 / 200_000.0)
            .max_by(|&a, &b| {
                let pa = HyperparamPoint::scalar(a).unwrap();
                let pb = HyperparamPoint::scalar(b).unwrap();
                score(&pa).partial_cmp(&score(&pb)).unwrap()
            })
            .unwrap();
        assert!(
            (cands[0].value() - grid_argmax).abs() < 2e-3,
            "top candidate {} vs oracle argmax {grid_argmax}",
            cands[0].value()
        );
    }

    #[test]
    fn proposal_with_no_signal_follows_pool_order() {
        let pool = uniform_pool(50, 9);
        let history = History::new();
        let bounds = Bounds::unit(1);
        let cands = propose_candidates(|_| 0.0, &pool, &history, &bounds, 4);
        let expect: Vec<f64> = pool[..4].iter().map(|p| p.value()).collect();
        let got: Vec<f64> = cands.iter().map(|p| p.value()).collect();
        assert_eq!(got, expect);
        // Deterministic: the same inputs give the same candidates.
        let again = propose_candidates(|_| 0.0, &pool, &history, &bounds, 4);
        assert_eq!(
            cands.iter().map(|p| p.value()).collect::<Vec<_>>(),
            again.iter().map(|p| p.value()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn proposal_skips_already_evaluated_points() {
        let pool = uniform_pool(50, 9);
        let bounds = Bounds::unit(1);
        let mut history = History::new();
        history
            .push(Observation::new(pool[0].clone(), 1.0, None).unwrap())
            .unwrap();
        let cands = propose_candidates(|_| 0.0, &pool, &history, &bounds, 4);
        let expect: Vec<f64> = pool[1..5].iter().map(|p| p.value()).collect();
        assert_eq!(cands.iter().map(|p| p.value()).collect::<Vec<_>>(), expect);
    }

    #[test]
    fn intensify_selects_the_argmin_and_breaks_ties_earliest() {
        let objective = unimodal(0.3);
        let challengers: Vec<HyperparamPoint> = [0.9, 0.31, 0.5, 0.29]
            .iter()
            .map(|&x| HyperparamPoint::scalar(x).unwrap())
            .collect();
        let outcome = intensify_select(&objective, &challengers).unwrap();
        assert_eq!(outcome.evaluations.len(), 4);
        // Direct-evaluation oracle: losses (x - 0.3)^2.
        assert_eq!(outcome.winner, 1, "0.31 is nearest the center");
        // Symmetric pair ties exactly (dyadic coordinates): earliest in
        // list order wins.
        let objective = unimodal(0.25);
        let tied: Vec<HyperparamPoint> = [0.5, 0.0]
            .iter()
            .map(|&x| HyperparamPoint::scalar(x).unwrap())
            .collect();
        let outcome = intensify_select(&objective, &tied).unwrap();
        assert_eq!(outcome.evaluations[0].loss, outcome.evaluations[1].loss);
        assert_eq!(outcome.winner, 0);
        // A single challenger is returned unconditionally.
        let single = intensify_select(&objective, &tied[..1]).unwrap();
        assert_eq!(single.winner, 0);
        assert_eq!(single.evaluations.len(), 1);
    }

    #[test]
    fn grid_search_descends_from_the_upper_bound() {
        let trace = grid_search(&unimodal(0.3), 5).unwrap();
        let xs: Vec<f64> = trace.rows().iter().map(|r| r.lambda[0]).collect();
        assert_eq!(xs, vec![1.0, 0.75, 0.5, 0.25, 0.0]);
        assert_eq!(trace.total_evals(), 5);
        assert_eq!(trace.best().unwrap().lambda, vec![0.25]);
        // Two points: exactly the endpoints, descending.
        let two = grid_search(&unimodal(0.3), 2).unwrap();
        let xs: Vec<f64> = two.rows().iter().map(|r| r.lambda[0]).collect();
        assert_eq!(xs, vec![1.0, 0.0]);
    }

    #[test]
    fn random_search_starts_at_the_upper_corner_and_is_seeded() {
        let a = random_search(&unimodal(0.3), 10, 4).unwrap();
        assert_eq!(a.rows()[0].lambda, vec![1.0]);
        let b = random_search(&unimodal(0.3), 10, 4).unwrap();
        assert!(rows_match_except_wall(&a, &b));
        let c = random_search(&unimodal(0.3), 10, 5).unwrap();
        assert_ne!(
            a.rows().iter().map(|r| r.lambda[0]).collect::<Vec<_>>(),
            c.rows().iter().map(|r| r.lambda[0]).collect::<Vec<_>>()
        );
    }

    #[test]
    fn random_search_draws_cover_the_interval_uniformly() {
        let trace = random_search(&unimodal(0.3), 10_000, 123).unwrap();
        let mean: f64 = trace.rows()[1..]
            .iter()
            .map(|r| r.lambda[0])
            .sum::<f64>()
            / (trace.rows().len() - 1) as f64;
        assert!((mean - 0.5).abs() < 0.02, "empirical mean {mean}");
    }

    #[test]
    fn hypergradient_descent_converges_on_a_smooth_bowl() {
        let trace = hoag_descent(&unimodal(0.3), 30, 0.2).unwrap();
        let best = trace.best().unwrap();
        assert!((best.lambda[0] - 0.3).abs() < 0.05);
        assert!(best.loss < 1e-2);
        assert!(trace.notes().is_empty());
        // Monotone approach on a convex bowl.
        let xs: Vec<f64> = trace.rows().iter().map(|r| r.lambda[0]).collect();
        for w in xs.windows(2) {
            assert!((w[1] - 0.3).abs() <= (w[0] - 0.3).abs() + 1e-12);
        }
    }

    #[test]
    fn hypergradient_descent_without_gradients_stalls_with_notes() {
        let objective = ValueOnly(unimodal(0.3));
        let trace = hoag_descent(&objective, 5, 0.1).unwrap();
        assert_eq!(trace.notes().len(), 5);
        for row in trace.rows() {
            assert_eq!(row.lambda, vec![1.0]);
        }
    }

    #[test]
    fn zero_gradient_start_is_stationary() {
        let trace = hoag_descent(&unimodal(1.0), 4, 0.5).unwrap();
        for row in trace.rows() {
            assert_eq!(row.lambda, vec![1.0]);
            assert_eq!(row.loss, 0.0);
        }
    }

    #[test]
    fn trace_queries_report_targets_and_ties() {
        let mut trace = Trace::new();
        for (epoch, loss, best) in [(0, 5.0, 5.0), (1, 3.0, 3.0), (2, 1.0, 1.0), (3, 4.0, 1.0)] {
            trace.push_row(TraceRow {
                epoch,
                lambda: vec![epoch as f64],
                loss,
                best_loss: best,
                evals: epoch + 1,
                wall_ms: 0.0,
            });
        }
        assert_eq!(trace.epochs_to_target(3.0), Some(1));
        assert_eq!(trace.epochs_to_target(1.0), Some(2));
        assert_eq!(trace.epochs_to_target(0.5), None);
        assert_eq!(trace.epochs_to_target(10.0), Some(0));
        // Earliest tie wins.
        let mut tied = Trace::new();
        for (epoch, loss) in [(0, 2.0), (1, 1.0), (2, 1.0)] {
            tied.push_row(TraceRow {
                epoch,
                lambda: vec![epoch as f64],
                loss,
                best_loss: loss.min(2.0),
                evals: epoch + 1,
                wall_ms: 0.0,
            });
        }
        assert_eq!(tied.best().unwrap().epoch, 1);
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let obj = unimodal(0.3);
        let bad_kernel = SmboConfig {
            kernels: vec![KernelKind::CubicRbf],
            ..Default::default()
        };
        assert!(run_smbo(&obj, &bad_kernel).is_err());
        let no_challengers = SmboConfig {
            challengers_per_epoch: 0,
            ..Default::default()
        };
        assert!(run_smbo(&obj, &no_challengers).is_err());
        let small_pool = SmboConfig {
            pool_size: 2,
            challengers_per_epoch: 4,
            ..Default::default()
        };
        assert!(run_smbo(&obj, &small_pool).is_err());
        let too_many_kernels = SmboConfig {
            kernels: vec![
                KernelKind::gaussian(),
                KernelKind::CubicRbf,
                KernelKind::gaussian_with_bandwidth(0.5).unwrap(),
            ],
            ..Default::default()
        };
        assert!(run_acc_smbo(&obj, &too_many_kernels, None).is_err());
        let bad_rate = SmboConfig {
            meta_rate: 1.5,
            ..Default::default()
        };
        assert!(run_acc_smbo(&obj, &bad_rate, None).is_err());
    }

    #[test]
    fn prior_bounds_must_match_the_objective() {
        let prior = Epdf::uniform(Bounds::new(vec![(0.0, 2.0)]).unwrap(), 10).unwrap();
        let err = run_acc_smbo(&unimodal(0.3), &small_cfg(1), Some(&prior));
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }
}
