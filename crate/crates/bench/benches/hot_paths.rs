//! Microbenchmarks for the optimization hot paths: multikernel surrogate
//! fitting, acquisition scoring over a candidate pool, the regularized
//! logistic inner solve, and a short end-to-end surrogate-guided run.
//!
//! Sample counts and measurement windows are kept small so the whole suite
//! finishes quickly on a single core; pass `--sample-size`/`--measurement-time`
//! on the command line to override for more precise readings.

use std::hint::black_box;
use std::time::Duration;

use accsmbo::{
    expected_improvement, fit_epdf, fit_multikernel_grad_gp, meta_ac, run_acc_smbo,
    AcquisitionContext, BilevelLogistic, Dataset, Epdf, History, HyperparamPoint,
    InnerSolverConfig, KernelKind, MetaRecord, Objective, Observation, SmboConfig, SyntheticKind,
    SyntheticObjective,
};
use accsmbo_cli::gen_classification;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_KERNELS: [KernelKind; 2] = [
    KernelKind::GaussianRbf { bandwidth: 1.0 },
    KernelKind::CubicRbf,
];

/// A gradient-annotated history of `n` well-separated points on `[0, 1]`.
fn history(n: usize, seed: u64) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = Vec::new();
    while xs.len() < n {
        let c: f64 = rng.random();
        if xs.iter().all(|&x| (x - c).abs() >= 1.0 / (2 * n) as f64) {
            xs.push(c);
        }
    }
    History::from_observations(
        xs.iter()
            .map(|&x| {
                let loss = -2.0 + 4.0 * rng.random::<f64>();
                let grad = -5.0 + 10.0 * rng.random::<f64>();
                Observation::new(HyperparamPoint::scalar(x).unwrap(), loss, Some(vec![grad]))
                    .unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// An EPDF fitted from 500 synthetic metalearning records near 0.35.
fn prior() -> Epdf {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let records: Vec<MetaRecord> = (0..500)
        .map(|_| {
            let v = (0.34 + 0.02 * rng.random::<f64>()).clamp(0.0, 1.0);
            MetaRecord::new("val-loss", "wavy", "bench", HyperparamPoint::scalar(v).unwrap())
                .unwrap()
        })
        .collect();
    fit_epdf(&records, None, 20, None).unwrap()
}

fn configure(group: &mut criterion::BenchmarkGroup<'_, criterion::measurement::WallTime>) {
    group
        .sample_size(20)
        .warm_up_time(Duration::from_millis(300))
        .measurement_time(Duration::from_secs(1));
}

fn bench_surrogate_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("surrogate_fit");
    configure(&mut group);
    for n in [8usize, 16, 32] {
        let h = history(n, n as u64);
        group.bench_function(format!("multikernel_grad_n{n}"), |b| {
            b.iter(|| fit_multikernel_grad_gp(black_box(&h), &TWO_KERNELS).unwrap())
        });
    }
    group.finish();
}

fn bench_acquisition_pool(c: &mut Criterion) {
    let mut group = c.benchmark_group("acquisition");
    configure(&mut group);

    let h = history(16, 16);
    let model = fit_multikernel_grad_gp(&h, &TWO_KERNELS).unwrap();
    let f_best = h
        .observations()
        .iter()
        .map(Observation::loss)
        .fold(f64::INFINITY, f64::min);
    let ctx = AcquisitionContext::new(f_best, 0, 1.0, 0.01).unwrap();
    let epdf = prior();
    let pool: Vec<HyperparamPoint> = (0..200)
        .map(|i| HyperparamPoint::scalar(i as f64 / 199.0).unwrap())
        .collect();

    group.bench_function("meta_ei_pool200", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for p in &pool {
                let est = model.predict(black_box(p));
                let ei = expected_improvement(&est, &ctx);
                acc += meta_ac(ei, p, &ctx, &epdf);
            }
            acc
        })
    });
    group.finish();
}

fn bench_logistic_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("logistic");
    configure(&mut group);

    let data = gen_classification(200, 10, 0.5, 0.05, 0).unwrap();
    let dataset = Dataset::new(data.rows, data.labels, data.n_features, 0.3, 0).unwrap();
    let objective = BilevelLogistic::new(dataset, InnerSolverConfig::default());
    let point = HyperparamPoint::scalar(0.5).unwrap();

    group.bench_function("evaluate_200x10", |b| {
        b.iter(|| objective.evaluate(black_box(&point)).unwrap())
    });
    group.finish();
}

fn bench_smbo_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("smbo");
    configure(&mut group);

    let objective = SyntheticObjective::new(SyntheticKind::WavyUnimodal {
        center: 0.3,
        amplitude: 0.05,
        frequency: 40.0,
    });
    let epdf = prior();
    let cfg = SmboConfig {
        epochs: 4,
        challengers_per_epoch: 4,
        pool_size: 100,
        seed: 11,
        kernels: vec![KernelKind::gaussian(), KernelKind::CubicRbf],
        meta_rate: 1.0,
        exploration_offset: None,
    };

    group.bench_function("acc_4epochs_pool100", |b| {
        b.iter(|| run_acc_smbo(black_box(&objective), &cfg, Some(&epdf)).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_surrogate_fit,
    bench_acquisition_pool,
    bench_logistic_eval,
    bench_smbo_run
);
criterion_main!(benches);
