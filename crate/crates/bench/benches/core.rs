use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};

use topoflock_core::dynamics::{closed_form_propagate, to_fluctuations, SystemState};
use topoflock_core::estimator::{run_estimator, EstimatorConfig, EstimatorMode, Exponents};
use topoflock_core::graph::{star_plus_edge, Topology};
use topoflock_core::rational::best_rational;
use topoflock_core::spectral::{eigendecompose, validate_topology_set};
use topoflock_core::switching::search_params;

/// Ring of `n` agents plus a few chords; deterministic.
fn ring_with_chords(n: usize) -> Topology {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let j = (i + 1) % n;
        w[(i, j)] = 1.0;
        w[(j, i)] = 1.0;
    }
    for i in (0..n).step_by(5) {
        let j = (i + n / 2) % n;
        if i != j {
            w[(i, j)] = 0.5;
            w[(j, i)] = 0.5;
        }
    }
    Topology::from_weights(w).unwrap()
}

fn bench_eigendecompose(c: &mut Criterion) {
    let small = star_plus_edge(1.0, 4.0);
    let large = ring_with_chords(32);
    c.bench_function("eigendecompose/4", |b| {
        b.iter(|| eigendecompose(black_box(&small)).unwrap())
    });
    c.bench_function("eigendecompose/32", |b| {
        b.iter(|| eigendecompose(black_box(&large)).unwrap())
    });
}

fn bench_closed_form(c: &mut Criterion) {
    let topo = ring_with_chords(32);
    let sd = eigendecompose(&topo).unwrap();
    let x = DVector::from_fn(32, |i, _| (i as f64 * 0.7).sin());
    let v = DVector::from_fn(32, |i, _| (i as f64 * 1.3).cos());
    let s = SystemState::new(0.0, x, v, 0);
    let f = to_fluctuations(&s, &s).unwrap();
    c.bench_function("closed_form_propagate/32", |b| {
        b.iter(|| closed_form_propagate(black_box(&f), &sd, black_box(1.7)).unwrap())
    });
}

fn bench_rational_recovery(c: &mut Criterion) {
    c.bench_function("best_rational/sqrt_ratio", |b| {
        b.iter(|| best_rational(black_box(2.0 / 3.0 + 1e-15), 1000))
    });
    c.bench_function("best_rational/irrational", |b| {
        b.iter(|| best_rational(black_box(std::f64::consts::FRAC_1_SQRT_2), 1000))
    });
}

fn bench_param_search(c: &mut Criterion) {
    let ts =
        validate_topology_set(vec![star_plus_edge(1.0, 0.0), star_plus_edge(1.0, 4.0)]).unwrap();
    c.bench_function("search_params/table3", |b| {
        b.iter(|| search_params(black_box(&ts), 0.5, 1).unwrap())
    });
}

fn bench_estimator_flow(c: &mut Criterion) {
    let comm = ring_with_chords(8).support();
    let cfg = EstimatorConfig::new(
        1.0,
        1.0,
        Exponents::default(),
        comm,
        EstimatorMode::Simulated,
    )
    .unwrap();
    let r0 = DVector::from_fn(8, |i, _| i as f64 - 3.5);
    c.bench_function("run_estimator/8x1000steps", |b| {
        b.iter(|| run_estimator(black_box(&cfg), &r0, 0.1, 1e-4).unwrap())
    });
}

criterion_group!(
    benches,
    bench_eigendecompose,
    bench_closed_form,
    bench_rational_recovery,
    bench_param_search,
    bench_estimator_flow
);
criterion_main!(benches);
