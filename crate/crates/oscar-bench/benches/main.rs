//! Benchmarks for the hot paths: the splitting integrator, the elliptic
//! kernels inside the slow-flow right-hand side, and the response solvers.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use oscar_core::analysis::{stationary_amplitude, sweep_resonance, SweepSettings};
use oscar_core::averaging::{
    initial_slow_state, integrate_slow_flow, spin_phase_term, stationary_response, SpinTermMode,
};
use oscar_core::dynamics::{initial_conditions, integrate, IntegratorSettings};
use oscar_core::elliptic::{averaging_integral, complete_elliptic};
use oscar_core::quasistatic::Branch;
use oscar_core::DimensionlessParams;

fn reference() -> DimensionlessParams {
    DimensionlessParams::new(8.5e-5, 2500.0, 280.0, 0.0, 100.0, 0.05)
        .unwrap()
        .with_rho(-7.9e-5)
}

fn bench_elliptic(c: &mut Criterion) {
    c.bench_function("complete_elliptic(0.7)", |b| {
        b.iter(|| complete_elliptic(black_box(0.7)).unwrap())
    });
    c.bench_function("averaging_integral(0.112)", |b| {
        b.iter(|| averaging_integral(black_box(0.112)).unwrap())
    });
    let p = reference();
    c.bench_function("spin_phase_term exact", |b| {
        b.iter(|| {
            spin_phase_term(black_box(1.0), &p, Branch::Aligned, SpinTermMode::Exact).unwrap()
        })
    });
}

fn bench_integrator(c: &mut Criterion) {
    let p = reference();
    let start = initial_conditions(&p, Branch::Aligned);
    let mut group = c.benchmark_group("integrate");
    group.sample_size(10);
    // One cantilever period at the default substep (about 50k substeps).
    group.bench_function("one_period_default_step", |b| {
        b.iter(|| {
            integrate(
                black_box(&start),
                &p,
                std::f64::consts::TAU,
                std::f64::consts::TAU / 32.0,
                &IntegratorSettings::default(),
            )
            .unwrap()
        })
    });
    group.finish();
}

fn bench_slow_flow(c: &mut Criterion) {
    let p = reference();
    c.bench_function("slow_flow_10Q", |b| {
        b.iter(|| {
            integrate_slow_flow(
                initial_slow_state(),
                &p,
                1000.0,
                0.05,
                Branch::Aligned,
                SpinTermMode::Exact,
            )
            .unwrap()
        })
    });
}

fn bench_response(c: &mut Criterion) {
    let p = reference();
    let grid: Vec<f64> = (0..21).map(|i| -1.5e-4 + 1e-5 * i as f64).collect();
    c.bench_function("stationary_response_21pts", |b| {
        b.iter(|| stationary_response(&p, black_box(&grid), Branch::Aligned, SpinTermMode::Exact))
    });
}

fn bench_extraction(c: &mut Criterion) {
    let p = reference();
    let start = initial_conditions(&p, Branch::Aligned);
    let traj = integrate(
        &start,
        &p,
        10.0 * p.quality_factor,
        std::f64::consts::TAU / 128.0,
        &IntegratorSettings::default(),
    )
    .unwrap();
    c.bench_function("stationary_amplitude_10Q", |b| {
        b.iter(|| stationary_amplitude(black_box(&traj), 8.0).unwrap())
    });
}

fn bench_sweep(c: &mut Criterion) {
    // Whole-pipeline data point: one short resonance sweep.
    let p = reference();
    let settings = SweepSettings {
        tau_end_multiplier: 3.0,
        settle_multiplier: 1.0,
        ..SweepSettings::default()
    };
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("five_points_short", |b| {
        b.iter(|| sweep_resonance(&p, -1e-4, 0.0, 5, Branch::Aligned, &settings).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_elliptic,
    bench_integrator,
    bench_slow_flow,
    bench_response,
    bench_extraction,
    bench_sweep
);
criterion_main!(benches);
