//! Hot-path benchmarks: system assembly, time stepping, energy and
//! functional evaluation, certificate construction, and the positive-real
//! frequency sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use heatbeam::{
    apply_initial_conditions, assemble_semidiscrete, build_grid, check_hybrid_assumptions,
    compute_lyapunov_constants, discrete_energy, lyapunov_functional, solve_mky, ControllerSpec,
    FrequencySweep, InitialProfiles, MaterialParams, SemiDiscreteSystem, Stepper,
};
use nalgebra::{DMatrix, DVector};

fn canonical_system(n: usize) -> SemiDiscreteSystem {
    let params = MaterialParams::canonical();
    let grid = build_grid(n, params.l1, params.l2).expect("valid grid");
    let controller = ControllerSpec::Static { xi1: 1.0, xi2: 1.0 };
    assemble_semidiscrete(&params, &grid, &controller).expect("assembly succeeds")
}

fn excited_state(sys: &SemiDiscreteSystem) -> DVector<f64> {
    let profiles = InitialProfiles {
        z0: Box::new(|s: f64| (std::f64::consts::PI * s).sin()),
        v0x: Box::new(|x: f64| (2.0 * std::f64::consts::PI * x).cos()),
        p0x: Box::new(|_| 0.0),
        v1: Box::new(|x: f64| (std::f64::consts::PI * x).sin()),
        p1: Box::new(|_| 0.0),
    };
    apply_initial_conditions(sys, &profiles)
        .expect("compatible state")
        .x
}

fn bench_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_semidiscrete");
    for n in [40_usize, 160] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| canonical_system(black_box(n)));
        });
    }
    group.finish();
}

fn bench_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("implicit_midpoint_step");
    for n in [40_usize, 160] {
        let sys = canonical_system(n);
        let stepper = Stepper::new(&sys.pencil, 1e-3, 1e-12).expect("factorization succeeds");
        let x = excited_state(&sys);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| stepper.step(black_box(&x)).expect("step succeeds"));
        });
    }
    group.finish();
}

fn bench_energy(c: &mut Criterion) {
    let sys = canonical_system(160);
    let x = excited_state(&sys);
    c.bench_function("discrete_energy_n160", |b| {
        b.iter(|| discrete_energy(&sys, black_box(&x), None).expect("state matches layout"));
    });
}

fn bench_lyapunov(c: &mut Criterion) {
    let sys = canonical_system(160);
    let x = excited_state(&sys);
    let consts = compute_lyapunov_constants(&sys.params, 1.0).expect("positive weight");
    let delta = 1.0 / (2.0 * consts.m_const);
    c.bench_function("lyapunov_functional_n160", |b| {
        b.iter(|| {
            lyapunov_functional(&sys, black_box(&x), None, &consts, delta)
                .expect("delta admissible")
        });
    });
}

fn bench_solve_mky(c: &mut Criterion) {
    let ctrl = ControllerSpec::Hybrid {
        xi1: 1.0,
        a: DMatrix::from_vec(2, 2, vec![-1.0, 1.0, -1.0, -2.0]),
        b: DVector::from_vec(vec![1.0, 0.5]),
        c: DVector::from_vec(vec![0.5, 1.0]),
        d: 1.0,
        gamma: 0.0,
        zeta: DVector::zeros(2),
    };
    let weight = DMatrix::identity(2, 2);
    let sweep = FrequencySweep::default_sweep();
    c.bench_function("solve_mky_dim2", |b| {
        b.iter(|| solve_mky(black_box(&ctrl), &weight, &sweep).expect("solver succeeds"));
    });
}

fn bench_assumption_sweep(c: &mut Criterion) {
    let ctrl = ControllerSpec::Scalar { xi1: 1.0, xi2: 1.0, eta: 0.0 };
    let sweep = FrequencySweep::default_sweep();
    c.bench_function("assumption_sweep_scalar", |b| {
        b.iter(|| check_hybrid_assumptions(black_box(&ctrl), &sweep).expect("checks run"));
    });
}

criterion_group!(
    benches,
    bench_assembly,
    bench_step,
    bench_energy,
    bench_lyapunov,
    bench_solve_mky,
    bench_assumption_sweep
);
criterion_main!(benches);
