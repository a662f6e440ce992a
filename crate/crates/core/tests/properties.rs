//! Randomised invariants: algebraic identities of the model constants,
//! state-wise energy equivalence, controller embedding consistency,
//! unconditional integrator stability, sweep-refinement monotonicity, and
//! certificate text round-trips.

use std::f64::consts::FRAC_PI_2;

use heatbeam::{
    apply_initial_conditions, assemble_semidiscrete, build_grid, check_hybrid_assumptions,
    boundary_force, compute_lyapunov_constants, controller_rhs, decay_rate, derive_matrices,
    format_certificate, max_decay_rate, parse_certificate, sandwich_check, scalar_to_hybrid,
    simulate, tune_gains, verify_envelope, ControllerSpec, FrequencySweep, InitialProfiles,
    MaterialParams, MkyCertificate, SimulationConfig, TuneBox,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = MaterialParams> {
    (
        0.2..5.0_f64,
        0.2..5.0_f64,
        0.5..8.0_f64,
        0.0..1.5_f64,
        0.2..5.0_f64,
        0.2..5.0_f64,
        0.5..2.0_f64,
        0.5..2.0_f64,
    )
        .prop_map(|(rho, mu, alpha1, gamma, beta, kappa, l1, l2)| MaterialParams {
            rho,
            mu,
            alpha1,
            gamma,
            beta,
            kappa,
            l1,
            l2,
        })
}

fn log_uniform(lo_exp: f64, hi_exp: f64) -> impl Strategy<Value = f64> {
    (lo_exp..hi_exp).prop_map(|e| 10.0_f64.powf(e))
}

fn smooth_profiles() -> InitialProfiles {
    let mut p = InitialProfiles::zero();
    p.z0 = Box::new(|s| (FRAC_PI_2 * s).sin());
    p.v1 = Box::new(|x| (FRAC_PI_2 * x).cos());
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The beam coefficient matrix always factors its determinant as
    /// `alpha1 * beta`, whatever the coupling.
    #[test]
    fn coefficient_determinant_factors(p in params_strategy()) {
        let m = derive_matrices(&p);
        let det = m.a2.determinant();
        prop_assert!((det - p.alpha1 * p.beta).abs() <= 1e-12 * (p.alpha1 * p.beta));
    }

    /// The best certified rate depends on the material and lengths only,
    /// not on the outer multiplier weight.
    #[test]
    fn best_rate_ignores_the_multiplier_weight(
        p in params_strategy(),
        b1a in log_uniform(-3.0, 3.0),
        b1b in log_uniform(-3.0, 3.0),
    ) {
        let ra = max_decay_rate(&compute_lyapunov_constants(&p, b1a).unwrap(), &p, None).unwrap();
        let rb = max_decay_rate(&compute_lyapunov_constants(&p, b1b).unwrap(), &p, None).unwrap();
        prop_assert!((ra.sigma_max - rb.sigma_max).abs() <= 1e-11 * ra.sigma_max.abs());
        let consts = compute_lyapunov_constants(&p, b1a).unwrap();
        let closed = 2.0 * p.kappa / (p.l1 * p.l1 * consts.m_tilde);
        prop_assert!((ra.sigma_max - closed).abs() <= 1e-11 * closed);
    }

    /// Any admissible weight certifies a positive rate below the ceiling,
    /// with an envelope prefactor of at least one.
    #[test]
    fn certified_rates_stay_below_the_ceiling(
        p in params_strategy(),
        b1 in log_uniform(-2.0, 2.0),
        fraction in 0.01..0.99_f64,
    ) {
        let consts = compute_lyapunov_constants(&p, b1).unwrap();
        let ceiling = max_decay_rate(&consts, &p, None).unwrap();
        let rate = decay_rate(&consts, &p, fraction / consts.m_const).unwrap();
        prop_assert!(rate.sigma > 0.0);
        prop_assert!(rate.sigma <= ceiling.sigma_max * (1.0 + 1e-12));
        prop_assert!(rate.prefactor >= 1.0);
    }

    /// The weighted functional is trapped between `(1 -+ M delta) E` at
    /// every state vector, not merely along trajectories.
    #[test]
    fn energy_equivalence_holds_state_wise(
        p in params_strategy(),
        n in 3usize..12,
        fraction in 0.05..0.95_f64,
        seed_entries in proptest::collection::vec(-1.0..1.0_f64, 120),
    ) {
        let grid = build_grid(n, p.l1, p.l2).unwrap();
        let sys = assemble_semidiscrete(
            &p,
            &grid,
            &ControllerSpec::Static { xi1: 1.0, xi2: 1.0 },
        ).unwrap();
        let consts = compute_lyapunov_constants(&p, 1.0).unwrap();
        let dim = sys.layout.dim();
        let x = DVector::from_fn(dim, |i, _| seed_entries[i % seed_entries.len()]);
        let report = sandwich_check(&sys, &x, None, &consts, fraction / consts.m_const).unwrap();
        prop_assert!(report.ok, "margins {} / {}", report.margin_lower, report.margin_upper);
    }

    /// The one-state filter behaves identically whether written in its
    /// compact form or as an explicit dynamic controller.
    #[test]
    fn scalar_embedding_preserves_behaviour(
        xi1 in 0.1..4.0_f64,
        xi2 in 0.1..4.0_f64,
        eta in -2.0..2.0_f64,
        q0 in -3.0..3.0_f64,
        w1 in -2.0..2.0_f64,
        w2 in -2.0..2.0_f64,
    ) {
        let scalar = ControllerSpec::Scalar { xi1, xi2, eta };
        let hybrid = scalar_to_hybrid(&scalar).unwrap();
        let q = DVector::from_element(1, q0);
        let fs = boundary_force(&scalar, w1, w2, &q).unwrap();
        let fh = boundary_force(&hybrid, w1, w2, &q).unwrap();
        prop_assert_eq!(fs, fh);
        let rs = controller_rhs(&scalar, &q, w2).unwrap();
        let rh = controller_rhs(&hybrid, &q, w2).unwrap();
        prop_assert_eq!(rs, rh);
    }

    /// Denser frequency sweeps can only tighten (lower) the measured
    /// positive-real margin.
    #[test]
    fn finer_sweeps_only_lower_the_margin(
        a in -5.0..-0.1_f64,
        b in 0.1..3.0_f64,
        c in 0.1..3.0_f64,
        d in 0.0..2.0_f64,
    ) {
        let ctrl = ControllerSpec::Hybrid {
            xi1: 1.0,
            a: DMatrix::from_element(1, 1, a),
            b: DVector::from_element(1, b),
            c: DVector::from_element(1, c),
            d,
            gamma: 0.0,
            zeta: DVector::zeros(1),
        };
        let base = FrequencySweep::default_sweep();
        let coarse = check_hybrid_assumptions(&ctrl, &base).unwrap();
        let fine = check_hybrid_assumptions(&ctrl, &base.refined()).unwrap();
        prop_assert!(
            fine.positive_real_margin
                <= coarse.positive_real_margin + 1e-12 * coarse.positive_real_margin.abs().max(1.0)
        );
    }

    /// Certificates survive the text exchange format bit-for-bit.
    #[test]
    fn certificates_roundtrip_through_text(
        n in 1usize..4,
        entries in proptest::collection::vec(-3.0..3.0_f64, 9),
        q1_entries in proptest::collection::vec(-3.0..3.0_f64, 3),
        delta in 0.01..10.0_f64,
        lyap_tol in log_uniform(-10.0, -6.0),
        vec_tol in log_uniform(-10.0, -6.0),
    ) {
        let raw = DMatrix::from_fn(n, n, |i, j| entries[(i * n + j) % entries.len()]);
        let p = (&raw + raw.transpose()).scale(0.5);
        let q = DMatrix::identity(n, n) + &p * &p;
        let cert = MkyCertificate {
            p,
            q1: DVector::from_fn(n, |i, _| q1_entries[i % q1_entries.len()]),
            delta,
            q,
            lyap_tol,
            vec_tol,
        };
        let parsed = parse_certificate(&format_certificate(&cert)).unwrap();
        prop_assert_eq!(parsed, cert);
    }

    /// The sweep result never reports a rate above its own ceiling.
    #[test]
    fn tuner_never_exceeds_its_ceiling(
        p in params_strategy(),
        lo1 in 0.05..2.0_f64,
        lo2 in 0.05..2.0_f64,
        span in 0.5..4.0_f64,
    ) {
        let consts = compute_lyapunov_constants(&p, 1.0).unwrap();
        let result = tune_gains(
            &p,
            &consts,
            &TuneBox { xi1: (lo1, lo1 + span), xi2: (lo2, lo2 + span), resolution: 4 },
        ).unwrap();
        prop_assert!(result.best.sigma <= result.sigma_ceiling + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The implicit one-step map never injects energy, for any step size
    /// across three decades.
    #[test]
    fn integrator_is_unconditionally_stable(dt in log_uniform(-4.0, -1.0)) {
        let params = MaterialParams::canonical();
        let grid = build_grid(8, params.l1, params.l2).unwrap();
        let sys = assemble_semidiscrete(
            &params,
            &grid,
            &ControllerSpec::Static { xi1: 1.0, xi2: 1.0 },
        ).unwrap();
        let state = apply_initial_conditions(&sys, &smooth_profiles()).unwrap();
        let cfg = SimulationConfig {
            dt: Some(dt),
            t_final: 40.0 * dt,
            record_every: 10,
            ..SimulationConfig::default()
        };
        let traj = simulate(&sys, &state, &cfg, None).unwrap();
        prop_assert!(traj.energy_monotone, "energy rose {:.3e}", traj.max_energy_increase);
        prop_assert!(traj.e_h.iter().all(|e| e.is_finite() && *e >= 0.0));
    }
}

/// The fitted decay rate settles under grid refinement: halving h twice
/// moves it by less than five percent per step.
#[test]
fn fitted_rate_is_stable_under_refinement() {
    let params = MaterialParams::canonical();
    let consts = compute_lyapunov_constants(&params, 1.0).unwrap();
    let mut rates = Vec::new();
    for n in [20, 40, 80] {
        let grid = build_grid(n, params.l1, params.l2).unwrap();
        let sys = assemble_semidiscrete(
            &params,
            &grid,
            &ControllerSpec::Static { xi1: 1.0, xi2: 1.0 },
        )
        .unwrap();
        let state = apply_initial_conditions(&sys, &smooth_profiles()).unwrap();
        let cfg = SimulationConfig {
            dt: Some(1e-3),
            t_final: 10.0,
            record_every: 10,
            ..SimulationConfig::default()
        };
        let traj = simulate(&sys, &state, &cfg, None).unwrap();
        let report = verify_envelope(&traj, &consts, &params, 1.0 / 48.0).unwrap();
        rates.push(report.sigma_measured.expect("static run fits a rate"));
    }
    for pair in rates.windows(2) {
        let change = (pair[1] - pair[0]).abs() / pair[1].abs();
        assert!(
            change < 0.05,
            "fitted rate moved {:.2}% under refinement: {rates:?}",
            100.0 * change
        );
    }
}
