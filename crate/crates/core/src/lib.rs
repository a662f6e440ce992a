//! Simulator and verification toolkit for a heat-conducting rod coupled to
//! a magnetizable piezoelectric beam.
//!
//! The rod occupies `[0, l1]` (clamped to zero temperature at the far end)
//! and drives the beam on `[0, l2]` through a common junction; feedback is
//! applied at the beam tip, either statically or through a dynamic
//! (hybrid) controller. The crate provides
//!
//! - typed material parameters and the closed-form decay-rate theory
//!   ([`model`]),
//! - one-dimensional staggered grids ([`grid`]),
//! - the four feedback laws and their structural checks ([`controller`]),
//! - quadratic controller certificates ([`mky`]),
//! - the spatial discretisation as a linear DAE pencil ([`system`]),
//! - an energy-exact implicit-midpoint integrator ([`stepper`]),
//! - Lyapunov functionals, decay-rate fitting, and gain tuning
//!   ([`analysis`]).

// Validation uses `!(x > 0.0)` so that NaN is rejected; `x <= 0.0` admits it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod grid;
pub mod mky;
pub mod model;
pub mod stepper;
pub mod system;

pub use analysis::{
    admissible_delta_hybrid, fit_decay_rate, hybrid_energy, lyapunov_functional, sandwich_check,
    sandwich_sample, tune_gains, verify_envelope, AnalysisError, DecayFit, DecayReport,
    HybridDeltaBound, LyapunovBreakdown, SandwichReport, SandwichSample, TuneBox, TuneEntry,
    TuneResult, ENVELOPE_SLACK,
};
pub use controller::{
    boundary_force, check_hybrid_assumptions, controller_rhs, scalar_to_hybrid, AssumptionReport,
    ControllerError, ControllerKind, ControllerSpec, FrequencySweep,
};
pub use grid::{build_grid, midpoint_average, midpoint_difference, Grid, GridError, OperatorError};
pub use mky::{
    format_certificate, parse_certificate, solve_mky, verify_mky, MkyCertificate, MkyError,
    MkyVerification, DEFAULT_CERT_TOL,
};
pub use model::{
    admissible_delta_static, compute_lyapunov_constants, decay_rate, derive_matrices,
    max_decay_rate, static_delta_branches, validate_params, DecayRate, DerivedMatrices,
    LyapunovConstants, MaterialParams, MaxDecayRate, ModelError, ParamError, PARAM_NAMES,
};
pub use stepper::{
    default_dt, dissipation_residual, simulate, SimulationConfig, SimulationError, StepError,
    Stepper, Trajectory,
};
pub use system::{
    apply_initial_conditions, assemble_semidiscrete, constraint_residual, discrete_energy,
    dissipation_rate, physical_energy, rod_dirichlet_eigenvalues, rod_dirichlet_matrix,
    rod_dirichlet_pencil, DiscreteState, InitialProfiles, Layout, LinearPencil,
    SemiDiscreteSystem, SystemError,
};
