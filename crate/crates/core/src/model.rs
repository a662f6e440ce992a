//! Material data for the coupled system and the closed-form constants that
//! drive the exponential-decay certificates.
//!
//! The model couples a heat-conducting rod occupying `[0, l1]` (measured from
//! the far Dirichlet end; the interface with the beam sits at `l1`) to a
//! magnetizable piezoelectric beam on `[0, l2]` (measured from the interface).
//! Everything downstream works with the first-order beam fields
//! `u1 = v_x`, `u2 = p_x`, `w1 = v_t`, `w2 = p_t`.

use nalgebra::{Matrix2, Vector2};
use std::collections::BTreeMap;
use thiserror::Error;

/// Violations reported by [`validate_params`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("missing parameter `{0}`")]
    Missing(&'static str),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("unknown parameter `{0}`")]
    Unknown(String),
}

/// Errors from the constant/rate computations in this module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("multiplier weight b1 must be positive, got {0}")]
    NonPositiveB1(f64),
    #[error("feedback gain `{name}` must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("delta = {delta} outside the admissible range (0, {max})")]
    DeltaOutOfRange { delta: f64, max: f64 },
}

/// Physical constants of the rod/beam pair.
///
/// `alpha1` is the purely elastic stiffness; the effective stiffness seen by
/// the stretch equation is `alpha = alpha1 + gamma^2 * beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Beam mass density per unit length.
    pub rho: f64,
    /// Magnetic permeability.
    pub mu: f64,
    /// Elastic stiffness (before the electromechanical correction).
    pub alpha1: f64,
    /// Piezoelectric coupling coefficient (zero decouples charge from motion).
    pub gamma: f64,
    /// Impermittivity.
    pub beta: f64,
    /// Thermal conductivity of the rod.
    pub kappa: f64,
    /// Rod length.
    pub l1: f64,
    /// Beam length.
    pub l2: f64,
}

impl MaterialParams {
    /// Effective stiffness `alpha = alpha1 + gamma^2 beta`.
    #[must_use]
    pub fn alpha(&self) -> f64 {
        self.alpha1 + self.gamma * self.gamma * self.beta
    }

    /// Canonical benchmark parameters: everything 1 except `alpha1 = 4`,
    /// `gamma = 0`. Used throughout the test suite.
    #[must_use]
    pub fn canonical() -> Self {
        Self {
            rho: 1.0,
            mu: 1.0,
            alpha1: 4.0,
            gamma: 0.0,
            beta: 1.0,
            kappa: 1.0,
            l1: 1.0,
            l2: 1.0,
        }
    }
}

/// Coefficient matrices of the first-order beam system.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMatrices {
    /// Inertia matrix `M2 = diag(rho, mu)` acting on `(w1, w2)`.
    pub m2: Matrix2<f64>,
    /// Stiffness matrix `A2 = [[alpha, -gamma*beta], [-gamma*beta, beta]]`
    /// acting on `(u1, u2)`.
    pub a2: Matrix2<f64>,
    /// Effective stiffness `alpha1 + gamma^2 beta`.
    pub alpha: f64,
}

impl DerivedMatrices {
    /// `A2 * u` for a field pair `(u1, u2)`.
    #[must_use]
    pub fn stress(&self, u1: f64, u2: f64) -> Vector2<f64> {
        self.a2 * Vector2::new(u1, u2)
    }

    /// Largest wave speed of the beam system, `sqrt(lambda_max(M2^-1 A2))`.
    #[must_use]
    pub fn max_wave_speed(&self) -> f64 {
        // Eigenvalues of the 2x2 generalized problem A2 x = lambda M2 x.
        let a = self.a2[(0, 0)] / self.m2[(0, 0)];
        let b = self.a2[(0, 1)] / self.m2[(0, 0)];
        let c = self.a2[(1, 0)] / self.m2[(1, 1)];
        let d = self.a2[(1, 1)] / self.m2[(1, 1)];
        let tr = a + d;
        let det = a * d - b * c;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc).max(0.0).sqrt()
    }
}

/// The names accepted by [`validate_params`], in canonical order.
pub const PARAM_NAMES: [&str; 8] = ["rho", "mu", "alpha1", "gamma", "beta", "kappa", "l1", "l2"];

/// Builds typed parameters from a raw key/value map, collecting every
/// violation instead of stopping at the first.
///
/// All parameters must be strictly positive except `gamma`, which may be
/// zero (the fully decoupled beam). Unknown keys are rejected.
pub fn validate_params(raw: &BTreeMap<String, f64>) -> Result<MaterialParams, Vec<ParamError>> {
    let mut errors = Vec::new();
    for key in raw.keys() {
        if !PARAM_NAMES.contains(&key.as_str()) {
            errors.push(ParamError::Unknown(key.clone()));
        }
    }
    let mut fetch = |name: &'static str, allow_zero: bool| -> f64 {
        match raw.get(name) {
            None => {
                errors.push(ParamError::Missing(name));
                f64::NAN
            }
            Some(&v) if !v.is_finite() || (allow_zero && v < 0.0) => {
                errors.push(ParamError::Negative { name, value: v });
                f64::NAN
            }
            Some(&v) if !allow_zero && v <= 0.0 => {
                errors.push(ParamError::NonPositive { name, value: v });
                f64::NAN
            }
            Some(&v) => v,
        }
    };
    let params = MaterialParams {
        rho: fetch("rho", false),
        mu: fetch("mu", false),
        alpha1: fetch("alpha1", false),
        gamma: fetch("gamma", true),
        beta: fetch("beta", false),
        kappa: fetch("kappa", false),
        l1: fetch("l1", false),
        l2: fetch("l2", false),
    };
    if errors.is_empty() {
        Ok(params)
    } else {
        Err(errors)
    }
}

/// Assembles the inertia and stiffness matrices from validated parameters.
#[must_use]
pub fn derive_matrices(p: &MaterialParams) -> DerivedMatrices {
    let gb = p.gamma * p.beta;
    DerivedMatrices {
        m2: Matrix2::new(p.rho, 0.0, 0.0, p.mu),
        a2: Matrix2::new(p.alpha(), -gb, -gb, p.beta),
        alpha: p.alpha(),
    }
}

/// Constants of the Lyapunov sandwich `(1 - M delta) E <= L <= (1 + M delta) E`.
///
/// All five values are closed-form functions of the material constants and
/// the multiplier weight `b1`; the admissible-`delta` window and the decay
/// rate are derived from them by [`admissible_delta_static`] and
/// [`decay_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConstants {
    /// Multiplier weight attached to the beam functional F2 (and through it
    /// to F1 and F3).
    pub b1: f64,
    /// Coefficient of the mechanical multiplier F1.
    pub a1: f64,
    /// Coefficient of the rod multiplier F3 (`c1 = b1 l2`).
    pub c1: f64,
    /// Shape factor of the sandwich constant, independent of `b1`.
    pub m_tilde: f64,
    /// Sandwich constant `M = b1 l2 m_tilde`.
    pub m_const: f64,
}

/// Theoretical decay data for one choice of `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRate {
    /// Certified exponential rate `sigma = delta (1 - M delta) 8 b1 l2 kappa / l1^2`.
    pub sigma: f64,
    /// Envelope prefactor `(1 + M delta) / (1 - M delta)`.
    pub prefactor: f64,
    /// The `delta` the two values were evaluated at.
    pub delta: f64,
}

/// Result of maximising the certified rate over `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxDecayRate {
    /// Best certified rate `sigma_max = 2 b1 l2 kappa / (l1^2 M)`.
    pub sigma_max: f64,
    /// Maximising weight `delta_star = 1 / (2M)`.
    pub delta_star: f64,
    /// Whether `delta_star` lies strictly inside the gain-dependent window;
    /// only known when gains were supplied.
    pub attainable: Option<bool>,
}

fn inner_speed_term(p: &MaterialParams) -> f64 {
    let first = (p.alpha1 / p.rho).sqrt() + p.gamma * p.gamma * (p.beta * p.mu).sqrt() / p.rho;
    let second = 2.0 * (p.beta / p.mu).sqrt();
    first.max(second)
}

/// Computes the sandwich constants for a multiplier weight `b1 > 0`.
pub fn compute_lyapunov_constants(
    p: &MaterialParams,
    b1: f64,
) -> Result<LyapunovConstants, ModelError> {
    if !(b1 > 0.0) || !b1.is_finite() {
        return Err(ModelError::NonPositiveB1(b1));
    }
    let inner = inner_speed_term(p);
    let outer = 8.0 * p.l2 * p.kappa / (p.l1 * p.l1) + 2.0 * inner;
    let g2 = p.gamma * p.gamma;
    let four_way = [
        (p.rho / p.alpha1).sqrt() + (p.mu * g2 / p.alpha1).sqrt(),
        (p.mu / p.beta).sqrt() + (p.mu * g2 / p.alpha1).sqrt(),
        2.0,
        p.alpha() / p.alpha1 + g2 * p.beta / (2.0 * p.alpha1),
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    let m_tilde = outer * four_way;
    Ok(LyapunovConstants {
        b1,
        a1: b1 * outer,
        c1: b1 * p.l2,
        m_tilde,
        m_const: b1 * p.l2 * m_tilde,
    })
}

/// The three admissibility branches for static feedback, already expressed
/// as bounds on `delta`.
#[must_use]
pub fn static_delta_branches(
    c: &LyapunovConstants,
    p: &MaterialParams,
    xi1: f64,
    xi2: f64,
) -> [f64; 3] {
    let a1l2 = c.a1 * p.l2;
    let mech = 2.0 * xi1 / (a1l2 * (p.rho + 2.0 * xi1 * xi1 / p.alpha1));
    let elec_coeff = (p.alpha() + p.gamma * p.gamma * p.beta) / (p.alpha1 * p.beta);
    let elec = 2.0 * xi2 / (a1l2 * (p.mu + xi2 * xi2 * elec_coeff));
    [1.0 / c.m_const, mech, elec]
}

/// Largest `delta` admissible for the static controller `(xi1, xi2)`:
/// the minimum of the sandwich branch `1/M` and the two gain branches.
pub fn admissible_delta_static(
    c: &LyapunovConstants,
    p: &MaterialParams,
    xi1: f64,
    xi2: f64,
) -> Result<f64, ModelError> {
    for (name, value) in [("xi1", xi1), ("xi2", xi2)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ModelError::NonPositiveGain { name, value });
        }
    }
    let branches = static_delta_branches(c, p, xi1, xi2);
    Ok(branches.into_iter().fold(f64::INFINITY, f64::min))
}

/// Certified rate and envelope prefactor at a given `delta`.
///
/// Requires `0 < delta < 1/M`; the gain-dependent admissibility window is
/// checked separately by the callers that know the gains.
pub fn decay_rate(
    c: &LyapunovConstants,
    p: &MaterialParams,
    delta: f64,
) -> Result<DecayRate, ModelError> {
    let max = 1.0 / c.m_const;
    if !(delta > 0.0 && delta < max) {
        return Err(ModelError::DeltaOutOfRange { delta, max });
    }
    let damping = 8.0 * c.b1 * p.l2 * p.kappa / (p.l1 * p.l1);
    let m_delta = c.m_const * delta;
    Ok(DecayRate {
        sigma: delta * (1.0 - m_delta) * damping,
        prefactor: (1.0 + m_delta) / (1.0 - m_delta),
        delta,
    })
}

/// Maximises the certified rate over `delta`; the maximiser is
/// `delta_star = 1/(2M)` where `sigma(delta)` peaks.
///
/// When the static gains are supplied, also reports whether `delta_star`
/// falls strictly below their admissibility window, i.e. whether the best
/// rate is actually certifiable with those gains.
pub fn max_decay_rate(
    c: &LyapunovConstants,
    p: &MaterialParams,
    gains: Option<(f64, f64)>,
) -> Result<MaxDecayRate, ModelError> {
    let delta_star = 1.0 / (2.0 * c.m_const);
    let rate = decay_rate(c, p, delta_star)?;
    let attainable = match gains {
        None => None,
        Some((xi1, xi2)) => Some(delta_star < admissible_delta_static(c, p, xi1, xi2)?),
    };
    Ok(MaxDecayRate {
        sigma_max: rate.sigma,
        delta_star,
        attainable,
    })
}
