//! Boundary feedback laws applied at the beam tip, and the structural
//! checks a dynamic controller must pass before it is trusted.
//!
//! Four laws are supported: no feedback, static velocity/current feedback
//! `g = (-xi1 w1, -xi2 w2)`, the first-order scalar charge filter
//! `p' = -p + xi2 w2(l2)`, `g2 = -p`, and the general linear dynamic
//! (hybrid) controller `q' = A q + b w2(l2)`, `g2 = -c^T q - d w2(l2)`.
//! The scalar filter is exactly the `n = 1` hybrid instance, and
//! [`scalar_to_hybrid`] performs that embedding.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("feedback gain `{name}` must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("`{name}` must be finite and non-negative, got {value}")]
    NegativeCoefficient { name: &'static str, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operation requires a {expected} controller, got {found}")]
    WrongKind { expected: &'static str, found: ControllerKind },
}

/// Discriminant for reporting and dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    OpenLoop,
    Static,
    Scalar,
    Hybrid,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::OpenLoop => "open-loop",
            Self::Static => "static",
            Self::Scalar => "scalar",
            Self::Hybrid => "hybrid",
        })
    }
}

/// One of the four feedback laws.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    /// Free tip: `g1 = g2 = 0`.
    OpenLoop,
    /// Static damping of tip velocity and tip current.
    Static { xi1: f64, xi2: f64 },
    /// First-order charge filter on the electrical channel; `eta` is the
    /// filter's initial charge.
    Scalar { xi1: f64, xi2: f64, eta: f64 },
    /// General linear dynamic controller on the electrical channel with
    /// static damping `xi1` on the mechanical channel; `zeta` is the
    /// controller's initial state.
    Hybrid {
        xi1: f64,
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        d: f64,
        gamma: f64,
        zeta: DVector<f64>,
    },
}

impl ControllerSpec {
    #[must_use]
    pub fn kind(&self) -> ControllerKind {
        match self {
            Self::OpenLoop => ControllerKind::OpenLoop,
            Self::Static { .. } => ControllerKind::Static,
            Self::Scalar { .. } => ControllerKind::Scalar,
            Self::Hybrid { .. } => ControllerKind::Hybrid,
        }
    }

    /// Dimension of the internal controller state `q`.
    #[must_use]
    pub fn state_dim(&self) -> usize {
        match self {
            Self::OpenLoop | Self::Static { .. } => 0,
            Self::Scalar { .. } => 1,
            Self::Hybrid { a, .. } => a.nrows(),
        }
    }

    /// Initial controller state (empty for the memoryless laws).
    #[must_use]
    pub fn initial_state(&self) -> DVector<f64> {
        match self {
            Self::OpenLoop | Self::Static { .. } => DVector::zeros(0),
            Self::Scalar { eta, .. } => DVector::from_element(1, *eta),
            Self::Hybrid { zeta, .. } => zeta.clone(),
        }
    }

    /// Checks gain positivity and dimensional consistency.
    pub fn validate(&self) -> Result<(), ControllerError> {
        let check_gain = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ControllerError::NonPositiveGain { name, value })
            }
        };
        match self {
            Self::OpenLoop => Ok(()),
            Self::Static { xi1, xi2 } => {
                check_gain("xi1", *xi1)?;
                check_gain("xi2", *xi2)
            }
            Self::Scalar { xi1, xi2, .. } => {
                check_gain("xi1", *xi1)?;
                check_gain("xi2", *xi2)
            }
            Self::Hybrid { xi1, a, b, c, d, gamma, zeta } => {
                check_gain("xi1", *xi1)?;
                for (name, value) in [("d", *d), ("Gamma", *gamma)] {
                    if !value.is_finite() || value < 0.0 {
                        return Err(ControllerError::NegativeCoefficient { name, value });
                    }
                }
                let n = a.nrows();
                if a.ncols() != n {
                    return Err(ControllerError::DimensionMismatch(format!(
                        "A must be square, got {}x{}",
                        a.nrows(),
                        a.ncols()
                    )));
                }
                for (name, len) in [("b", b.len()), ("c", c.len()), ("zeta", zeta.len())] {
                    if len != n {
                        return Err(ControllerError::DimensionMismatch(format!(
                            "{name} has length {len}, expected {n}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Tip force pair `(g1, g2)` produced by a controller for the current tip
/// velocity, tip current, and controller state.
pub fn boundary_force(
    ctrl: &ControllerSpec,
    w1_end: f64,
    w2_end: f64,
    q: &DVector<f64>,
) -> Result<(f64, f64), ControllerError> {
    if q.len() != ctrl.state_dim() {
        return Err(ControllerError::DimensionMismatch(format!(
            "controller state has length {}, expected {}",
            q.len(),
            ctrl.state_dim()
        )));
    }
    Ok(match ctrl {
        ControllerSpec::OpenLoop => (0.0, 0.0),
        ControllerSpec::Static { xi1, xi2 } => (-xi1 * w1_end, -xi2 * w2_end),
        ControllerSpec::Scalar { xi1, .. } => (-xi1 * w1_end, -q[0]),
        ControllerSpec::Hybrid { xi1, c, d, .. } => {
            (-xi1 * w1_end, -c.dot(q) - d * w2_end)
        }
    })
}

/// Time derivative of the controller state. Memoryless laws return the
/// empty vector (their state space is zero-dimensional).
pub fn controller_rhs(
    ctrl: &ControllerSpec,
    q: &DVector<f64>,
    w2_end: f64,
) -> Result<DVector<f64>, ControllerError> {
    if q.len() != ctrl.state_dim() {
        return Err(ControllerError::DimensionMismatch(format!(
            "controller state has length {}, expected {}",
            q.len(),
            ctrl.state_dim()
        )));
    }
    Ok(match ctrl {
        ControllerSpec::OpenLoop | ControllerSpec::Static { .. } => DVector::zeros(0),
        ControllerSpec::Scalar { xi2, .. } => {
            DVector::from_element(1, -q[0] + xi2 * w2_end)
        }
        ControllerSpec::Hybrid { a, b, .. } => a * q + b * w2_end,
    })
}

/// Embeds the scalar charge filter into the hybrid family:
/// `A = [-1]`, `b = [xi2]`, `c = [1]`, `d = 0`, `Gamma = 0`, `zeta = [eta]`.
pub fn scalar_to_hybrid(ctrl: &ControllerSpec) -> Result<ControllerSpec, ControllerError> {
    match ctrl {
        ControllerSpec::Scalar { xi1, xi2, eta } => Ok(ControllerSpec::Hybrid {
            xi1: *xi1,
            a: DMatrix::from_element(1, 1, -1.0),
            b: DVector::from_element(1, *xi2),
            c: DVector::from_element(1, 1.0),
            d: 0.0,
            gamma: 0.0,
            zeta: DVector::from_element(1, *eta),
        }),
        other => Err(ControllerError::WrongKind {
            expected: "scalar",
            found: other.kind(),
        }),
    }
}

/// Frequency grid used for the positive-real sweep: `s = 0` plus
/// log-spaced points, evaluated on the imaginary axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySweep {
    points: Vec<f64>,
}

impl FrequencySweep {
    /// `count` log-spaced frequencies in `[lo, hi]`, plus `s = 0`.
    #[must_use]
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Self {
        let mut points = vec![0.0];
        if count == 1 {
            points.push(lo);
        } else {
            let (llo, lhi) = (lo.ln(), hi.ln());
            points.extend((0..count).map(|i| {
                (llo + (lhi - llo) * (i as f64) / ((count - 1) as f64)).exp()
            }));
        }
        Self { points }
    }

    /// Default sweep: 400 log-spaced points spanning `[1e-4, 1e4]`.
    #[must_use]
    pub fn default_sweep() -> Self {
        Self::log_spaced(1e-4, 1e4, 400)
    }

    /// A sweep with twice the resolution that contains every point of
    /// `self` (used to check refinement monotonicity).
    #[must_use]
    pub fn refined(&self) -> Self {
        let finite: Vec<f64> = self.points.iter().copied().filter(|&s| s > 0.0).collect();
        let mut points = vec![0.0];
        for w in finite.windows(2) {
            points.push(w[0]);
            points.push((w[0].ln() + w[1].ln()).mul_add(0.5, 0.0).exp());
        }
        if let Some(&last) = finite.last() {
            points.push(last);
        }
        Self { points }
    }

    #[must_use]
    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Outcome of the three structural checks on a hybrid controller.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Largest real part among the eigenvalues of `A`.
    pub spectral_abscissa: f64,
    pub hurwitz: bool,
    /// Rank of the Kalman controllability matrix `[b, Ab, ..]`.
    pub controllability_rank: usize,
    pub controllable: bool,
    /// Rank of the observability matrix built from `c`.
    pub observability_rank: usize,
    pub observable: bool,
    /// `inf over the sweep (s = 0 and finite points)` of
    /// `d + Re c^T (i s I - A)^{-1} b - Gamma`.
    pub margin_finite: f64,
    /// Frequency attaining the finite-grid infimum.
    pub margin_argmin: f64,
    /// Asymptotic margin `d - Gamma` (the `s -> infinity` limit).
    pub margin_infinity: f64,
    /// `min(margin_finite, margin_infinity)`.
    pub positive_real_margin: f64,
    /// Set when the margin is positive at every finite frequency but decays
    /// to zero at infinity (`d = Gamma`); such controllers are accepted.
    pub nonstrict_at_infinity: bool,
    /// All three assumptions hold (positive-realness in the relaxed sense
    /// above).
    pub pass: bool,
}

/// Solves `(i s I - A) x = b` for real `A`, `b` at frequency `s`.
pub(crate) fn resolvent_b(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    s: f64,
) -> Option<DVector<Complex<f64>>> {
    let n = a.nrows();
    let mut m = DMatrix::<Complex<f64>>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
        }
        m[(i, i)] += Complex::new(0.0, s);
    }
    let rhs = DVector::from_iterator(n, b.iter().map(|&v| Complex::new(v, 0.0)));
    m.lu().solve(&rhs)
}

/// Positive-real value `d + Re c^T (i s I - A)^{-1} b - Gamma` at one
/// frequency.
fn margin_at(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    d: f64,
    gamma: f64,
    s: f64,
) -> f64 {
    let Some(sol) = resolvent_b(a, b, s) else {
        return f64::NAN;
    };
    let transfer: Complex<f64> = c
        .iter()
        .zip(sol.iter())
        .map(|(&ci, &xi)| Complex::new(ci, 0.0) * xi)
        .sum();
    d + transfer.re - gamma
}

fn rank_of(m: &DMatrix<f64>) -> usize {
    let scale = m.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs())).max(1.0);
    m.clone().svd(false, false).rank(1e-10 * scale)
}

/// Runs the Hurwitz, Kalman-rank, and positive-real checks on a hybrid
/// controller (the scalar filter is checked through its hybrid embedding).
pub fn check_hybrid_assumptions(
    ctrl: &ControllerSpec,
    sweep: &FrequencySweep,
) -> Result<AssumptionReport, ControllerError> {
    let embedded;
    let (a, b, c, d, gamma) = match ctrl {
        ControllerSpec::Hybrid { a, b, c, d, gamma, .. } => (a, b, c, *d, *gamma),
        ControllerSpec::Scalar { .. } => {
            embedded = scalar_to_hybrid(ctrl)?;
            match &embedded {
                ControllerSpec::Hybrid { a, b, c, d, gamma, .. } => (a, b, c, *d, *gamma),
                _ => unreachable!(),
            }
        }
        other => {
            return Err(ControllerError::WrongKind {
                expected: "hybrid or scalar",
                found: other.kind(),
            })
        }
    };
    let n = a.nrows();

    // Polynomial route instead of an iterative eigensolver: it terminates on
    // every input, including spectra placed symmetrically about the axis.
    let (char_poly, _) = crate::mky::char_poly_and_adjugate(a);
    let spectral_abscissa = crate::mky::poly_roots(&char_poly)
        .map(|roots| roots.iter().map(|ev| ev.re).fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(f64::NAN);
    let hurwitz = spectral_abscissa < 0.0;

    // Kalman matrices: columns b, Ab, ..., A^{n-1} b and rows c^T, c^T A, ...
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * &col;
    }
    let mut obsv = DMatrix::zeros(n, n);
    let mut row = c.clone();
    for i in 0..n {
        obsv.set_row(i, &row.transpose().row(0));
        row = a.transpose() * &row;
    }
    let controllability_rank = rank_of(&ctrb);
    let observability_rank = rank_of(&obsv);

    let mut margin_finite = f64::INFINITY;
    let mut margin_argmin = 0.0;
    for &s in sweep.points() {
        let v = margin_at(a, b, c, d, gamma, s);
        if v < margin_finite {
            margin_finite = v;
            margin_argmin = s;
        }
    }
    let margin_infinity = d - gamma;
    let positive_real_margin = margin_finite.min(margin_infinity);
    let nonstrict_at_infinity = margin_finite > 0.0 && margin_infinity.abs() < 1e-14;

    let positive_real_ok = margin_finite > 0.0 && margin_infinity >= -1e-14;
    Ok(AssumptionReport {
        spectral_abscissa,
        hurwitz,
        controllability_rank,
        controllable: controllability_rank == n,
        observability_rank,
        observable: observability_rank == n,
        margin_finite,
        margin_argmin,
        margin_infinity,
        positive_real_margin,
        nonstrict_at_infinity,
        pass: hurwitz
            && controllability_rank == n
            && observability_rank == n
            && positive_real_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn remark_scalar() -> ControllerSpec {
        ControllerSpec::Scalar { xi1: 1.0, xi2: 1.0, eta: 0.0 }
    }

    #[test]
    fn static_force_is_negative_feedback() {
        let ctrl = ControllerSpec::Static { xi1: 2.0, xi2: 0.5 };
        let q = DVector::zeros(0);
        assert_eq!(boundary_force(&ctrl, 0.3, -0.4, &q).unwrap(), (-0.6, 0.2));
    }

    #[test]
    fn hybrid_force_reads_controller_state() {
        let ctrl = ControllerSpec::Hybrid {
            xi1: 1.0,
            a: DMatrix::from_element(1, 1, -1.0),
            b: DVector::from_element(1, 1.0),
            c: DVector::from_element(1, 1.0),
            d: 0.0,
            gamma: 0.0,
            zeta: DVector::zeros(1),
        };
        let q = DVector::from_element(1, 0.2);
        let (g1, g2) = boundary_force(&ctrl, 0.0, 0.7, &q).unwrap();
        assert_eq!(g1, 0.0);
        assert_relative_eq!(g2, -0.2, max_relative = 1e-15);
    }

    #[test]
    fn scalar_embedding_matches_on_random_inputs() {
        let scalar = remark_scalar();
        let hybrid = scalar_to_hybrid(&scalar).unwrap();
        let mut lcg = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((lcg >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..1000 {
            let (w1, w2, qv) = (next(), next(), next());
            let q = DVector::from_element(1, qv);
            assert_eq!(
                boundary_force(&scalar, w1, w2, &q).unwrap(),
                boundary_force(&hybrid, w1, w2, &q).unwrap()
            );
            assert_eq!(
                controller_rhs(&scalar, &q, w2).unwrap(),
                controller_rhs(&hybrid, &q, w2).unwrap()
            );
        }
    }

    #[test]
    fn state_dimension_mismatch_is_rejected() {
        let ctrl = remark_scalar();
        let q = DVector::zeros(2);
        assert!(matches!(
            boundary_force(&ctrl, 0.0, 0.0, &q),
            Err(ControllerError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn scalar_filter_passes_assumptions_with_infinity_warning() {
        let report =
            check_hybrid_assumptions(&remark_scalar(), &FrequencySweep::default_sweep()).unwrap();
        assert!(report.pass);
        assert!(report.hurwitz && report.controllable && report.observable);
        // Margin xi2 / (1 + s^2): strictly positive at finite s, 1 at s = 0,
        // decaying to the asymptote d - Gamma = 0.
        assert_relative_eq!(
            margin_at(
                &DMatrix::from_element(1, 1, -1.0),
                &DVector::from_element(1, 1.0),
                &DVector::from_element(1, 1.0),
                0.0,
                0.0,
                0.0
            ),
            1.0,
            max_relative = 1e-14
        );
        assert!(report.margin_finite > 0.0);
        assert_eq!(report.margin_infinity, 0.0);
        assert!(report.nonstrict_at_infinity);
    }

    #[test]
    fn unstable_or_undetectable_controllers_fail() {
        let unstable = ControllerSpec::Hybrid {
            xi1: 1.0,
            a: DMatrix::from_element(1, 1, 0.5),
            b: DVector::from_element(1, 1.0),
            c: DVector::from_element(1, 1.0),
            d: 0.0,
            gamma: 0.0,
            zeta: DVector::zeros(1),
        };
        let report =
            check_hybrid_assumptions(&unstable, &FrequencySweep::default_sweep()).unwrap();
        assert!(!report.hurwitz && !report.pass);

        // b = (1, 0) with diagonal A leaves the second mode unreachable.
        let uncontrollable = ControllerSpec::Hybrid {
            xi1: 1.0,
            a: DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0])),
            b: DVector::from_vec(vec![1.0, 0.0]),
            c: DVector::from_vec(vec![1.0, 1.0]),
            d: 1.0,
            gamma: 0.0,
            zeta: DVector::zeros(2),
        };
        let report =
            check_hybrid_assumptions(&uncontrollable, &FrequencySweep::default_sweep()).unwrap();
        assert_eq!(report.controllability_rank, 1);
        assert!(!report.pass);
    }

    #[test]
    fn refining_the_sweep_never_increases_the_margin() {
        let ctrl = ControllerSpec::Hybrid {
            xi1: 1.0,
            a: DMatrix::from_vec(2, 2, vec![-1.0, 1.0, -1.0, -2.0]),
            b: DVector::from_vec(vec![1.0, 0.5]),
            c: DVector::from_vec(vec![0.5, 1.0]),
            d: 1.0,
            gamma: 0.0,
            zeta: DVector::zeros(2),
        };
        let coarse = FrequencySweep::log_spaced(1e-4, 1e4, 101);
        let fine = coarse.refined();
        // The refined grid contains every coarse point.
        for &p in coarse.points() {
            assert!(fine.points().contains(&p));
        }
        let r_coarse = check_hybrid_assumptions(&ctrl, &coarse).unwrap();
        let r_fine = check_hybrid_assumptions(&ctrl, &fine).unwrap();
        assert!(r_fine.margin_finite <= r_coarse.margin_finite + 1e-15);
    }
}
