//! Spatial semidiscretization of the coupled rod-beam system as a linear
//! DAE pencil `E x' = S x`.
//!
//! The rod uses second-order central differences at its interior nodes
//! with a finite-volume half-cell balance at the junction; the junction
//! temperature and the beam velocity `w1(0)` are one unknown. The beam
//! uses a staggered cell scheme: each of the `N + 1` cells carries four
//! midpoint balance laws (averaged time derivative = spatial difference).
//! Tip tractions, the grounded electric velocity `w2(0) = 0`, and the
//! dynamic-controller coupling enter as rows of the pencil; the three
//! boundary/traction rows are algebraic (zero rows of `E`).
//!
//! The discrete energy pairs a trapezoid rule on the rod with the
//! midpoint rule on the beam. With this closure the scheme satisfies an
//! exact energy balance: along solutions,
//! `dE/dt = -kappa h1 sum_k ((z_{k+1}-z_k)/h1)^2 + g1 w1(l2) + g2 w2(l2)`,
//! which [`dissipation_rate`] evaluates in closed form for each feedback
//! law.

use crate::controller::{scalar_to_hybrid, ControllerError, ControllerKind, ControllerSpec};
use crate::grid::Grid;
use crate::mky::MkyCertificate;
use crate::model::{derive_matrices, DerivedMatrices, MaterialParams};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("state vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a certificate is required to evaluate energies of a dynamic controller")]
    MissingCertificate,
    #[error("certificate dimension {found} does not match controller dimension {expected}")]
    CertificateDimension { expected: usize, found: usize },
}

/// Index map for the flat state vector.
///
/// Ordering: rod interior temperatures `z_1 .. z_N`, then per beam node
/// `j = 0 .. N+1` the quadruple `(u1, u2, w1, w2)_j`, then the controller
/// state. The rod's far end (`z = 0`) is eliminated and its junction value
/// is identified with `w1_0`, so neither appears separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    /// Interior nodes per side.
    pub n: usize,
    /// Controller state dimension.
    pub n_ctrl: usize,
}

impl Layout {
    #[must_use]
    pub fn dim(&self) -> usize {
        self.n + 4 * (self.n + 2) + self.n_ctrl
    }

    /// Rod interior temperature `z_k`, `k = 1 ..= N`.
    #[must_use]
    pub fn iz(&self, k: usize) -> usize {
        assert!((1..=self.n).contains(&k), "rod index {k} out of 1..={}", self.n);
        k - 1
    }

    /// Beam strain `u1` at node `j = 0 ..= N+1`.
    #[must_use]
    pub fn iu1(&self, j: usize) -> usize {
        assert!(j <= self.n + 1, "beam node {j} out of 0..={}", self.n + 1);
        self.n + 4 * j
    }

    /// Beam charge gradient `u2` at node `j`.
    #[must_use]
    pub fn iu2(&self, j: usize) -> usize {
        self.iu1(j) + 1
    }

    /// Beam velocity `w1` at node `j` (node 0 doubles as the junction
    /// temperature).
    #[must_use]
    pub fn iw1(&self, j: usize) -> usize {
        self.iu1(j) + 2
    }

    /// Beam current `w2` at node `j`.
    #[must_use]
    pub fn iw2(&self, j: usize) -> usize {
        self.iu1(j) + 3
    }

    /// Controller state component `i`.
    #[must_use]
    pub fn iq(&self, i: usize) -> usize {
        assert!(i < self.n_ctrl, "controller index {i} out of 0..{}", self.n_ctrl);
        self.n + 4 * (self.n + 2) + i
    }

    /// Index of the beam tip node.
    #[must_use]
    pub fn tip(&self) -> usize {
        self.n + 1
    }

    /// Full rod temperature profile at the `N + 2` rod nodes, including
    /// the clamped far end (zero) and the junction value `w1_0`.
    #[must_use]
    pub fn rod_profile(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n + 2);
        out.push(0.0);
        for k in 1..=self.n {
            out.push(x[self.iz(k)]);
        }
        out.push(x[self.iw1(0)]);
        out
    }

    /// Controller state as an owned vector.
    #[must_use]
    pub fn q(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_ctrl, |i, _| x[self.iq(i)])
    }
}

/// Matrix pencil `E x' = S x` with the indices of the algebraic rows
/// (rows of `E` that are identically zero and encode constraints
/// `S_row . x = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPencil {
    pub e: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub algebraic_rows: Vec<usize>,
}

impl LinearPencil {
    #[must_use]
    pub fn dim(&self) -> usize {
        self.e.nrows()
    }
}

/// Assembled semidiscrete system: parameters, grid, feedback law, index
/// map, and the pencil itself.
#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    pub params: MaterialParams,
    pub matrices: DerivedMatrices,
    pub grid: Grid,
    pub controller: ControllerSpec,
    pub layout: Layout,
    pub pencil: LinearPencil,
}

impl SemiDiscreteSystem {
    /// (u1, u2, w1, w2) cell averages for the `N + 1` beam cells.
    #[must_use]
    pub fn beam_cell_averages(&self, x: &DVector<f64>) -> Vec<[f64; 4]> {
        let l = &self.layout;
        (0..=l.n)
            .map(|j| {
                [
                    0.5 * (x[l.iu1(j)] + x[l.iu1(j + 1)]),
                    0.5 * (x[l.iu2(j)] + x[l.iu2(j + 1)]),
                    0.5 * (x[l.iw1(j)] + x[l.iw1(j + 1)]),
                    0.5 * (x[l.iw2(j)] + x[l.iw2(j + 1)]),
                ]
            })
            .collect()
    }

    fn expect_dim(&self, x: &DVector<f64>) -> Result<(), SystemError> {
        if x.len() != self.layout.dim() {
            return Err(SystemError::DimensionMismatch {
                expected: self.layout.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn expect_certificate<'c>(
        &self,
        cert: Option<&'c MkyCertificate>,
    ) -> Result<Option<&'c MkyCertificate>, SystemError> {
        if self.layout.n_ctrl == 0 {
            return Ok(None);
        }
        let cert = cert.ok_or(SystemError::MissingCertificate)?;
        if cert.dim() != self.layout.n_ctrl {
            return Err(SystemError::CertificateDimension {
                expected: self.layout.n_ctrl,
                found: cert.dim(),
            });
        }
        Ok(Some(cert))
    }

    /// Controller data in hybrid form, if the law is dynamic.
    pub(crate) fn hybrid_form(&self) -> Option<ControllerSpec> {
        match self.controller.kind() {
            ControllerKind::Scalar => Some(
                scalar_to_hybrid(&self.controller).expect("scalar embeds into hybrid"),
            ),
            ControllerKind::Hybrid => Some(self.controller.clone()),
            _ => None,
        }
    }
}

/// Builds the pencil for the coupled system.
pub fn assemble_semidiscrete(
    params: &MaterialParams,
    grid: &Grid,
    controller: &ControllerSpec,
) -> Result<SemiDiscreteSystem, SystemError> {
    controller.validate()?;
    let matrices = derive_matrices(params);
    let n = grid.n;
    let n_ctrl = controller.state_dim();
    let layout = Layout { n, n_ctrl };
    let dim = layout.dim();
    let mut e = DMatrix::<f64>::zeros(dim, dim);
    let mut s = DMatrix::<f64>::zeros(dim, dim);

    let (h1, h2) = (grid.h1, grid.h2);
    let kappa = params.kappa;
    let diff = kappa / (h1 * h1);
    let a2 = matrices.a2;

    // Rod interior: z_k' = kappa (z_{k+1} - 2 z_k + z_{k-1}) / h1^2,
    // with z_0 = 0 dropped and z_{N+1} identified with w1_0.
    for k in 1..=n {
        let row = k - 1;
        e[(row, layout.iz(k))] = 1.0;
        s[(row, layout.iz(k))] = -2.0 * diff;
        if k > 1 {
            s[(row, layout.iz(k - 1))] = diff;
        }
        if k < n {
            s[(row, layout.iz(k + 1))] = diff;
        } else {
            s[(row, layout.iw1(0))] = diff;
        }
    }

    // Junction half-cell balance:
    // (h1/2) w1_0' = (alpha u1_0 - gamma beta u2_0) - kappa (w1_0 - z_N)/h1.
    let row = n;
    e[(row, layout.iw1(0))] = 0.5 * h1;
    s[(row, layout.iu1(0))] = a2[(0, 0)];
    s[(row, layout.iu2(0))] = a2[(0, 1)];
    s[(row, layout.iw1(0))] = -kappa / h1;
    s[(row, layout.iz(n))] = kappa / h1;

    // Beam cells: averaged derivative on the left, first difference on the
    // right, stress through A2 at the nodes.
    for j in 0..=n {
        let base = n + 1 + 4 * j;
        // u1' = w1_x
        e[(base, layout.iu1(j))] = 0.5;
        e[(base, layout.iu1(j + 1))] = 0.5;
        s[(base, layout.iw1(j + 1))] = 1.0 / h2;
        s[(base, layout.iw1(j))] = -1.0 / h2;
        // u2' = w2_x
        e[(base + 1, layout.iu2(j))] = 0.5;
        e[(base + 1, layout.iu2(j + 1))] = 0.5;
        s[(base + 1, layout.iw2(j + 1))] = 1.0 / h2;
        s[(base + 1, layout.iw2(j))] = -1.0 / h2;
        // rho w1' = (alpha u1 - gamma beta u2)_x
        e[(base + 2, layout.iw1(j))] = 0.5 * params.rho;
        e[(base + 2, layout.iw1(j + 1))] = 0.5 * params.rho;
        s[(base + 2, layout.iu1(j + 1))] = a2[(0, 0)] / h2;
        s[(base + 2, layout.iu1(j))] = -a2[(0, 0)] / h2;
        s[(base + 2, layout.iu2(j + 1))] = a2[(0, 1)] / h2;
        s[(base + 2, layout.iu2(j))] = -a2[(0, 1)] / h2;
        // mu w2' = (-gamma beta u1 + beta u2)_x
        e[(base + 3, layout.iw2(j))] = 0.5 * params.mu;
        e[(base + 3, layout.iw2(j + 1))] = 0.5 * params.mu;
        s[(base + 3, layout.iu1(j + 1))] = a2[(1, 0)] / h2;
        s[(base + 3, layout.iu1(j))] = -a2[(1, 0)] / h2;
        s[(base + 3, layout.iu2(j + 1))] = a2[(1, 1)] / h2;
        s[(base + 3, layout.iu2(j))] = -a2[(1, 1)] / h2;
    }

    // Algebraic rows: grounded electric velocity and the two tip
    // tractions A2 (u1, u2)(l2) = (g1, g2) with the feedback substituted.
    let tip = layout.tip();
    let ar0 = 5 * n + 5;
    s[(ar0, layout.iw2(0))] = 1.0;

    let ar1 = ar0 + 1;
    s[(ar1, layout.iu1(tip))] = a2[(0, 0)];
    s[(ar1, layout.iu2(tip))] = a2[(0, 1)];
    let ar2 = ar0 + 2;
    s[(ar2, layout.iu1(tip))] = a2[(1, 0)];
    s[(ar2, layout.iu2(tip))] = a2[(1, 1)];
    match controller {
        ControllerSpec::OpenLoop => {}
        ControllerSpec::Static { xi1, xi2 } => {
            s[(ar1, layout.iw1(tip))] = *xi1;
            s[(ar2, layout.iw2(tip))] = *xi2;
        }
        ControllerSpec::Scalar { xi1, .. } => {
            s[(ar1, layout.iw1(tip))] = *xi1;
            s[(ar2, layout.iq(0))] = 1.0;
        }
        ControllerSpec::Hybrid { xi1, c, d, .. } => {
            s[(ar1, layout.iw1(tip))] = *xi1;
            s[(ar2, layout.iw2(tip))] = *d;
            for (i, &ci) in c.iter().enumerate() {
                s[(ar2, layout.iq(i))] = ci;
            }
        }
    }

    // Controller dynamics q' = A q + b w2(l2).
    if n_ctrl > 0 {
        let hybrid = match controller {
            ControllerSpec::Scalar { .. } => scalar_to_hybrid(controller)?,
            other => other.clone(),
        };
        if let ControllerSpec::Hybrid { a, b, .. } = &hybrid {
            for i in 0..n_ctrl {
                let row = ar2 + 1 + i;
                e[(row, layout.iq(i))] = 1.0;
                for j in 0..n_ctrl {
                    s[(row, layout.iq(j))] = a[(i, j)];
                }
                s[(row, layout.iw2(tip))] = b[i];
            }
        }
    }

    Ok(SemiDiscreteSystem {
        params: *params,
        matrices,
        grid: grid.clone(),
        controller: controller.clone(),
        layout,
        pencil: LinearPencil { e, s, algebraic_rows: vec![ar0, ar1, ar2] },
    })
}

/// Physical discrete energy: trapezoid rule on the rod plus midpoint rule
/// on the beam (no controller storage term).
pub fn physical_energy(sys: &SemiDiscreteSystem, x: &DVector<f64>) -> Result<f64, SystemError> {
    sys.expect_dim(x)?;
    let l = &sys.layout;
    let mut rod = 0.5 * x[l.iw1(0)] * x[l.iw1(0)];
    for k in 1..=l.n {
        rod += x[l.iz(k)] * x[l.iz(k)];
    }
    rod *= 0.5 * sys.grid.h1;

    let a2 = sys.matrices.a2;
    let m2 = sys.matrices.m2;
    let mut beam = 0.0;
    for cell in sys.beam_cell_averages(x) {
        let [u1, u2, w1, w2] = cell;
        let su = a2[(0, 0)] * u1 * u1 + 2.0 * a2[(0, 1)] * u1 * u2 + a2[(1, 1)] * u2 * u2;
        let sw = m2[(0, 0)] * w1 * w1 + m2[(1, 1)] * w2 * w2;
        beam += su + sw;
    }
    beam *= 0.5 * sys.grid.h2;
    Ok(rod + beam)
}

/// Discrete energy including the controller storage `q^T P q / 2` when the
/// feedback law is dynamic (a certificate supplies `P`).
pub fn discrete_energy(
    sys: &SemiDiscreteSystem,
    x: &DVector<f64>,
    cert: Option<&MkyCertificate>,
) -> Result<f64, SystemError> {
    let physical = physical_energy(sys, x)?;
    match sys.expect_certificate(cert)? {
        None => Ok(physical),
        Some(cert) => {
            let q = sys.layout.q(x);
            Ok(physical + 0.5 * (&cert.p * &q).dot(&q))
        }
    }
}

/// Closed-form dissipation rate `D(x) >= 0` such that the tracked energy
/// satisfies `dE/dt = -D(x)` exactly along semidiscrete solutions.
///
/// For the memoryless laws the tracked energy is the physical one; for
/// dynamic laws it is [`discrete_energy`] with the certificate term, and
/// the rate uses the certificate identities.
pub fn dissipation_rate(
    sys: &SemiDiscreteSystem,
    x: &DVector<f64>,
    cert: Option<&MkyCertificate>,
) -> Result<f64, SystemError> {
    sys.expect_dim(x)?;
    let l = &sys.layout;
    let h1 = sys.grid.h1;
    let rod = l.rod_profile(x);
    let mut rate = 0.0;
    for pair in rod.windows(2) {
        let d = (pair[1] - pair[0]) / h1;
        rate += d * d;
    }
    rate *= sys.params.kappa * h1;

    let w1_end = x[l.iw1(l.tip())];
    let w2_end = x[l.iw2(l.tip())];
    match &sys.controller {
        ControllerSpec::OpenLoop => Ok(rate),
        ControllerSpec::Static { xi1, xi2 } => {
            Ok(rate + xi1 * w1_end * w1_end + xi2 * w2_end * w2_end)
        }
        ControllerSpec::Scalar { xi1, .. } | ControllerSpec::Hybrid { xi1, .. } => {
            let cert = sys
                .expect_certificate(cert)?
                .expect("dynamic law has positive controller dimension");
            let hybrid = sys.hybrid_form().expect("dynamic law has hybrid form");
            let (d, gamma) = match &hybrid {
                ControllerSpec::Hybrid { d, gamma, .. } => (*d, *gamma),
                _ => unreachable!(),
            };
            let q = l.q(x);
            let w = (2.0 * (d - gamma)).max(0.0).sqrt();
            let mixed = q.dot(&cert.q1) - w * w2_end;
            let quad = (&cert.q * &q).dot(&q);
            Ok(rate
                + xi1 * w1_end * w1_end
                + gamma * w2_end * w2_end
                + 0.5 * mixed * mixed
                + 0.5 * cert.delta * quad)
        }
    }
}

/// Largest violation among the three algebraic constraint rows.
pub fn constraint_residual(sys: &SemiDiscreteSystem, x: &DVector<f64>) -> Result<f64, SystemError> {
    sys.expect_dim(x)?;
    let mut worst = 0.0_f64;
    for &row in &sys.pencil.algebraic_rows {
        let mut v = 0.0;
        for col in 0..sys.pencil.dim() {
            v += sys.pencil.s[(row, col)] * x[col];
        }
        worst = worst.max(v.abs());
    }
    Ok(worst)
}

/// Initial profiles for the five physical fields, as functions of the
/// position along the respective span.
pub struct InitialProfiles {
    /// Rod temperature on `[0, l1]`.
    pub z0: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Beam strain `u1(x, 0) = v_x` on `[0, l2]`.
    pub v0x: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Charge gradient `u2(x, 0) = p_x`.
    pub p0x: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Velocity `w1(x, 0) = v_t`.
    pub v1: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Current `w2(x, 0) = p_t`.
    pub p1: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl InitialProfiles {
    /// All fields identically zero.
    #[must_use]
    pub fn zero() -> Self {
        Self {
            z0: Box::new(|_| 0.0),
            v0x: Box::new(|_| 0.0),
            p0x: Box::new(|_| 0.0),
            v1: Box::new(|_| 0.0),
            p1: Box::new(|_| 0.0),
        }
    }
}

/// State vector plus simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub t: f64,
    pub x: DVector<f64>,
}

/// Samples the profiles at the grid nodes and projects the result onto
/// the constraint set: the junction takes the beam velocity `v1(0)`, the
/// electric velocity is grounded (`w2_0 = 0`), the controller starts at
/// its declared initial state, and the tip strains are back-solved from
/// the tractions so all algebraic rows hold exactly at `t = 0`.
pub fn apply_initial_conditions(
    sys: &SemiDiscreteSystem,
    profiles: &InitialProfiles,
) -> Result<DiscreteState, SystemError> {
    let l = &sys.layout;
    let mut x = DVector::zeros(l.dim());
    let rod_nodes = sys.grid.rod_nodes();
    for k in 1..=l.n {
        x[l.iz(k)] = (profiles.z0)(rod_nodes[k]);
    }
    let beam_nodes = sys.grid.beam_nodes();
    for (j, &xj) in beam_nodes.iter().enumerate() {
        x[l.iu1(j)] = (profiles.v0x)(xj);
        x[l.iu2(j)] = (profiles.p0x)(xj);
        x[l.iw1(j)] = (profiles.v1)(xj);
        x[l.iw2(j)] = (profiles.p1)(xj);
    }
    // Projection onto the constraint set.
    x[l.iw2(0)] = 0.0;
    let q0 = sys.controller.initial_state();
    for i in 0..l.n_ctrl {
        x[l.iq(i)] = q0[i];
    }
    let tip = l.tip();
    let (g1, g2) = crate::controller::boundary_force(
        &sys.controller,
        x[l.iw1(tip)],
        x[l.iw2(tip)],
        &q0,
    )?;
    let rhs = nalgebra::Vector2::new(g1, g2);
    let u_tip = sys
        .matrices
        .a2
        .lu()
        .solve(&rhs)
        .expect("A2 is positive definite");
    x[l.iu1(tip)] = u_tip[0];
    x[l.iu2(tip)] = u_tip[1];
    Ok(DiscreteState { t: 0.0, x })
}

/// Stiffness matrix of the stand-alone rod with both ends clamped:
/// `(kappa / h^2) tridiag(1, -2, 1)` on the `n` interior nodes.
#[must_use]
pub fn rod_dirichlet_matrix(n: usize, l1: f64, kappa: f64) -> DMatrix<f64> {
    let h = l1 / ((n + 1) as f64);
    let diff = kappa / (h * h);
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = -2.0 * diff;
        if k > 0 {
            m[(k, k - 1)] = diff;
        }
        if k + 1 < n {
            m[(k, k + 1)] = diff;
        }
    }
    m
}

/// The clamped rod as a pencil (`E = I`, no algebraic rows); a known
/// closed-form spectrum makes it the reference problem for the time
/// integrator.
#[must_use]
pub fn rod_dirichlet_pencil(n: usize, l1: f64, kappa: f64) -> LinearPencil {
    LinearPencil {
        e: DMatrix::identity(n, n),
        s: rod_dirichlet_matrix(n, l1, kappa),
        algebraic_rows: Vec::new(),
    }
}

/// Exact eigenvalues of [`rod_dirichlet_matrix`], ascending in magnitude:
/// `-(2 kappa / h^2) (1 - cos(j pi / (n + 1)))`, `j = 1 ..= n`.
#[must_use]
pub fn rod_dirichlet_eigenvalues(n: usize, l1: f64, kappa: f64) -> Vec<f64> {
    let h = l1 / ((n + 1) as f64);
    (1..=n)
        .map(|j| {
            -(2.0 * kappa / (h * h))
                * (1.0 - (std::f64::consts::PI * (j as f64) / ((n + 1) as f64)).cos())
        })
        .collect()
}
