//! Lur'e-type quadratic certificates for dynamic boundary controllers.
//!
//! A controller `(A, b, c, d, Gamma)` admits the damped-energy argument
//! when there exist `P = P^T > 0`, a vector `q1`, and `Delta > 0` with
//! `Q = Q^T > 0` such that
//!
//! ```text
//! A^T P + P A = -q1 q1^T - Delta Q
//! P b - c     = sqrt(2 (d - Gamma)) q1
//! ```
//!
//! [`solve_mky`] produces such a certificate: closed forms for `n = 1`,
//! spectral factorisation of the Popov function plus a Lyapunov solve for
//! `n >= 2` (best effort; every returned certificate has already passed
//! [`verify_mky`]). Certificates round-trip through a plain-text format so
//! they can be stored next to simulation output.

use crate::controller::{
    check_hybrid_assumptions, resolvent_b, scalar_to_hybrid, AssumptionReport, ControllerError,
    ControllerSpec, FrequencySweep,
};
use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// Default relative tolerance for both certificate residuals.
pub const DEFAULT_CERT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MkyError {
    #[error("controller fails the structural assumptions: {0}")]
    AssumptionsFailed(Box<AssumptionReport>),
    #[error("certificate construction failed: {0}")]
    FactorizationFailed(String),
    #[error("weight matrix Q is not symmetric positive definite")]
    IndefiniteWeight,
    #[error("certificate parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "hurwitz={} (abscissa {:.3e}), controllable={} (rank {}), observable={} (rank {}), margin={:.3e}",
            self.hurwitz,
            self.spectral_abscissa,
            self.controllable,
            self.controllability_rank,
            self.observable,
            self.observability_rank,
            self.positive_real_margin
        )
    }
}

/// A verified-or-verifiable quadratic certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct MkyCertificate {
    pub p: DMatrix<f64>,
    pub q1: DVector<f64>,
    pub delta: f64,
    pub q: DMatrix<f64>,
    /// Relative tolerance on the Lyapunov identity residual.
    pub lyap_tol: f64,
    /// Relative tolerance on the vector identity residual.
    pub vec_tol: f64,
}

impl MkyCertificate {
    #[must_use]
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
}

/// Residuals and definiteness margins of a certificate against a
/// controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MkyVerification {
    /// Frobenius norm of `A^T P + P A + q1 q1^T + Delta Q`.
    pub lyap_residual: f64,
    /// Euclidean norm of `P b - c - sqrt(2(d - Gamma)) q1`.
    pub vec_residual: f64,
    pub p_min_eig: f64,
    pub q_min_eig: f64,
    pub delta: f64,
    pub pass: bool,
}

fn smallest_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// Controller data `(a, b, c, d, gamma)` in hybrid form.
type HybridData = (DMatrix<f64>, DVector<f64>, DVector<f64>, f64, f64);

fn hybrid_data(ctrl: &ControllerSpec) -> Result<HybridData, MkyError> {
    let owned;
    let spec = match ctrl {
        ControllerSpec::Scalar { .. } => {
            owned = scalar_to_hybrid(ctrl)?;
            &owned
        }
        other => other,
    };
    match spec {
        ControllerSpec::Hybrid { a, b, c, d, gamma, .. } => {
            Ok((a.clone(), b.clone(), c.clone(), *d, *gamma))
        }
        other => Err(ControllerError::WrongKind {
            expected: "hybrid or scalar",
            found: other.kind(),
        }
        .into()),
    }
}

/// Checks both certificate identities and the definiteness of `P` and `Q`.
pub fn verify_mky(ctrl: &ControllerSpec, cert: &MkyCertificate) -> Result<MkyVerification, MkyError> {
    let (a, b, c, d, gamma) = hybrid_data(ctrl)?;
    let n = a.nrows();
    if cert.dim() != n || cert.q1.len() != n || cert.q.nrows() != n || cert.q.ncols() != n {
        return Err(ControllerError::DimensionMismatch(format!(
            "certificate dimension {} does not match controller dimension {n}",
            cert.dim()
        ))
        .into());
    }
    let w = (2.0 * (d - gamma)).max(0.0).sqrt();
    let lyap = a.transpose() * &cert.p
        + &cert.p * &a
        + &cert.q1 * cert.q1.transpose()
        + &cert.q * cert.delta;
    let vec = &cert.p * &b - &c - &cert.q1 * w;
    let lyap_residual = lyap.norm();
    let vec_residual = vec.norm();
    let p_min_eig = smallest_symmetric_eigenvalue(&cert.p);
    let q_min_eig = smallest_symmetric_eigenvalue(&cert.q);
    let pass = d - gamma >= -1e-14
        && lyap_residual <= cert.lyap_tol * cert.p.norm().max(1.0)
        && vec_residual <= cert.vec_tol * c.norm().max(1.0)
        && p_min_eig > 0.0
        && q_min_eig > 0.0
        && cert.delta > 0.0;
    Ok(MkyVerification {
        lyap_residual,
        vec_residual,
        p_min_eig,
        q_min_eig,
        delta: cert.delta,
        pass,
    })
}

/// Solves the Lyapunov equation `A^T P + P A = -W` for Hurwitz `A` by the
/// Kronecker-product linear system (controller dimensions are tiny).
fn lyapunov_solve(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, (-w).iter().copied());
    let sol = k.lu().solve(&rhs)?;
    let p = DMatrix::from_iterator(n, n, sol.iter().copied());
    Some((&p + p.transpose()) * 0.5)
}

// --- dense polynomial helpers (coefficients in ascending powers) ---

fn poly_trim(mut p: Vec<f64>) -> Vec<f64> {
    let scale = p.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    while p.len() > 1 && p.last().is_some_and(|&v| v.abs() <= 1e-11 * scale) {
        p.pop();
    }
    p
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Coefficients of `p(-s)`.
fn poly_flip(p: &[f64]) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(k, &v)| if k % 2 == 0 { v } else { -v })
        .collect()
}

fn poly_axpy(acc: &mut Vec<f64>, scale: f64, p: &[f64]) {
    if acc.len() < p.len() {
        acc.resize(p.len(), 0.0);
    }
    for (a, &v) in acc.iter_mut().zip(p.iter()) {
        *a += scale * v;
    }
}

/// All complex roots of a real polynomial via the Durand-Kerner iteration.
///
/// The polynomials factored here often have roots placed symmetrically about
/// the imaginary axis, a configuration that can stall shift-based QR
/// eigensolvers; the simultaneous fixed-point iteration with slightly
/// asymmetric starting angles is immune to that and stays deterministic.
/// Returns `None` when the residuals fail to settle.
pub(crate) fn poly_roots(p: &[f64]) -> Option<Vec<Complex<f64>>> {
    let p = poly_trim(p.to_vec());
    let deg = p.len() - 1;
    if deg == 0 {
        return Some(Vec::new());
    }
    let lc = p[deg];
    let monic: Vec<f64> = p.iter().map(|&v| v / lc).collect();
    let eval = |z: Complex<f64>| {
        let mut acc = Complex::new(0.0, 0.0);
        for &c in monic.iter().rev() {
            acc = acc * z + c;
        }
        acc
    };
    // Cauchy bound: every root lies inside |z| <= 1 + max |c_k|.
    let radius = 1.0 + monic[..deg].iter().fold(0.0_f64, |a, &c| a.max(c.abs()));
    let mut roots: Vec<Complex<f64>> = (0..deg)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.437;
            Complex::from_polar(0.8 * radius + 0.05 * k as f64 / deg as f64, angle)
        })
        .collect();
    for _ in 0..400 {
        let mut moved = 0.0_f64;
        for i in 0..deg {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                return None;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            moved = moved.max(delta.norm());
        }
        if moved <= 1e-14 * radius {
            break;
        }
    }
    // Multiple roots stop contracting at the conditioning limit, so accept on
    // residual size rather than on the step length alone.
    for &z in &roots {
        let scale = monic
            .iter()
            .enumerate()
            .fold(0.0_f64, |a, (k, &c)| a + c.abs() * z.norm().powi(k as i32));
        if !(eval(z).norm() <= 1e-7 * scale.max(1.0)) {
            return None;
        }
    }
    Some(roots)
}

/// Real-coefficient polynomial with the given roots (conjugates paired into
/// quadratic factors), monic.
fn poly_from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let tol = 1e-9
        * roots
            .iter()
            .fold(1.0_f64, |acc, r| acc.max(r.norm()));
    let mut real_roots = Vec::new();
    let mut upper: Vec<Complex<f64>> = Vec::new();
    let mut lower: Vec<Complex<f64>> = Vec::new();
    for &r in roots {
        if r.im.abs() <= tol {
            real_roots.push(r.re);
        } else if r.im > 0.0 {
            upper.push(r);
        } else {
            lower.push(r);
        }
    }
    let mut poly = vec![1.0];
    for re in real_roots {
        poly = poly_mul(&poly, &[-re, 1.0]);
    }
    // Pair each upper-half root with its nearest conjugate partner.
    for u in upper {
        let conj = Complex::new(u.re, -u.im);
        let (idx, _) = lower
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| {
                (*x - conj).norm().partial_cmp(&(*y - conj).norm()).unwrap()
            })
            .expect("conjugate roots come in pairs");
        let l = lower.swap_remove(idx);
        let sum = u.re + l.re;
        let prod = (u * l).re;
        poly = poly_mul(&poly, &[prod, -sum, 1.0]);
    }
    // Leftover unpaired complex roots only arise from numerical asymmetry;
    // fold them in as real quadratics about their modulus.
    for l in lower {
        poly = poly_mul(&poly, &[l.norm_sqr(), -2.0 * l.re, 1.0]);
    }
    poly
}

/// Characteristic polynomial of `A` (monic, ascending) and the adjugate
/// expansion `adj(sI - A) = sum_k B_k s^k`, via Faddeev-LeVerrier.
pub(crate) fn char_poly_and_adjugate(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut bs = vec![DMatrix::<f64>::zeros(n, n); n];
    let mut m = eye.clone();
    for k in 1..=n {
        // adj(sI - A) coefficient of s^{n-k} is the current M_k.
        bs[n - k] = m.clone();
        let am = a * &m;
        let c = -am.trace() / (k as f64);
        coeffs[n - k] = c;
        m = am + &eye * c;
    }
    (coeffs, bs)
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders a certificate in the plain-text exchange format.
#[must_use]
pub fn format_certificate(cert: &MkyCertificate) -> String {
    let n = cert.dim();
    let mut out = format!(
        "mky-certificate n={} lyap-tol={} vec-tol={}\n",
        n,
        fmt_float(cert.lyap_tol),
        fmt_float(cert.vec_tol)
    );
    let push_matrix = |out: &mut String, label: &str, m: &DMatrix<f64>| {
        out.push_str(label);
        out.push('\n');
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| fmt_float(m[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    };
    push_matrix(&mut out, "P", &cert.p);
    out.push_str("q1\n");
    let row: Vec<String> = cert.q1.iter().map(|&v| fmt_float(v)).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
    out.push_str("delta\n");
    out.push_str(&fmt_float(cert.delta));
    out.push('\n');
    push_matrix(&mut out, "Q", &cert.q);
    out
}

/// Parses the plain-text certificate format produced by
/// [`format_certificate`].
pub fn parse_certificate(text: &str) -> Result<MkyCertificate, MkyError> {
    let mut lines = text.lines().enumerate();
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| MkyError::Parse { line: 0, message: "empty input".into() })?;
    let mut n = None;
    let mut lyap_tol = DEFAULT_CERT_TOL;
    let mut vec_tol = DEFAULT_CERT_TOL;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("mky-certificate") {
        return Err(MkyError::Parse {
            line: line_no + 1,
            message: "expected header starting with `mky-certificate`".into(),
        });
    }
    for field in fields {
        let (key, value) = field.split_once('=').ok_or_else(|| MkyError::Parse {
            line: line_no + 1,
            message: format!("malformed header field `{field}`"),
        })?;
        match key {
            "n" => {
                n = Some(value.parse::<usize>().map_err(|e| MkyError::Parse {
                    line: line_no + 1,
                    message: format!("bad dimension: {e}"),
                })?)
            }
            "lyap-tol" => {
                lyap_tol = value.parse().map_err(|e| MkyError::Parse {
                    line: line_no + 1,
                    message: format!("bad lyap-tol: {e}"),
                })?
            }
            "vec-tol" => {
                vec_tol = value.parse().map_err(|e| MkyError::Parse {
                    line: line_no + 1,
                    message: format!("bad vec-tol: {e}"),
                })?
            }
            other => {
                return Err(MkyError::Parse {
                    line: line_no + 1,
                    message: format!("unknown header field `{other}`"),
                })
            }
        }
    }
    let n = n.ok_or(MkyError::Parse { line: line_no + 1, message: "header lacks n=".into() })?;
    if n == 0 {
        return Err(MkyError::Parse { line: line_no + 1, message: "n must be positive".into() });
    }

    let mut remaining: Vec<(usize, &str)> = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    remaining.reverse(); // pop from the front cheaply

    fn expect_label(remaining: &mut Vec<(usize, &str)>, label: &str) -> Result<(), MkyError> {
        match remaining.pop() {
            Some((_, text)) if text.trim() == label => Ok(()),
            Some((ln, text)) => Err(MkyError::Parse {
                line: ln + 1,
                message: format!("expected block label `{label}`, got `{}`", text.trim()),
            }),
            None => Err(MkyError::Parse {
                line: 0,
                message: format!("missing block `{label}`"),
            }),
        }
    }
    fn read_row(
        remaining: &mut Vec<(usize, &str)>,
        expected: usize,
    ) -> Result<Vec<f64>, MkyError> {
        let (ln, text) = remaining.pop().ok_or(MkyError::Parse {
            line: 0,
            message: "unexpected end of certificate".into(),
        })?;
        let values: Result<Vec<f64>, _> = text
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect();
        let values = values.map_err(|e| MkyError::Parse {
            line: ln + 1,
            message: format!("bad number: {e}"),
        })?;
        if values.len() != expected {
            return Err(MkyError::Parse {
                line: ln + 1,
                message: format!("expected {expected} values, got {}", values.len()),
            });
        }
        Ok(values)
    }

    expect_label(&mut remaining, "P")?;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = read_row(&mut remaining, n)?;
        for (j, v) in row.into_iter().enumerate() {
            p[(i, j)] = v;
        }
    }
    expect_label(&mut remaining, "q1")?;
    let q1 = DVector::from_vec(read_row(&mut remaining, n)?);
    expect_label(&mut remaining, "delta")?;
    let delta = read_row(&mut remaining, 1)?[0];
    expect_label(&mut remaining, "Q")?;
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = read_row(&mut remaining, n)?;
        for (j, v) in row.into_iter().enumerate() {
            q[(i, j)] = v;
        }
    }
    if let Some((ln, _)) = remaining.pop() {
        return Err(MkyError::Parse { line: ln + 1, message: "trailing content".into() });
    }
    Ok(MkyCertificate { p, q1, delta, q, lyap_tol, vec_tol })
}

/// Scalar (`n = 1`) certificate in closed form.
///
/// For `d = Gamma` the vector identity pins `P = c/b`; the remaining
/// freedom is split evenly, `q1^2 = Delta Q = -a P`. For `d > Gamma` the
/// family is parametrised by `P` and the member with maximal `Delta` is
/// returned (vertex of the concave quadratic `Delta(P)`).
fn solve_scalar(a: f64, b: f64, c: f64, d: f64, gamma: f64, q_w: f64) -> Result<(DMatrix<f64>, DVector<f64>, f64), MkyError> {
    let slack = d - gamma;
    let (p, q1, delta) = if slack <= 0.0 {
        let p = c / b;
        if !(p > 0.0) {
            return Err(MkyError::FactorizationFailed(format!(
                "closed-form P = c/b = {p} is not positive"
            )));
        }
        let q1 = (-a * p).sqrt();
        (p, q1, -a * p / q_w)
    } else {
        let p = c / b - 2.0 * a * slack / (b * b);
        let w = (2.0 * slack).sqrt();
        let q1 = (p * b - c) / w;
        let delta = (-2.0 * a * p - q1 * q1) / q_w;
        if !(p > 0.0 && delta > 0.0) {
            return Err(MkyError::FactorizationFailed(format!(
                "closed-form maximiser invalid: P = {p}, Delta = {delta}"
            )));
        }
        (p, q1, delta)
    };
    Ok((
        DMatrix::from_element(1, 1, p),
        DVector::from_element(1, q1),
        delta,
    ))
}

/// General construction: pick `Delta` with margin against the Popov
/// infimum, spectrally factor the shifted Popov function, match `q1`, and
/// recover `P` from the Lyapunov equation.
fn solve_spectral(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    d: f64,
    gamma: f64,
    q_weight: &DMatrix<f64>,
    sweep: &FrequencySweep,
) -> Result<(DMatrix<f64>, DVector<f64>, f64), MkyError> {
    let n = a.nrows();
    let slack = d - gamma;
    let w = (2.0 * slack).max(0.0).sqrt();

    // Delta cap: inf over the sweep of 2 m(omega) / (g* Q g).
    let mut delta_cap = f64::INFINITY;
    for &s in sweep.points() {
        let g = resolvent_b(a, b, s).ok_or_else(|| {
            MkyError::FactorizationFailed(format!("resolvent solve failed at s = {s}"))
        })?;
        let transfer: Complex<f64> = c
            .iter()
            .zip(g.iter())
            .map(|(&ci, &gi)| gi * ci)
            .sum();
        let margin2 = 2.0 * (slack + transfer.re);
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += (g[i].conj() * g[j]).re * q_weight[(i, j)];
            }
        }
        if quad > 1e-300 {
            delta_cap = delta_cap.min(margin2 / quad);
        }
    }
    if !(delta_cap > 0.0) {
        return Err(MkyError::FactorizationFailed(format!(
            "shifted Popov function has no positive margin (cap {delta_cap})"
        )));
    }
    let delta = 0.5 * delta_cap.min(1e8);

    // Polynomial form of the shifted Popov function, numerator only:
    // N(s) = 2 slack p p~ + ncb p~ + ncb~ p - Delta v~^T Q v,  x~ = x(-s).
    let (p_char, adj) = char_poly_and_adjugate(a);
    let v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|k| adj[k].row(i).transpose().dot(b)).collect())
        .collect();
    let mut ncb = vec![0.0; n];
    for (i, vi) in v.iter().enumerate() {
        poly_axpy(&mut ncb, c[i], vi);
    }
    let p_flip = poly_flip(&p_char);
    let ncb_flip = poly_flip(&ncb);
    let mut num = poly_mul(&p_char, &p_flip);
    for x in num.iter_mut() {
        *x *= 2.0 * slack;
    }
    poly_axpy(&mut num, 1.0, &poly_mul(&ncb, &p_flip));
    poly_axpy(&mut num, 1.0, &poly_mul(&ncb_flip, &p_char));
    for i in 0..n {
        for j in 0..n {
            let w_ij = q_weight[(i, j)];
            if w_ij != 0.0 {
                let prod = poly_mul(&poly_flip(&v[i]), &v[j]);
                poly_axpy(&mut num, -delta * w_ij, &prod);
            }
        }
    }
    let num = poly_trim(num);
    let deg = num.len() - 1;
    if deg % 2 != 0 {
        return Err(MkyError::FactorizationFailed(format!(
            "Popov numerator has odd degree {deg}"
        )));
    }

    // Hurwitz spectral factor: take the open-left-half-plane roots; roots
    // on the axis come in even clusters, keep every other one.
    let roots = poly_roots(&num).ok_or_else(|| {
        MkyError::FactorizationFailed("root finding on the Popov numerator failed".into())
    })?;
    let scale = roots.iter().fold(1.0_f64, |acc, r| acc.max(r.norm()));
    let mut left: Vec<Complex<f64>> = Vec::new();
    let mut axis: Vec<Complex<f64>> = Vec::new();
    for r in roots {
        if r.re < -1e-8 * scale {
            left.push(r);
        } else if r.re.abs() <= 1e-8 * scale {
            axis.push(r);
        }
    }
    axis.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
    for pair in axis.chunks(2) {
        let mid = if pair.len() == 2 { (pair[0] + pair[1]) * 0.5 } else { pair[0] };
        left.push(Complex::new(mid.re.min(0.0), mid.im));
    }
    if left.len() != deg / 2 {
        return Err(MkyError::FactorizationFailed(format!(
            "spectral factor selected {} roots, expected {}",
            left.len(),
            deg / 2
        )));
    }
    let monic = poly_from_roots(&left);
    let prod = poly_mul(&monic, &poly_flip(&monic));
    let ratio = num[deg] / prod[deg];
    if !(ratio > 0.0) {
        return Err(MkyError::FactorizationFailed(format!(
            "spectral factor leading ratio {ratio} is not positive"
        )));
    }
    // Consistency: the reconstructed product must reproduce the numerator.
    let max_num = num.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    let mut recon = prod;
    for x in recon.iter_mut() {
        *x *= ratio;
    }
    poly_axpy(&mut recon, -1.0, &num);
    let mismatch = recon.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    if mismatch > 1e-6 * max_num.max(1.0) {
        return Err(MkyError::FactorizationFailed(format!(
            "factorisation mismatch {mismatch:.3e} relative to {max_num:.3e}"
        )));
    }
    let lc = ratio.sqrt();
    let factor: Vec<f64> = monic.iter().map(|&x| x * lc).collect();

    // Match q1 from  factor(s) - w p(s) = k^T v(s)  (degree <= n-1), with
    // the certificate sign convention q1 = -k.
    let mut rhs_poly = factor.clone();
    poly_axpy(&mut rhs_poly, -w, &p_char);
    let rhs_trimmed = poly_trim(rhs_poly.clone());
    if rhs_trimmed.len() > n {
        return Err(MkyError::FactorizationFailed(
            "factor minus asymptote has too high a degree".into(),
        ));
    }
    let mut vmat = DMatrix::<f64>::zeros(n, n);
    for (i, vi) in v.iter().enumerate() {
        for (k, &coeff) in vi.iter().enumerate() {
            vmat[(k, i)] = coeff;
        }
    }
    let mut rhs_vec = DVector::<f64>::zeros(n);
    for (k, &coeff) in rhs_poly.iter().take(n).enumerate() {
        rhs_vec[k] = coeff;
    }
    let k_vec = vmat.lu().solve(&rhs_vec).ok_or_else(|| {
        MkyError::FactorizationFailed("coefficient match for q1 is singular".into())
    })?;
    let mut q1 = -k_vec;
    if w == 0.0 {
        // Sign is free when the vector identity is trivial; normalise.
        let lead = q1.iter().cloned().fold(0.0_f64, |acc: f64, v| {
            if v.abs() > acc.abs() { v } else { acc }
        });
        if lead < 0.0 {
            q1 = -q1;
        }
    }

    let rhs_mat = &q1 * q1.transpose() + q_weight * delta;
    let p = lyapunov_solve(a, &rhs_mat).ok_or_else(|| {
        MkyError::FactorizationFailed("Lyapunov solve for P is singular".into())
    })?;
    Ok((p, q1, delta))
}

/// Builds a certificate for a scalar or hybrid controller with weight
/// matrix `Q` (symmetric positive definite).
///
/// The structural assumptions are checked first over `sweep` and the
/// produced certificate is verified before being returned.
pub fn solve_mky(
    ctrl: &ControllerSpec,
    q_weight: &DMatrix<f64>,
    sweep: &FrequencySweep,
) -> Result<MkyCertificate, MkyError> {
    let (a, b, c, d, gamma) = hybrid_data(ctrl)?;
    let n = a.nrows();
    if q_weight.nrows() != n || q_weight.ncols() != n {
        return Err(ControllerError::DimensionMismatch(format!(
            "weight Q is {}x{}, expected {n}x{n}",
            q_weight.nrows(),
            q_weight.ncols()
        ))
        .into());
    }
    let asym = (q_weight - q_weight.transpose()).norm();
    if asym > 1e-12 * q_weight.norm().max(1.0)
        || smallest_symmetric_eigenvalue(q_weight) <= 0.0
    {
        return Err(MkyError::IndefiniteWeight);
    }
    let report = check_hybrid_assumptions(ctrl, sweep)?;
    if !report.pass {
        return Err(MkyError::AssumptionsFailed(Box::new(report)));
    }

    let (p, q1, delta) = if n == 1 {
        solve_scalar(a[(0, 0)], b[0], c[0], d, gamma, q_weight[(0, 0)])?
    } else {
        solve_spectral(&a, &b, &c, d, gamma, q_weight, sweep)?
    };
    let cert = MkyCertificate {
        p,
        q1,
        delta,
        q: q_weight.clone(),
        lyap_tol: DEFAULT_CERT_TOL,
        vec_tol: DEFAULT_CERT_TOL,
    };
    let verdict = verify_mky(ctrl, &cert)?;
    if !verdict.pass {
        return Err(MkyError::FactorizationFailed(format!(
            "constructed certificate fails verification: lyap residual {:.3e}, vec residual {:.3e}, min eig P {:.3e}",
            verdict.lyap_residual, verdict.vec_residual, verdict.p_min_eig
        )));
    }
    Ok(cert)
}
