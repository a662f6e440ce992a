//! The five subcommands.
//!
//! `simulate` writes its artifacts first and then runs every check by
//! reading them back from disk; `verify` re-parses the effective config
//! embedded in the stored report and runs the exact same routine on the
//! same files. Verdict parity between the two commands is therefore
//! structural, not a matter of matching two implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use heatbeam::{
    admissible_delta_hybrid, admissible_delta_static, apply_initial_conditions,
    assemble_semidiscrete, build_grid, check_hybrid_assumptions, compute_lyapunov_constants,
    decay_rate, discrete_energy, fit_decay_rate, lyapunov_functional, max_decay_rate,
    sandwich_sample, simulate, solve_mky, static_delta_branches, tune_gains, verify_envelope,
    verify_mky, AnalysisError, ControllerKind, ControllerSpec, FrequencySweep, GridError,
    LyapunovConstants, MkyCertificate, MkyError, ModelError, SemiDiscreteSystem,
    SimulationConfig, SimulationError, StepError, SystemError, TuneBox, ENVELOPE_SLACK,
};
use nalgebra::DVector;
use thiserror::Error;

use crate::artifacts::{
    cell, read_certificate, read_report_section, read_states, read_timeseries, render_states,
    render_timeseries, write_certificate, write_file, ArtifactError, CheckLine, Report,
    TimeSeries,
};
use crate::config::{AutoOr, ConfigError, RunConfig};

/// Process-level error, carrying its exit code: 2 for configuration
/// problems, 3 for assumption or certificate failures, 4 for numerical
/// failures (including failed run checks).
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Certificate(String),
    #[error("{0}")]
    Numerical(String),
}

impl AppError {
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Certificate(_) => 3,
            AppError::Numerical(_) => 4,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<GridError> for AppError {
    fn from(e: GridError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<heatbeam::ControllerError> for AppError {
    fn from(e: heatbeam::ControllerError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<MkyError> for AppError {
    fn from(e: MkyError) -> Self {
        AppError::Certificate(e.to_string())
    }
}

impl From<StepError> for AppError {
    fn from(e: StepError) -> Self {
        AppError::Numerical(e.to_string())
    }
}

impl From<SystemError> for AppError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::Controller(inner) => inner.into(),
            SystemError::DimensionMismatch { .. } => AppError::Numerical(e.to_string()),
            SystemError::MissingCertificate | SystemError::CertificateDimension { .. } => {
                AppError::Certificate(e.to_string())
            }
        }
    }
}

impl From<SimulationError> for AppError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Step(inner) => inner.into(),
            SimulationError::System(inner) => inner.into(),
            SimulationError::InvalidConfig(msg) => AppError::Config(msg),
        }
    }
}

impl From<AnalysisError> for AppError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Model(inner) => inner.into(),
            AnalysisError::System(inner) => inner.into(),
            AnalysisError::Controller(inner) => inner.into(),
            AnalysisError::Certificate(inner) => inner.into(),
            AnalysisError::CertificateInvalid => AppError::Certificate(e.to_string()),
            AnalysisError::EmptyFeasibleSet => AppError::Config(e.to_string()),
            AnalysisError::NonpositiveEnergy { .. } | AnalysisError::WindowTooShort { .. } => {
                AppError::Numerical(e.to_string())
            }
        }
    }
}

impl From<ArtifactError> for AppError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Certificate(inner) => inner.into(),
            other => AppError::Config(other.to_string()),
        }
    }
}

/// Flags shared by every subcommand.
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub quiet: bool,
}

impl Options {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

fn load_config(opts: &Options) -> Result<RunConfig, AppError> {
    Ok(match &opts.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::from_str("")?,
    })
}

fn resolve_out_dir(opts: &Options, cfg: &RunConfig) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("heatbeam-out"))
}

fn default_sweep() -> FrequencySweep {
    FrequencySweep::default_sweep()
}

/// Loads (or solves for) and verifies the certificate of a dynamic
/// controller; memoryless laws need none.
fn obtain_certificate(cfg: &RunConfig) -> Result<Option<MkyCertificate>, AppError> {
    match cfg.controller.kind() {
        ControllerKind::OpenLoop | ControllerKind::Static => Ok(None),
        ControllerKind::Scalar | ControllerKind::Hybrid => {
            let cert = match &cfg.certificate_path {
                Some(path) => read_certificate(path)?,
                None => solve_mky(&cfg.controller, &cfg.q_weight, &default_sweep())?,
            };
            let verdict = verify_mky(&cfg.controller, &cert)?;
            if !verdict.pass {
                return Err(AppError::Certificate(format!(
                    "certificate fails verification: lyapunov residual {:.3e}, vector residual {:.3e}, min eig(P) {:.3e}, min eig(Q) {:.3e}",
                    verdict.lyap_residual, verdict.vec_residual, verdict.p_min_eig, verdict.q_min_eig
                )));
            }
            Ok(Some(cert))
        }
    }
}

struct DeltaResolution {
    delta: f64,
    source: &'static str,
    note: Option<String>,
    /// Dynamic-law branch diagnostics, for the results block.
    branches: Option<[f64; 4]>,
}

/// Resolves `[lyapunov] delta`: an explicit value is validated against the
/// admissible window; `"auto"` picks `min(1/(2M), 0.99 delta_max)` when a
/// gain-dependent window is known and the sandwich optimum `1/(2M)`
/// otherwise.
fn resolve_delta(
    cfg: &RunConfig,
    consts: &LyapunovConstants,
    cert: Option<&MkyCertificate>,
) -> Result<DeltaResolution, AppError> {
    let delta_star = 1.0 / (2.0 * consts.m_const);
    let explicit = |v: f64, max: f64| -> Result<DeltaResolution, AppError> {
        if v >= max {
            return Err(ModelError::DeltaOutOfRange { delta: v, max }.into());
        }
        Ok(DeltaResolution { delta: v, source: "explicit", note: None, branches: None })
    };
    match (cfg.delta, &cfg.controller, cert) {
        (AutoOr::Value(v), ControllerSpec::Static { xi1, xi2 }, _) => {
            let max = admissible_delta_static(consts, &cfg.params, *xi1, *xi2)?;
            explicit(v, max)
        }
        (AutoOr::Value(v), _, _) => explicit(v, 1.0 / consts.m_const),
        (AutoOr::Auto, ControllerSpec::Static { xi1, xi2 }, _) => {
            let max = admissible_delta_static(consts, &cfg.params, *xi1, *xi2)?;
            Ok(DeltaResolution {
                delta: delta_star.min(0.99 * max),
                source: "auto",
                note: None,
                branches: None,
            })
        }
        (AutoOr::Auto, ControllerSpec::OpenLoop, _) => Ok(DeltaResolution {
            delta: delta_star,
            source: "auto",
            note: None,
            branches: None,
        }),
        (AutoOr::Auto, _, Some(cert)) => {
            let bound = admissible_delta_hybrid(consts, &cfg.params, &cfg.controller, cert)?;
            let (delta, note) = if bound.certified && bound.delta_max > 0.0 {
                (delta_star.min(0.99 * bound.delta_max), bound.warning.clone())
            } else {
                let why = bound
                    .warning
                    .clone()
                    .unwrap_or_else(|| "admissible-delta bound is not positive".to_owned());
                (
                    delta_star,
                    Some(format!("decay rate not certified ({why}); using the sandwich optimum")),
                )
            };
            Ok(DeltaResolution { delta, source: "auto", note, branches: Some(bound.branches) })
        }
        (AutoOr::Auto, _, None) => Err(SystemError::MissingCertificate.into()),
    }
}

/// Everything `verify` can see: the artifacts stored in a run directory.
struct RunArtifacts {
    series: TimeSeries,
    states: Option<(Vec<f64>, Vec<DVector<f64>>)>,
    cert: Option<MkyCertificate>,
}

fn load_artifacts(dir: &Path) -> Result<RunArtifacts, AppError> {
    let series = read_timeseries(&dir.join("timeseries.csv"))?;
    let states_path = dir.join("states.csv");
    let states = if states_path.exists() {
        Some(read_states(&states_path)?)
    } else {
        None
    };
    let cert_path = dir.join("certificate.txt");
    let cert = if cert_path.exists() {
        Some(read_certificate(&cert_path)?)
    } else {
        None
    };
    Ok(RunArtifacts { series, states, cert })
}

/// The invariant suite both `simulate` and `verify` run over stored
/// artifacts. Every verdict and detail is computed from the files plus the
/// effective config, so both commands produce identical lines.
fn run_checks(
    sys: &SemiDiscreteSystem,
    consts: &LyapunovConstants,
    delta: f64,
    seed: u64,
    art: &RunArtifacts,
) -> Result<Vec<CheckLine>, AppError> {
    let series = &art.series;
    let cert = art.cert.as_ref();
    let tracked: &[f64] = series
        .e_hybrid
        .as_deref()
        .unwrap_or(&series.e_h);
    let e0 = tracked.first().copied().unwrap_or(0.0);
    let tol = 1e-10 * e0.max(1.0);
    let mut checks = Vec::new();

    let max_rise = tracked
        .windows(2)
        .fold(0.0_f64, |acc, w| acc.max(w[1] - w[0]));
    checks.push(CheckLine::new(
        "tracked_energy_monotone",
        max_rise <= tol,
        format!("max rise {} <= {}", cell(max_rise), cell(tol)),
    ));

    let max_defect = series
        .residuals
        .iter()
        .fold(0.0_f64, |acc, &r| acc.max(r.abs()));
    checks.push(CheckLine::new(
        "energy_balance_residual",
        max_defect <= tol,
        format!("max defect {} <= {}", cell(max_defect), cell(tol)),
    ));

    if let Some(l_col) = &series.l_h {
        let m_delta = consts.m_const * delta;
        let mut ok = true;
        let mut worst = f64::INFINITY;
        for (i, &l_val) in l_col.iter().enumerate() {
            let e = tracked[i];
            let (lo, hi) = ((1.0 - m_delta) * e, (1.0 + m_delta) * e);
            let slack = 1e-12 * e.abs().max(1.0);
            ok &= l_val >= lo - slack && l_val <= hi + slack;
            let scale = e.abs().max(1e-300);
            worst = worst.min((l_val - lo) / scale).min((hi - l_val) / scale);
        }
        checks.push(CheckLine::new(
            "lyapunov_sandwich_trajectory",
            ok,
            format!("worst relative margin {}", cell(worst)),
        ));
    }

    let sample = sandwich_sample(sys, cert, consts, delta, 200, seed)?;
    checks.push(CheckLine::new(
        "lyapunov_sandwich_random",
        sample.all_ok,
        format!(
            "{} seeded states, worst relative margin {}",
            sample.checked,
            cell(sample.worst_margin)
        ),
    ));

    if sys.controller.kind() == ControllerKind::Static {
        // Mirrors the library's envelope verdict, recomputed from the CSV
        // columns so a stored run can be re-judged without its states.
        let rate = decay_rate(consts, &sys.params, delta)?;
        let t0 = series.t.first().copied().unwrap_or(0.0);
        let e_start = series.e_h.first().copied().unwrap_or(0.0);
        let mut ok = true;
        let mut margin = f64::INFINITY;
        for (&t, &e) in series.t.iter().zip(series.e_h.iter()) {
            let envelope = rate.prefactor * e_start * (-rate.sigma * (t - t0)).exp() + ENVELOPE_SLACK;
            if e > envelope {
                ok = false;
            }
            if e > 0.0 {
                margin = margin.min(envelope.ln() - e.ln());
            }
        }
        checks.push(CheckLine::new(
            "decay_envelope",
            ok,
            format!(
                "sigma {}, min log margin {}",
                cell(rate.sigma),
                cell(margin)
            ),
        ));
    }

    if let Some(cert) = cert {
        let verdict = verify_mky(&sys.controller, cert)?;
        checks.push(CheckLine::new(
            "certificate_verified",
            verdict.pass,
            format!(
                "lyapunov residual {}, vector residual {}",
                cell(verdict.lyap_residual),
                cell(verdict.vec_residual)
            ),
        ));
    }

    if let Some((_, states)) = &art.states {
        let mut ok = states.len() == tracked.len();
        let mut worst = 0.0_f64;
        for (i, x) in states.iter().enumerate() {
            if i >= tracked.len() {
                break;
            }
            let e = discrete_energy(sys, x, cert)?;
            let dev = (e - tracked[i]).abs();
            worst = worst.max(dev);
            ok &= dev <= 1e-12 * tracked[i].abs().max(1.0);
        }
        checks.push(CheckLine::new(
            "snapshot_energy_consistent",
            ok,
            format!("{} snapshots, max deviation {}", states.len(), cell(worst)),
        ));
    }

    Ok(checks)
}

fn build_system(cfg: &RunConfig) -> Result<SemiDiscreteSystem, AppError> {
    let grid = build_grid(cfg.n, cfg.params.l1, cfg.params.l2)?;
    Ok(assemble_semidiscrete(&cfg.params, &grid, &cfg.controller)?)
}

fn fail_count(checks: &[CheckLine]) -> usize {
    checks.iter().filter(|c| !c.pass).count()
}

pub fn cmd_simulate(opts: &Options) -> Result<(), AppError> {
    let cfg = load_config(opts)?;
    let dir = resolve_out_dir(opts, &cfg);
    let cert = obtain_certificate(&cfg)?;
    let sys = build_system(&cfg)?;
    let profiles = cfg.build_profiles()?;
    let initial = apply_initial_conditions(&sys, &profiles)?;

    let sim_cfg = SimulationConfig {
        dt: match cfg.dt {
            AutoOr::Auto => None,
            AutoOr::Value(v) => Some(v),
        },
        t_final: cfg.t_final,
        record_every: cfg.record_every,
        solver_tol: 1e-12,
        store_states: true,
    };
    let start = Instant::now();
    let traj = simulate(&sys, &initial, &sim_cfg, cert.as_ref())?;
    let elapsed = start.elapsed();

    let consts = compute_lyapunov_constants(&cfg.params, cfg.b1)?;
    let resolution = resolve_delta(&cfg, &consts, cert.as_ref())?;
    let delta = resolution.delta;

    let snapshots = traj.snapshots.as_ref().expect("states stored for the functional column");
    let mut l_h = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        l_h.push(lyapunov_functional(&sys, &snap.x, cert.as_ref(), &consts, delta)?.total);
    }

    std::fs::create_dir_all(&dir).map_err(|e| {
        AppError::Config(format!("cannot create output directory {}: {e}", dir.display()))
    })?;
    write_file(&dir.join("timeseries.csv"), &render_timeseries(&traj, Some(&l_h)))?;
    if cfg.snapshots {
        let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
        let xs: Vec<DVector<f64>> = snapshots.iter().map(|s| s.x.clone()).collect();
        write_file(&dir.join("states.csv"), &render_states(&times, &xs))?;
    }
    if let Some(cert) = &cert {
        write_certificate(&dir.join("certificate.txt"), cert)?;
    }

    // Checks run on the files just written, exactly as `verify` will.
    let art = load_artifacts(&dir)?;
    let checks = run_checks(&sys, &consts, delta, opts.seed, &art)?;

    let mut results: Vec<(String, String)> = Vec::new();
    let mut push = |key: &str, value: String| results.push((key.to_owned(), value));
    push("state_dim", sys.layout.dim().to_string());
    push("dt", cell(traj.dt));
    push("steps", traj.steps.to_string());
    push("samples", traj.times.len().to_string());
    push("seed", opts.seed.to_string());
    push("M", cell(consts.m_const));
    push("delta", cell(delta));
    push("delta_source", resolution.source.to_owned());
    if let Some(note) = &resolution.note {
        push("delta_note", note.clone());
    }
    if let Some(branches) = resolution.branches {
        push(
            "hybrid_delta_branches",
            format!(
                "[{}]",
                branches.map(cell).join(", ")
            ),
        );
    }
    if sys.controller.kind() == ControllerKind::Static {
        let report = verify_envelope(&traj, &consts, &cfg.params, delta)?;
        push("sigma_theory", cell(report.sigma_theory));
        push("envelope_prefactor", cell(report.prefactor));
        push(
            "sigma_measured",
            report.sigma_measured.map_or_else(|| "-".to_owned(), cell),
        );
        push(
            "fit_window",
            format!("[{}, {}]", cell(report.fit_window.0), cell(report.fit_window.1)),
        );
        push(
            "fit_residual_rms",
            report.fit_residual.map_or_else(|| "-".to_owned(), cell),
        );
    } else {
        let tracked: &[f64] = art.series.e_hybrid.as_deref().unwrap_or(&art.series.e_h);
        let t0 = traj.times[0];
        let t_end = *traj.times.last().expect("at least one sample");
        let window = (t0 + 0.2 * (t_end - t0), t_end);
        match fit_decay_rate(&traj.times, tracked, window) {
            Ok(fit) => {
                push("sigma_measured", cell(fit.sigma));
                push("fit_window", format!("[{}, {}]", cell(window.0), cell(window.1)));
                push("fit_residual_rms", cell(fit.residual_rms));
            }
            Err(_) => push("sigma_measured", "-".to_owned()),
        }
    }
    let tracked0 = art.series.e_hybrid.as_deref().unwrap_or(&art.series.e_h);
    push("E_start", cell(tracked0.first().copied().unwrap_or(0.0)));
    push("E_end", cell(tracked0.last().copied().unwrap_or(0.0)));
    push("max_dissipation_residual", cell(traj.max_dissipation_residual));
    push("max_constraint_residual", cell(traj.max_constraint_residual));
    push("max_energy_increase", cell(traj.max_energy_increase));

    let report = Report {
        config_echo: cfg.echo(),
        results,
        checks: checks.clone(),
    };
    write_file(&dir.join("report.txt"), &report.render())?;

    for check in &checks {
        opts.say(&check.render());
    }
    opts.say(&format!(
        "simulated {} steps in {:.3}s; artifacts in {}",
        traj.steps,
        elapsed.as_secs_f64(),
        dir.display()
    ));

    let failed = fail_count(&checks);
    if failed > 0 {
        return Err(AppError::Numerical(format!(
            "{failed} of {} checks failed; see {}",
            checks.len(),
            dir.join("report.txt").display()
        )));
    }
    Ok(())
}

pub fn cmd_verify(opts: &Options) -> Result<(), AppError> {
    let dir = match (&opts.out, &opts.config) {
        (Some(dir), _) => dir.clone(),
        (None, Some(path)) => resolve_out_dir(opts, &RunConfig::from_path(path)?),
        (None, None) => PathBuf::from("heatbeam-out"),
    };
    let report_path = dir.join("report.txt");
    let config_block = read_report_section(&report_path, "config")?.join("\n");
    let cfg = RunConfig::from_str(&config_block)?;

    let results = read_report_section(&report_path, "results")?;
    let seed = results
        .iter()
        .find_map(|line| line.strip_prefix("seed = "))
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or(opts.seed);

    let sys = build_system(&cfg)?;
    let consts = compute_lyapunov_constants(&cfg.params, cfg.b1)?;
    let art = load_artifacts(&dir)?;
    if sys.controller.state_dim() > 0 && art.cert.is_none() {
        return Err(SystemError::MissingCertificate.into());
    }
    let resolution = resolve_delta(&cfg, &consts, art.cert.as_ref())?;
    let checks = run_checks(&sys, &consts, resolution.delta, seed, &art)?;

    let stored = read_report_section(&report_path, "checks")?;
    let recomputed: Vec<String> = checks.iter().map(CheckLine::render).collect();
    let matches = stored == recomputed;

    for check in &checks {
        opts.say(&check.render());
    }
    opts.say(&format!(
        "stored verdicts match recomputation: {}",
        if matches { "yes" } else { "no" }
    ));

    let failed = fail_count(&checks);
    if failed > 0 {
        return Err(AppError::Numerical(format!(
            "{failed} of {} checks failed on the stored run in {}",
            checks.len(),
            dir.display()
        )));
    }
    if !matches {
        return Err(AppError::Numerical(format!(
            "stored checks in {} do not match recomputation",
            report_path.display()
        )));
    }
    Ok(())
}

pub fn cmd_constants(opts: &Options) -> Result<(), AppError> {
    let cfg = load_config(opts)?;
    let p = &cfg.params;
    let consts = compute_lyapunov_constants(p, cfg.b1)?;
    let gains = match &cfg.controller {
        ControllerSpec::Static { xi1, xi2 } | ControllerSpec::Scalar { xi1, xi2, .. } => {
            Some((*xi1, *xi2))
        }
        _ => None,
    };
    let rate = max_decay_rate(&consts, p, gains)?;

    let mut out = String::new();
    for (key, value) in [
        ("rho", p.rho),
        ("mu", p.mu),
        ("alpha1", p.alpha1),
        ("gamma", p.gamma),
        ("beta", p.beta),
        ("kappa", p.kappa),
        ("l1", p.l1),
        ("l2", p.l2),
        ("b1", consts.b1),
        ("a1", consts.a1),
        ("c1", consts.c1),
        ("M_tilde", consts.m_tilde),
        ("M", consts.m_const),
        ("delta_star", rate.delta_star),
        ("sigma_max", rate.sigma_max),
    ] {
        out.push_str(&format!("{key} = {value}\n"));
    }
    if let Some((xi1, xi2)) = gains {
        let branches = static_delta_branches(&consts, p, xi1, xi2);
        let delta_max = admissible_delta_static(&consts, p, xi1, xi2)?;
        out.push_str(&format!("xi1 = {xi1}\nxi2 = {xi2}\n"));
        out.push_str(&format!(
            "delta_branches = [{}, {}, {}]\n",
            branches[0], branches[1], branches[2]
        ));
        out.push_str(&format!("delta_max = {delta_max}\n"));
        out.push_str(&format!(
            "delta_star_attainable = {}\n",
            rate.attainable.map_or_else(|| "unknown".to_owned(), |b| b.to_string())
        ));
    }

    // The table is the command's output, so it prints even under --quiet.
    print!("{out}");
    if let Some(dir) = opts.out.clone().or_else(|| cfg.out_dir.clone()) {
        write_file(&dir.join("constants.txt"), &out)?;
    }
    Ok(())
}

pub fn cmd_check_controller(opts: &Options) -> Result<(), AppError> {
    let cfg = load_config(opts)?;
    let dir = resolve_out_dir(opts, &cfg);
    let report = check_hybrid_assumptions(&cfg.controller, &default_sweep())?;

    let mut text = String::new();
    for (key, value) in [
        ("spectral_abscissa", cell(report.spectral_abscissa)),
        ("hurwitz", report.hurwitz.to_string()),
        ("controllability_rank", report.controllability_rank.to_string()),
        ("controllable", report.controllable.to_string()),
        ("observability_rank", report.observability_rank.to_string()),
        ("observable", report.observable.to_string()),
        ("margin_finite", cell(report.margin_finite)),
        ("margin_argmin", cell(report.margin_argmin)),
        ("margin_infinity", cell(report.margin_infinity)),
        ("positive_real_margin", cell(report.positive_real_margin)),
        ("nonstrict_at_infinity", report.nonstrict_at_infinity.to_string()),
        ("pass", report.pass.to_string()),
    ] {
        text.push_str(&format!("{key} = {value}\n"));
    }
    std::fs::create_dir_all(&dir).map_err(|e| {
        AppError::Config(format!("cannot create output directory {}: {e}", dir.display()))
    })?;
    write_file(&dir.join("assumptions.txt"), &text)?;
    opts.say(&format!("assumptions: {report}"));

    if !report.pass {
        return Err(AppError::Certificate(format!(
            "controller fails the structural assumptions: {report}"
        )));
    }

    let cert = match &cfg.certificate_path {
        Some(path) => read_certificate(path)?,
        None => solve_mky(&cfg.controller, &cfg.q_weight, &default_sweep())?,
    };
    let verdict = verify_mky(&cfg.controller, &cert)?;
    write_certificate(&dir.join("certificate.txt"), &cert)?;
    opts.say(&format!(
        "certificate: dim {}, delta {}, lyapunov residual {:.3e}, vector residual {:.3e}, written to {}",
        cert.dim(),
        cell(cert.delta),
        verdict.lyap_residual,
        verdict.vec_residual,
        dir.join("certificate.txt").display()
    ));
    if !verdict.pass {
        return Err(AppError::Certificate(
            "certificate fails verification against the controller".to_owned(),
        ));
    }
    Ok(())
}

pub fn cmd_tune(opts: &Options) -> Result<(), AppError> {
    let cfg = load_config(opts)?;
    let dir = resolve_out_dir(opts, &cfg);
    let consts = compute_lyapunov_constants(&cfg.params, cfg.b1)?;
    let search = TuneBox {
        xi1: cfg.tune_xi1,
        xi2: cfg.tune_xi2,
        resolution: cfg.tune_resolution,
    };
    let result = tune_gains(&cfg.params, &consts, &search)?;

    let mut csv = String::from("xi1,xi2,delta,sigma\n");
    for entry in &result.evaluations {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            cell(entry.xi1),
            cell(entry.xi2),
            cell(entry.delta),
            cell(entry.sigma)
        ));
    }
    write_file(&dir.join("tune.csv"), &csv)?;

    let results: Vec<(String, String)> = vec![
        ("best_xi1".into(), cell(result.best.xi1)),
        ("best_xi2".into(), cell(result.best.xi2)),
        ("best_delta".into(), cell(result.best.delta)),
        ("best_sigma".into(), cell(result.best.sigma)),
        ("sigma_ceiling".into(), cell(result.sigma_ceiling)),
        ("ceiling_attained".into(), result.attained.to_string()),
        ("evaluations".into(), result.evaluations.len().to_string()),
    ];
    let report = Report {
        config_echo: cfg.echo(),
        results,
        checks: Vec::new(),
    };
    write_file(&dir.join("tune.txt"), &report.render())?;

    opts.say(&format!(
        "best gains xi1 = {}, xi2 = {} -> sigma = {} (ceiling {}, attained: {}); table in {}",
        cell(result.best.xi1),
        cell(result.best.xi2),
        cell(result.best.sigma),
        cell(result.sigma_ceiling),
        result.attained,
        dir.join("tune.csv").display()
    ));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_family() {
        assert_eq!(AppError::Config("x".into()).exit_code(), 2);
        assert_eq!(AppError::Certificate("x".into()).exit_code(), 3);
        assert_eq!(AppError::Numerical("x".into()).exit_code(), 4);
        let sim: AppError = SimulationError::InvalidConfig("bad".into()).into();
        assert_eq!(sim.exit_code(), 2);
        let step: AppError = StepError::NonFinite { step: 3 }.into();
        assert_eq!(step.exit_code(), 4);
        let cert: AppError = SystemError::MissingCertificate.into();
        assert_eq!(cert.exit_code(), 3);
    }
}
