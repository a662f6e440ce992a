//! TOML run configuration: strict parsing (unknown keys are errors),
//! canonical defaults for every omitted section, and builders that turn the
//! parsed text into library inputs. The effective configuration — defaults
//! included — is echoed into every report so a run can be reproduced from
//! its artifacts alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use heatbeam::{validate_params, ControllerSpec, InitialProfiles, MaterialParams};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// `"auto"` or an explicit positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoOr {
    Auto,
    Value(f64),
}

impl AutoOr {
    pub fn echo(self) -> String {
        match self {
            AutoOr::Auto => "\"auto\"".to_owned(),
            AutoOr::Value(v) => format!("{v}"),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(de)? {
            Raw::Text(s) if s == "auto" => Ok(AutoOr::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got \"{s}\""
            ))),
            Raw::Number(v) => Ok(AutoOr::Value(v)),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialSection {
    rho: Option<f64>,
    mu: Option<f64>,
    alpha1: Option<f64>,
    gamma: Option<f64>,
    beta: Option<f64>,
    kappa: Option<f64>,
    l1: Option<f64>,
    l2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    dt: Option<AutoOr>,
    #[serde(rename = "T")]
    t_final: Option<f64>,
    record_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    kind: Option<String>,
    xi1: Option<f64>,
    xi2: Option<f64>,
    eta: Option<f64>,
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
    d: Option<f64>,
    gamma: Option<f64>,
    zeta: Option<Vec<f64>>,
    q_weight: Option<Vec<Vec<f64>>>,
    certificate: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovSection {
    b1: Option<f64>,
    delta: Option<AutoOr>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    amplitude: Option<f64>,
    z0: Option<String>,
    v0x: Option<String>,
    p0x: Option<String>,
    v1: Option<String>,
    p1: Option<String>,
    tabulated: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TuneSection {
    xi1: Option<[f64; 2]>,
    xi2: Option<[f64; 2]>,
    resolution: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    directory: Option<PathBuf>,
    snapshots: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    material: Option<MaterialSection>,
    grid: Option<GridSection>,
    time: Option<TimeSection>,
    controller: Option<ControllerSection>,
    lyapunov: Option<LyapunovSection>,
    initial: Option<InitialSection>,
    tune: Option<TuneSection>,
    output: Option<OutputSection>,
}

/// One scalar initial profile, in the `zero | sine(k) | gaussian(c, w)`
/// mini-language.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Sine(f64),
    Gaussian(f64, f64),
}

impl Profile {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let t = text.trim();
        if t == "zero" {
            return Ok(Profile::Zero);
        }
        let call = |name: &str| -> Option<Vec<f64>> {
            let rest = t.strip_prefix(name)?.trim();
            let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
            inner
                .split(',')
                .map(|p| p.trim().parse::<f64>().ok())
                .collect()
        };
        if let Some(args) = call("sine") {
            if let [k] = args[..] {
                return Ok(Profile::Sine(k));
            }
        }
        if let Some(args) = call("gaussian") {
            if let [center, width] = args[..] {
                if width > 0.0 {
                    return Ok(Profile::Gaussian(center, width));
                }
                return Err(invalid(format!("gaussian width must be positive in '{t}'")));
            }
        }
        Err(invalid(format!(
            "unknown profile '{t}': expected zero, sine(k), or gaussian(center, width)"
        )))
    }

    /// Evaluate on `[0, len]` with unit amplitude.
    fn eval(&self, x: f64, len: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Sine(k) => (k * std::f64::consts::PI * x / len).sin(),
            Profile::Gaussian(center, width) => {
                let r = (x - center) / width;
                (-r * r).exp()
            }
        }
    }

    fn echo(&self) -> String {
        match self {
            Profile::Zero => "zero".to_owned(),
            Profile::Sine(k) => format!("sine({k})"),
            Profile::Gaussian(c, w) => format!("gaussian({c},{w})"),
        }
    }
}

/// Tabulated samples for one field: sorted `(x, value)` pairs, linearly
/// interpolated and vanishing outside the covered range.
#[derive(Debug, Clone, Default)]
pub struct Table {
    points: Vec<(f64, f64)>,
}

impl Table {
    fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() || x < pts[0].0 || x > pts[pts.len() - 1].0 {
            return 0.0;
        }
        let idx = pts.partition_point(|&(px, _)| px <= x);
        if idx == 0 {
            return pts[0].1;
        }
        if idx >= pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (x0, y0) = pts[idx - 1];
        let (x1, y1) = pts[idx];
        if x1 == x0 {
            y0
        } else {
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

pub const FIELD_NAMES: [&str; 5] = ["z0", "v0x", "p0x", "v1", "p1"];

fn parse_table_file(path: &Path) -> Result<BTreeMap<String, Table>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line == "field,x,value") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let [field, x, value] = parts[..] else {
            return Err(invalid(format!(
                "{}:{}: expected 'field,x,value'",
                path.display(),
                ln + 1
            )));
        };
        if !FIELD_NAMES.contains(&field) {
            return Err(invalid(format!(
                "{}:{}: unknown field '{field}' (expected one of {FIELD_NAMES:?})",
                path.display(),
                ln + 1
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                invalid(format!("{}:{}: '{s}' is not a number", path.display(), ln + 1))
            })
        };
        tables
            .entry(field.to_owned())
            .or_default()
            .points
            .push((parse(x)?, parse(value)?));
    }
    for table in tables.values_mut() {
        table
            .points
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sample abscissae"));
    }
    Ok(tables)
}

/// Fully resolved run configuration (everything defaulted and validated).
#[derive(Debug)]
pub struct RunConfig {
    pub params: MaterialParams,
    pub n: usize,
    pub dt: AutoOr,
    pub t_final: f64,
    pub record_every: usize,
    pub controller: ControllerSpec,
    pub controller_kind_echo: String,
    pub certificate_path: Option<PathBuf>,
    pub q_weight: DMatrix<f64>,
    pub b1: f64,
    pub delta: AutoOr,
    pub amplitude: f64,
    pub profiles: [Profile; 5],
    pub tabulated: Option<PathBuf>,
    pub tune_xi1: (f64, f64),
    pub tune_xi2: (f64, f64),
    pub tune_resolution: usize,
    pub out_dir: Option<PathBuf>,
    pub snapshots: bool,
}

fn build_material(section: &MaterialSection) -> Result<MaterialParams, ConfigError> {
    let canon = MaterialParams::canonical();
    let mut raw = BTreeMap::new();
    let defaults = [
        ("rho", section.rho, canon.rho),
        ("mu", section.mu, canon.mu),
        ("alpha1", section.alpha1, canon.alpha1),
        ("gamma", section.gamma, canon.gamma),
        ("beta", section.beta, canon.beta),
        ("kappa", section.kappa, canon.kappa),
        ("l1", section.l1, canon.l1),
        ("l2", section.l2, canon.l2),
    ];
    for (name, given, fallback) in defaults {
        raw.insert(name.to_owned(), given.unwrap_or(fallback));
    }
    validate_params(&raw).map_err(|errors| {
        let listed: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        invalid(format!("[material] rejected: {}", listed.join("; ")))
    })
}

fn reject_keys(kind: &str, offending: &[(&str, bool)]) -> Result<(), ConfigError> {
    for (key, present) in offending {
        if *present {
            return Err(invalid(format!(
                "[controller] key '{key}' does not apply to kind = \"{kind}\""
            )));
        }
    }
    Ok(())
}

fn build_controller(
    section: &ControllerSection,
) -> Result<(ControllerSpec, String, DMatrix<f64>), ConfigError> {
    let kind = section.kind.as_deref().unwrap_or("static");
    let xi1 = section.xi1.unwrap_or(1.0);
    let xi2 = section.xi2.unwrap_or(1.0);
    let hybrid_keys = [
        ("a", section.a.is_some()),
        ("b", section.b.is_some()),
        ("c", section.c.is_some()),
        ("d", section.d.is_some()),
        ("gamma", section.gamma.is_some()),
        ("zeta", section.zeta.is_some()),
        ("q_weight", section.q_weight.is_some()),
    ];
    let ctrl = match kind {
        "open-loop" => {
            reject_keys(kind, &hybrid_keys)?;
            reject_keys(
                kind,
                &[
                    ("xi1", section.xi1.is_some()),
                    ("xi2", section.xi2.is_some()),
                    ("eta", section.eta.is_some()),
                    ("certificate", section.certificate.is_some()),
                ],
            )?;
            ControllerSpec::OpenLoop
        }
        "static" => {
            reject_keys(kind, &hybrid_keys)?;
            reject_keys(
                kind,
                &[
                    ("eta", section.eta.is_some()),
                    ("certificate", section.certificate.is_some()),
                ],
            )?;
            ControllerSpec::Static { xi1, xi2 }
        }
        "scalar" => {
            reject_keys(kind, &hybrid_keys)?;
            ControllerSpec::Scalar {
                xi1,
                xi2,
                eta: section.eta.unwrap_or(0.0),
            }
        }
        "hybrid" => {
            reject_keys(
                kind,
                &[("xi2", section.xi2.is_some()), ("eta", section.eta.is_some())],
            )?;
            let rows = section
                .a
                .as_ref()
                .ok_or_else(|| invalid("[controller] kind = \"hybrid\" requires matrix 'a'"))?;
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(invalid("[controller] 'a' must be a nonempty square matrix"));
            }
            let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            let b = section
                .b
                .as_ref()
                .ok_or_else(|| invalid("[controller] kind = \"hybrid\" requires vector 'b'"))?;
            let c = section
                .c
                .as_ref()
                .ok_or_else(|| invalid("[controller] kind = \"hybrid\" requires vector 'c'"))?;
            if b.len() != n || c.len() != n {
                return Err(invalid(format!(
                    "[controller] 'b' and 'c' must have length {n} to match 'a'"
                )));
            }
            let zeta = match &section.zeta {
                None => DVector::zeros(n),
                Some(z) if z.len() == n => DVector::from_vec(z.clone()),
                Some(z) => {
                    return Err(invalid(format!(
                        "[controller] 'zeta' has length {}, expected {n}",
                        z.len()
                    )))
                }
            };
            ControllerSpec::Hybrid {
                xi1,
                a,
                b: DVector::from_vec(b.clone()),
                c: DVector::from_vec(c.clone()),
                d: section.d.unwrap_or(0.0),
                gamma: section.gamma.unwrap_or(0.0),
                zeta,
            }
        }
        other => {
            return Err(invalid(format!(
                "[controller] unknown kind \"{other}\": expected open-loop, static, scalar, or hybrid"
            )))
        }
    };
    ctrl.validate()
        .map_err(|e| invalid(format!("[controller] rejected: {e}")))?;
    let dim = ctrl.state_dim().max(1);
    let q_weight = match &section.q_weight {
        None => DMatrix::identity(dim, dim),
        Some(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(invalid(format!(
                    "[controller] 'q_weight' must be {dim}x{dim} for this controller"
                )));
            }
            DMatrix::from_fn(dim, dim, |i, j| rows[i][j])
        }
    };
    Ok((ctrl, kind.to_owned(), q_weight))
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let material = raw.material.unwrap_or_default();
        let grid = raw.grid.unwrap_or_default();
        let time = raw.time.unwrap_or_default();
        let controller = raw.controller.unwrap_or_default();
        let lyapunov = raw.lyapunov.unwrap_or_default();
        let initial = raw.initial.unwrap_or_default();
        let tune = raw.tune.unwrap_or_default();
        let output = raw.output.unwrap_or_default();

        let params = build_material(&material)?;
        let n = grid.n.unwrap_or(40);
        if n < 2 {
            return Err(invalid(format!("[grid] n = {n} is too coarse (need n >= 2)")));
        }
        let dt = time.dt.unwrap_or(AutoOr::Auto);
        if let AutoOr::Value(v) = dt {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("[time] dt = {v} must be positive")));
            }
        }
        let t_final = time.t_final.unwrap_or(10.0);
        if !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(invalid(format!("[time] T = {t_final} must be nonnegative")));
        }
        let record_every = time.record_every.unwrap_or(1);
        if record_every == 0 {
            return Err(invalid("[time] record_every must be at least 1"));
        }

        let (ctrl, kind_echo, q_weight) = build_controller(&controller)?;

        let b1 = lyapunov.b1.unwrap_or(1.0);
        if !(b1 > 0.0) || !b1.is_finite() {
            return Err(invalid(format!("[lyapunov] b1 = {b1} must be positive")));
        }
        let delta = lyapunov.delta.unwrap_or(AutoOr::Auto);
        if let AutoOr::Value(v) = delta {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("[lyapunov] delta = {v} must be positive")));
            }
        }

        let amplitude = initial.amplitude.unwrap_or(1.0);
        if !amplitude.is_finite() {
            return Err(invalid("[initial] amplitude must be finite"));
        }
        let mut profiles = Vec::with_capacity(5);
        for (name, value) in [
            ("z0", &initial.z0),
            ("v0x", &initial.v0x),
            ("p0x", &initial.p0x),
            ("v1", &initial.v1),
            ("p1", &initial.p1),
        ] {
            let profile = match value {
                None => Profile::Zero,
                Some(text) => Profile::parse(text)
                    .map_err(|e| invalid(format!("[initial] {name}: {e}")))?,
            };
            profiles.push(profile);
        }

        let tune_xi1 = tune.xi1.map_or((0.2, 4.0), |[lo, hi]| (lo, hi));
        let tune_xi2 = tune.xi2.map_or((0.2, 4.0), |[lo, hi]| (lo, hi));
        let tune_resolution = tune.resolution.unwrap_or(9);
        for (name, (lo, hi)) in [("xi1", tune_xi1), ("xi2", tune_xi2)] {
            if !(lo > 0.0) || hi < lo || !hi.is_finite() {
                return Err(invalid(format!(
                    "[tune] {name} = [{lo}, {hi}] is not a positive, ordered range"
                )));
            }
        }
        if tune_resolution == 0 {
            return Err(invalid("[tune] resolution must be at least 1"));
        }

        Ok(RunConfig {
            params,
            n,
            dt,
            t_final,
            record_every,
            controller: ctrl,
            controller_kind_echo: kind_echo,
            certificate_path: controller.certificate,
            q_weight,
            b1,
            delta,
            amplitude,
            profiles: profiles.try_into().expect("five named fields"),
            tabulated: initial.tabulated,
            tune_xi1,
            tune_xi2,
            tune_resolution,
            out_dir: output.directory,
            snapshots: output.snapshots.unwrap_or(false),
        })
    }

    /// Initial-data closures from the named profiles, the optional
    /// tabulated overrides, and the common amplitude.
    pub fn build_profiles(&self) -> Result<InitialProfiles, ConfigError> {
        let tables = match &self.tabulated {
            None => BTreeMap::new(),
            Some(path) => parse_table_file(path)?,
        };
        let amplitude = self.amplitude;
        let lengths = [self.params.l1, self.params.l2, self.params.l2, self.params.l2, self.params.l2];
        let mut built: Vec<Box<dyn Fn(f64) -> f64 + Send + Sync>> = Vec::with_capacity(5);
        for (i, name) in FIELD_NAMES.iter().enumerate() {
            let len = lengths[i];
            match tables.get(*name) {
                Some(table) => {
                    let table = table.clone();
                    built.push(Box::new(move |x| amplitude * table.eval(x)));
                }
                None => {
                    let profile = self.profiles[i].clone();
                    built.push(Box::new(move |x| amplitude * profile.eval(x, len)));
                }
            }
        }
        let mut iter = built.into_iter();
        Ok(InitialProfiles {
            z0: iter.next().expect("z0"),
            v0x: iter.next().expect("v0x"),
            p0x: iter.next().expect("p0x"),
            v1: iter.next().expect("v1"),
            p1: iter.next().expect("p1"),
        })
    }

    /// The `== config ==` block: every effective key, defaults included, in
    /// a fixed order. The block is itself valid TOML (dotted keys), so a
    /// stored report can be re-parsed into the exact same configuration.
    pub fn echo(&self) -> String {
        let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
        let p = &self.params;
        let mut out = String::new();
        for (key, value) in [
            ("material.rho", p.rho),
            ("material.mu", p.mu),
            ("material.alpha1", p.alpha1),
            ("material.gamma", p.gamma),
            ("material.beta", p.beta),
            ("material.kappa", p.kappa),
            ("material.l1", p.l1),
            ("material.l2", p.l2),
        ] {
            let _ = writeln!(out, "{key} = {value}");
        }
        let _ = writeln!(out, "grid.n = {}", self.n);
        let _ = writeln!(out, "time.dt = {}", self.dt.echo());
        let _ = writeln!(out, "time.T = {}", self.t_final);
        let _ = writeln!(out, "time.record_every = {}", self.record_every);
        let _ = writeln!(out, "controller.kind = {}", quote(&self.controller_kind_echo));
        match &self.controller {
            ControllerSpec::OpenLoop => {}
            ControllerSpec::Static { xi1, xi2 } => {
                let _ = writeln!(out, "controller.xi1 = {xi1}");
                let _ = writeln!(out, "controller.xi2 = {xi2}");
            }
            ControllerSpec::Scalar { xi1, xi2, eta } => {
                let _ = writeln!(out, "controller.xi1 = {xi1}");
                let _ = writeln!(out, "controller.xi2 = {xi2}");
                let _ = writeln!(out, "controller.eta = {eta}");
            }
            ControllerSpec::Hybrid { xi1, a, b, c, d, gamma, zeta } => {
                let _ = writeln!(out, "controller.xi1 = {xi1}");
                let fmt_vec = |v: &DVector<f64>| {
                    let items: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                    format!("[{}]", items.join(", "))
                };
                let rows: Vec<String> = (0..a.nrows())
                    .map(|i| {
                        let items: Vec<String> =
                            (0..a.ncols()).map(|j| format!("{}", a[(i, j)])).collect();
                        format!("[{}]", items.join(", "))
                    })
                    .collect();
                let _ = writeln!(out, "controller.a = [{}]", rows.join(", "));
                let _ = writeln!(out, "controller.b = {}", fmt_vec(b));
                let _ = writeln!(out, "controller.c = {}", fmt_vec(c));
                let _ = writeln!(out, "controller.d = {d}");
                let _ = writeln!(out, "controller.gamma = {gamma}");
                let _ = writeln!(out, "controller.zeta = {}", fmt_vec(zeta));
            }
        }
        if let Some(path) = &self.certificate_path {
            let _ = writeln!(out, "controller.certificate = {}", quote(&path.display().to_string()));
        }
        let _ = writeln!(out, "lyapunov.b1 = {}", self.b1);
        let _ = writeln!(out, "lyapunov.delta = {}", self.delta.echo());
        let _ = writeln!(out, "initial.amplitude = {}", self.amplitude);
        for (i, name) in FIELD_NAMES.iter().enumerate() {
            let _ = writeln!(out, "initial.{name} = {}", quote(&self.profiles[i].echo()));
        }
        if let Some(path) = &self.tabulated {
            let _ = writeln!(out, "initial.tabulated = {}", quote(&path.display().to_string()));
        }
        let _ = writeln!(out, "tune.xi1 = [{}, {}]", self.tune_xi1.0, self.tune_xi1.1);
        let _ = writeln!(out, "tune.xi2 = [{}, {}]", self.tune_xi2.0, self.tune_xi2.1);
        let _ = writeln!(out, "tune.resolution = {}", self.tune_resolution);
        if let Some(dir) = &self.out_dir {
            let _ = writeln!(out, "output.directory = {}", quote(&dir.display().to_string()));
        }
        let _ = writeln!(out, "output.snapshots = {}", self.snapshots);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_every_default() {
        let cfg = RunConfig::from_str(
            "[material]\n[controller]\nkind = \"static\"\nxi1 = 1.0\nxi2 = 1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 40);
        assert_eq!(cfg.dt, AutoOr::Auto);
        assert_eq!(cfg.t_final, 10.0);
        assert!(matches!(cfg.controller, ControllerSpec::Static { xi1, xi2 } if xi1 == 1.0 && xi2 == 1.0));
        assert!(cfg.echo().contains("grid.n = 40"));
        assert!(cfg.echo().contains("time.dt = \"auto\""));
    }

    #[test]
    fn echo_reparses_to_the_same_config() {
        let text = "\
[material]
rho = 2.5
alpha1 = 3.75
[grid]
n = 12
[time]
dt = 0.001
T = 2.5
[controller]
kind = \"hybrid\"
xi1 = 1.5
a = [[-2.0, 0.0], [1.0, -1.0]]
b = [1.0, 0.0]
c = [0.5, 0.25]
d = 1.0
[initial]
amplitude = 0.5
z0 = \"sine(2)\"
v1 = \"gaussian(0.4, 0.1)\"
[output]
snapshots = true
";
        let cfg = RunConfig::from_str(text).unwrap();
        let echoed = cfg.echo();
        let reparsed = RunConfig::from_str(&echoed)
            .unwrap_or_else(|e| panic!("echo is not valid TOML: {e}\n{echoed}"));
        assert_eq!(reparsed.echo(), echoed);
        assert_eq!(reparsed.n, 12);
        assert_eq!(reparsed.amplitude, 0.5);
        assert!(matches!(reparsed.controller, ControllerSpec::Hybrid { .. }));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_str("[grid]\nm = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
        assert!(RunConfig::from_str("[grind]\nn = 3\n").is_err());
    }

    #[test]
    fn nonpositive_gains_are_rejected() {
        let err = RunConfig::from_str("[controller]\nkind = \"static\"\nxi1 = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("xi1"), "{err}");
    }

    #[test]
    fn profile_language_parses_and_rejects() {
        assert_eq!(Profile::parse("zero").unwrap(), Profile::Zero);
        assert_eq!(Profile::parse("sine(2)").unwrap(), Profile::Sine(2.0));
        assert_eq!(
            Profile::parse("gaussian(0.5, 0.1)").unwrap(),
            Profile::Gaussian(0.5, 0.1)
        );
        assert!(Profile::parse("sine()").is_err());
        assert!(Profile::parse("triangle(1)").is_err());
    }

    #[test]
    fn inapplicable_controller_keys_are_flagged() {
        let err = RunConfig::from_str("[controller]\nkind = \"static\"\neta = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("eta"), "{err}");
        let err =
            RunConfig::from_str("[controller]\nkind = \"open-loop\"\nxi1 = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("xi1"), "{err}");
    }

    #[test]
    fn delta_accepts_auto_and_numbers_only() {
        let cfg = RunConfig::from_str("[lyapunov]\ndelta = \"auto\"\n").unwrap();
        assert_eq!(cfg.delta, AutoOr::Auto);
        let cfg = RunConfig::from_str("[lyapunov]\ndelta = 0.01\n").unwrap();
        assert_eq!(cfg.delta, AutoOr::Value(0.01));
        assert!(RunConfig::from_str("[lyapunov]\ndelta = \"later\"\n").is_err());
    }
}
