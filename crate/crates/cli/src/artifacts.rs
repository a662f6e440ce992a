//! Byte-stable artifact formats: the time-series CSV, state snapshots, the
//! three-section run report, and certificate files. All floats are written
//! as `{:.16e}` (17 significant digits), which round-trips `f64` exactly,
//! so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use heatbeam::{format_certificate, parse_certificate, MkyCertificate, MkyError, Trajectory};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Certificate(#[from] MkyError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn cell(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TIMESERIES_HEADER: &str =
    "t,E_h,E_hybrid,L_h,w1_end,w2_end,q_norm,dissipation_residual";

/// Renders the run CSV. `l_h` carries the weighted-functional column when a
/// weight was resolved; missing columns are left empty, never zero-filled.
pub fn render_timeseries(traj: &Trajectory, l_h: Option<&[f64]>) -> String {
    let count = traj.times.len();
    let mut out = String::with_capacity(count * 160);
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    let opt = |col: Option<&Vec<f64>>, i: usize| -> String {
        col.map_or_else(String::new, |v| cell(v[i]))
    };
    for i in 0..count {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            cell(traj.times[i]),
            cell(traj.e_h[i]),
            opt(traj.e_hybrid.as_ref(), i),
            l_h.map_or_else(String::new, |v| cell(v[i])),
            cell(traj.w1_end[i]),
            cell(traj.w2_end[i]),
            opt(traj.q_norm.as_ref(), i),
            cell(traj.residuals[i]),
        );
    }
    out
}

/// Parsed time-series columns; optional columns are `None` when every cell
/// of the column is empty.
#[derive(Debug, Default)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub e_h: Vec<f64>,
    pub e_hybrid: Option<Vec<f64>>,
    pub l_h: Option<Vec<f64>>,
    pub w1_end: Vec<f64>,
    pub w2_end: Vec<f64>,
    pub q_norm: Option<Vec<f64>>,
    pub residuals: Vec<f64>,
}

pub fn read_timeseries(path: &Path) -> Result<TimeSeries, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TIMESERIES_HEADER => {}
        Some((_, header)) => {
            return Err(ArtifactError::Malformed {
                path: path.to_owned(),
                line: 1,
                message: format!("unexpected header '{header}'"),
            })
        }
        None => {
            return Err(ArtifactError::Malformed {
                path: path.to_owned(),
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut series = TimeSeries::default();
    let mut e_hybrid = Vec::new();
    let mut l_h = Vec::new();
    let mut q_norm = Vec::new();
    let mut any = [false; 3];
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(ArtifactError::Malformed {
                path: path.to_owned(),
                line: idx + 1,
                message: format!("expected 8 columns, found {}", parts.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, ArtifactError> {
            s.parse::<f64>().map_err(|_| ArtifactError::Malformed {
                path: path.to_owned(),
                line: idx + 1,
                message: format!("'{s}' is not a number"),
            })
        };
        let parse_opt = |s: &str, store: &mut Vec<f64>, flag: &mut bool| -> Result<(), ArtifactError> {
            if s.is_empty() {
                store.push(f64::NAN);
            } else {
                *flag = true;
                store.push(parse(s)?);
            }
            Ok(())
        };
        series.t.push(parse(parts[0])?);
        series.e_h.push(parse(parts[1])?);
        parse_opt(parts[2], &mut e_hybrid, &mut any[0])?;
        parse_opt(parts[3], &mut l_h, &mut any[1])?;
        series.w1_end.push(parse(parts[4])?);
        series.w2_end.push(parse(parts[5])?);
        parse_opt(parts[6], &mut q_norm, &mut any[2])?;
        series.residuals.push(parse(parts[7])?);
    }
    series.e_hybrid = any[0].then_some(e_hybrid);
    series.l_h = any[1].then_some(l_h);
    series.q_norm = any[2].then_some(q_norm);
    Ok(series)
}

/// Full state rows for snapshot output: `t, x0, x1, ...`.
pub fn render_states(times: &[f64], states: &[nalgebra::DVector<f64>]) -> String {
    let dim = states.first().map_or(0, nalgebra::DVector::len);
    let mut out = String::from("t");
    for i in 0..dim {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (t, x) in times.iter().zip(states) {
        out.push_str(&cell(*t));
        for v in x.iter() {
            out.push(',');
            out.push_str(&cell(*v));
        }
        out.push('\n');
    }
    out
}

pub fn read_states(path: &Path) -> Result<(Vec<f64>, Vec<nalgebra::DVector<f64>>), ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let mut values = Vec::new();
        for part in line.split(',') {
            values.push(part.parse::<f64>().map_err(|_| ArtifactError::Malformed {
                path: path.to_owned(),
                line: idx + 1,
                message: format!("'{part}' is not a number"),
            })?);
        }
        if values.is_empty() {
            continue;
        }
        times.push(values[0]);
        states.push(nalgebra::DVector::from_vec(values[1..].to_vec()));
    }
    Ok((times, states))
}

/// One `== checks ==` line: a stable name, a verdict, and a detail string
/// that is part of the byte-stable artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn render(&self) -> String {
        format!(
            "{} = {} ({})",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// The plain-text report: effective config, results in insertion order,
/// and the check verdicts.
pub struct Report {
    pub config_echo: String,
    pub results: Vec<(String, String)>,
    pub checks: Vec<CheckLine>,
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = String::from("== config ==\n");
        out.push_str(&self.config_echo);
        out.push_str("\n== results ==\n");
        for (key, value) in &self.results {
            let _ = writeln!(out, "{key} = {value}");
        }
        out.push_str("\n== checks ==\n");
        for check in &self.checks {
            out.push_str(&check.render());
            out.push('\n');
        }
        out
    }
}

/// Extracts the non-empty lines of one `== name ==` section of a stored
/// report.
pub fn read_report_section(path: &Path, name: &str) -> Result<Vec<String>, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let header = format!("== {name} ==");
    let mut inside = false;
    let mut lines = Vec::new();
    for line in text.lines() {
        if line == header {
            inside = true;
            continue;
        }
        if inside {
            if line.starts_with("== ") {
                break;
            }
            if !line.is_empty() {
                lines.push(line.to_owned());
            }
        }
    }
    if !inside {
        return Err(ArtifactError::Malformed {
            path: path.to_owned(),
            line: 1,
            message: format!("report has no `{header}` section"),
        });
    }
    Ok(lines)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ArtifactError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub fn write_certificate(path: &Path, cert: &MkyCertificate) -> Result<(), ArtifactError> {
    write_file(path, &format_certificate(cert))
}

pub fn read_certificate(path: &Path) -> Result<MkyCertificate, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_certificate(&text)?)
}
