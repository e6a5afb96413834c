//! Error mapping, config loading and output helpers shared by subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use irtrack::format::{fmt_f64, to_json_pretty};
use irtrack::io::read_json;
use irtrack::sensor::NoiseModel;
use irtrack::tracking::TrackerConfig;
use irtrack::Error;
use serde::Serialize;

use crate::{Global, CONFIG_ENV};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_degenerate() => 4,
            Error::DefinitionFailed { .. } => 4,
            Error::InvalidArgument(_) | Error::OutOfRange { .. } => 2,
            Error::Format(_) | Error::Io(_) => 3,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Tracker settings from `--config`, else the file named by the environment
/// variable, else defaults.
pub fn tracker_config(g: &Global) -> CliResult<TrackerConfig> {
    let path = g.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => {
            let cfg: TrackerConfig = read_json(&p)?;
            checked_noise(cfg.noise)?;
            Ok(cfg)
        }
        None => Ok(TrackerConfig::default()),
    }
}

/// A noise model from file, or the default one.
pub fn noise_model(path: Option<&Path>) -> CliResult<NoiseModel> {
    match path {
        Some(p) => checked_noise(read_json(p)?),
        None => Ok(NoiseModel::default()),
    }
}

/// Constant models may be noiseless; anything else must keep sigma positive.
fn checked_noise(m: NoiseModel) -> CliResult<NoiseModel> {
    let [lo, hi] = m.valid_range;
    if m.b == 0.0 && m.c == 0.0 && m.a >= 0.0 && lo > 0.0 && hi > lo && hi.is_finite() {
        return Ok(m);
    }
    Ok(NoiseModel::new(m.a, m.b, m.c, m.valid_range)?)
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError { code: 1, message: format!("{}: {e}", dir.display()) })?;
            }
            fs::write(p, text).map_err(|e| CliError { code: 1, message: format!("{}: {e}", p.display()) })
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError { code: 1, message: e.to_string() })
        }
    }
}

/// Pretty JSON summary to `path`, if given.
pub fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult {
    if let Some(p) = path {
        let mut text = to_json_pretty(value)?;
        text.push('\n');
        emit(Some(p), &text)?;
    }
    Ok(())
}

pub fn f(x: f64) -> String {
    fmt_f64(x)
}

pub fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Reads a two-column numeric CSV with a header line.
pub fn read_pairs(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::input(format!("{}:{}: expected two numbers, got '{line}'", path.display(), i + 1));
        let mut cells = line.split(',').map(str::trim);
        let x: f64 = cells.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let y: f64 = cells.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        if cells.next().is_some() {
            return Err(bad());
        }
        a.push(x);
        b.push(y);
    }
    Ok((a, b))
}
