//! Runs a configured experiment or study and writes its artifacts.
//!
//! A run writes `diagnostics.csv`, `summary.json` and, for each requested
//! snapshot time, `snapshots/{p,n,phi}_{step}.txt`. A snapshot is taken at
//! the first step whose time reaches the requested one; its header carries
//! the actual time. A study writes `rates.csv` and `study.json`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pnp_core::experiments::RateRow;
use pnp_core::grid::snapshot::write_snapshot;
use pnp_core::{DiagnosticsRecord, ErrorReport, PnpError};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("simulation failed: {0}")]
    Solver(#[from] PnpError),
    #[error("config has no study section")]
    NoStudy,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(ConfigError::Syntax(_)) => "config_syntax",
            CliError::Config(ConfigError::Schema(_)) => "config_schema",
            CliError::Config(ConfigError::Override { .. }) => "config_override",
            CliError::Config(ConfigError::Invalid(_)) => "config_invalid",
            CliError::Read { .. } => "read",
            CliError::Write { .. } => "write",
            CliError::Solver(_) => "solver",
            CliError::NoStudy => "no_study",
            CliError::Pool(_) => "worker_pool",
        }
    }

    /// Machine-readable form printed by the binary on failure.
    pub fn to_json(&self) -> Value {
        let mut error = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Config(ConfigError::Invalid(v)) = self {
            error["violations"] = json!(v);
        }
        json!({ "error": error })
    }
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(wrap)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ErrorSummary {
    pub l2_p: f64,
    pub l2_n: f64,
    pub l2_phi: f64,
    pub h1_p: f64,
    pub h1_n: f64,
    pub h1_phi: f64,
    pub linf_phi: f64,
}

impl From<&ErrorReport> for ErrorSummary {
    fn from(e: &ErrorReport) -> Self {
        ErrorSummary {
            l2_p: e.l2_p,
            l2_n: e.l2_n,
            l2_phi: e.l2_phi,
            h1_p: e.h1_p,
            h1_n: e.h1_n,
            h1_phi: e.h1_phi,
            linf_phi: e.linf_phi,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SnapshotEntry {
    pub requested: f64,
    pub t: f64,
    pub step: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub preset: String,
    pub overrides: Vec<String>,
    pub steps: usize,
    pub t_final: f64,
    pub mass_p: f64,
    pub mass_n: f64,
    /// Smallest density over all steps.
    pub min_density: f64,
    pub max_mass_drift: f64,
    pub peak_newton_iters: usize,
    pub errors: Option<ErrorSummary>,
    pub snapshots: Vec<SnapshotEntry>,
    pub wall_time_s: f64,
    pub config: ExperimentConfig,
}

pub fn run_experiment(cfg: &ExperimentConfig, overrides: &[String]) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let out = &cfg.output_dir;
    let experiment = cfg.experiment()?;
    let tau = experiment.config.tau;

    let mut pending: Vec<f64> = cfg.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    pending.dedup();
    let mut pending = pending.into_iter().peekable();
    let mut snapshots = Vec::new();
    let mut csv = format!("{}\n", DiagnosticsRecord::CSV_HEADER);
    let mut min_density = f64::INFINITY;
    let mut peak = 0;
    let mut write_failure = None;

    let outcome = experiment.run_with(|state, record| {
        writeln!(csv, "{}", record.csv_row()).expect("writing to a String");
        min_density = min_density.min(record.min_p).min(record.min_n);
        peak = peak.max(record.newton_iters_p).max(record.newton_iters_n);
        while let Some(&requested) = pending.peek() {
            if state.t < requested - 1e-9 * tau {
                break;
            }
            pending.next();
            let mut files = Vec::new();
            for (name, field) in [("p", &state.p), ("n", &state.n), ("phi", &state.phi)] {
                let file = format!("snapshots/{name}_{:06}.txt", state.k);
                let mut bytes = Vec::new();
                write_snapshot(&mut bytes, name, state.t, field)?;
                if let Err(e) = write_atomic(&out.join(&file), &bytes) {
                    let message = e.to_string();
                    write_failure = Some(e);
                    return Err(PnpError::Io(std::io::Error::other(message)));
                }
                files.push(file);
            }
            snapshots.push(SnapshotEntry {
                requested,
                t: state.t,
                step: state.k,
                files,
            });
        }
        Ok(())
    });
    if let Some(e) = write_failure {
        return Err(e);
    }
    let outcome = outcome?;
    write_atomic(&out.join("diagnostics.csv"), csv.as_bytes())?;

    let state = &outcome.state;
    let max_mass_drift = outcome
        .records
        .iter()
        .map(|r| {
            ((r.mass_p - state.mass_p) / state.mass_p)
                .abs()
                .max(((r.mass_n - state.mass_n) / state.mass_n).abs())
        })
        .fold(0.0, f64::max);
    let summary = RunSummary {
        preset: cfg.preset.name().to_string(),
        overrides: overrides.to_vec(),
        steps: state.k,
        t_final: state.t,
        mass_p: state.mass_p,
        mass_n: state.mass_n,
        min_density,
        max_mass_drift,
        peak_newton_iters: peak,
        errors: outcome.errors.as_ref().map(ErrorSummary::from),
        snapshots,
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out.join("summary.json"), json.as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelSummary {
    pub param: f64,
    pub errors: [f64; 3],
    pub rates: Option<[f64; 3]>,
    pub peak_iterations: usize,
}

impl From<&RateRow> for LevelSummary {
    fn from(r: &RateRow) -> Self {
        LevelSummary {
            param: r.param,
            errors: r.errors,
            rates: r.rates,
            peak_iterations: r.peak_iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudySummary {
    pub preset: String,
    pub overrides: Vec<String>,
    /// `l2` or `h1`, matching the projection.
    pub norm: String,
    pub levels: Vec<LevelSummary>,
    pub wall_time_s: f64,
    pub config: ExperimentConfig,
}

/// Rate table as CSV text.
pub fn rate_table(rows: &[RateRow]) -> String {
    let mut csv = format!("{}\n", RateRow::CSV_HEADER);
    for row in rows {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    csv
}

pub fn run_convergence_study(cfg: &ExperimentConfig, overrides: &[String]) -> Result<StudySummary, CliError> {
    let start = Instant::now();
    let spec = cfg.study_spec().ok_or(CliError::NoStudy)?;
    let rows = spec.run()?;
    write_atomic(&cfg.output_dir.join("rates.csv"), rate_table(&rows).as_bytes())?;
    let summary = StudySummary {
        preset: cfg.preset.name().to_string(),
        overrides: overrides.to_vec(),
        norm: if spec.variant.is_h1() { "h1" } else { "l2" }.to_string(),
        levels: rows.iter().map(LevelSummary::from).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&cfg.output_dir.join("study.json"), json.as_bytes())?;
    Ok(summary)
}
