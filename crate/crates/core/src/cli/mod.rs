//! Scenario runner behind the `skorokhod` binary.

pub mod artifacts;
mod build;
pub mod config;
mod experiments;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::monotone_ops::OperatorKind;

pub use artifacts::{Check, Outcome, Series};
pub use config::{Experiment, Loaded, Overrides, Scenario};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

/// Exit status for an error: configuration problems are 2, numerical aborts 3.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config { .. }
        | Error::InvalidParameter { .. }
        | Error::DimensionMismatch { .. }
        | Error::StepCondition(_)
        | Error::OutOfDomain { .. } => EXIT_CONFIG,
        _ => EXIT_ABORT,
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub pass: bool,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

/// Runs a scenario file; the output directory defaults to the scenario's
/// `output` field and then to the current directory.
pub fn run_file(path: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<RunReport> {
    let loaded = Loaded::from_path(path)?.resolve(overrides)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| loaded.scenario.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    run_loaded(&loaded, &dir)
}

pub fn run_loaded(loaded: &Loaded, dir: &Path) -> Result<RunReport> {
    let outcome = experiments::run(loaded)?;
    write(loaded, dir, outcome)
}

/// Runs only the operator audit of a scenario.
pub fn audit_file(path: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<RunReport> {
    let mut loaded = Loaded::from_path(path)?;
    loaded.scenario.experiment = Experiment::Audit;
    let loaded = loaded.resolve(overrides)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let outcome = experiments::audit(&loaded)?;
    write(&loaded, &dir, outcome)
}

fn write(loaded: &Loaded, dir: &Path, outcome: Outcome) -> Result<RunReport> {
    let config = loaded.resolved_json();
    let seed = loaded.seed().map(|s| s.to_hex());
    let files = artifacts::write_all(dir, &loaded.scenario.name, &config, seed, &outcome)?;
    Ok(RunReport {
        pass: outcome.pass(),
        checks: outcome.checks,
        files,
    })
}

/// Lines printed by `list-kinds`.
pub fn kinds() -> Vec<String> {
    let mut lines = Vec::new();
    let mut group = |title: &str, names: &[&str]| lines.push(format!("{title}: {}", names.join(", ")));
    group("operator kinds", &OperatorKind::NAMES);
    group("graphs", &["linear", "sign", "power", "stefan", "interval"]);
    group("convex sets", &["box", "ball", "half-space"]);
    group("lipschitz maps", &["linear", "affine", "sine", "tanh"]);
    group("drifts", &["zero", "constant", "linear"]);
    group("diffusions", &["zero", "additive", "multiplicative", "affine"]);
    group("schemes", &["prox", "penalized"]);
    group("experiments", &Experiment::NAMES);
    lines
}
