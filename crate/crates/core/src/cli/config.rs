//! Scenario files: TOML for hand editing, JSON for replaying a summary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monotone_ops::OperatorKind;
use crate::rng::{parse_hex_seed, RngSeed};
use crate::sde_solver::{Diffusion, Drift, SdeScheme};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SolveDet,
    SolveSde,
    Convergence,
    Stability,
    Invariant,
    Audit,
}

impl Experiment {
    pub const NAMES: [&'static str; 6] = ["solve-det", "solve-sde", "convergence", "stability", "invariant", "audit"];

    pub fn is_stochastic(self) -> bool {
        !matches!(self, Experiment::SolveDet | Experiment::Audit)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Quadrature weights of the inner product; defaults to ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Uniform cell space on `(0, 1)`, weights `1 / cells`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    #[serde(flatten)]
    pub kind: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Declared strong monotonicity modulus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub u0: Vec<f64>,
    /// Constant forcing of deterministic problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors; coordinate vectors when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub paths: usize,
    /// Master seed in hex, e.g. `"0x2a"`.
    pub seed: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Tolerances {
    #[serde(default = "tol_identity")]
    pub identity: f64,
    #[serde(default = "tol_vi")]
    pub vi: f64,
    #[serde(default = "tol_cauchy")]
    pub cauchy: f64,
    #[serde(default = "tol_picard")]
    pub picard: f64,
}

fn tol_identity() -> f64 {
    1e-8
}
fn tol_vi() -> f64 {
    1e-8
}
fn tol_cauchy() -> f64 {
    1e-2
}
fn tol_picard() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: tol_identity(),
            vi: tol_vi(),
            cauchy: tol_cauchy(),
            picard: tol_picard(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConvergenceSpec {
    /// Weight of the Picard norm; `2 (C1 + 1)` from the declared constants when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_weight: Option<f64>,
    #[serde(default = "max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "max_ratio")]
    pub max_ratio: f64,
}

fn max_iterations() -> usize {
    12
}
fn max_ratio() -> f64 {
    0.55
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            a_weight: None,
            max_iterations: max_iterations(),
            max_ratio: max_ratio(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct StabilitySpec {
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub times: Vec<f64>,
    #[serde(default = "theta")]
    pub theta: f64,
    #[serde(default = "slack")]
    pub slack: f64,
    /// Graph pair `[x0, y0]` for the drift bound; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "drift_checks")]
    pub drift_checks: usize,
}

fn theta() -> f64 {
    0.9
}
fn slack() -> f64 {
    1.1
}
fn drift_checks() -> usize {
    40
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSpec {
    Gaussian { mean: f64, scale: f64 },
    HalfGaussian { lo: f64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct InvariantSpec {
    /// Defaults to `10 / beta0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initials: Option<Vec<Vec<f64>>>,
    #[serde(default = "stationarity_tol")]
    pub stationarity_tol: f64,
    #[serde(default = "floor_factor")]
    pub floor_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default = "ks_tol")]
    pub ks_tol: f64,
}

fn stationarity_tol() -> f64 {
    0.02
}
fn floor_factor() -> f64 {
    3.0
}
fn ks_tol() -> f64 {
    0.02
}

impl Default for InvariantSpec {
    fn default() -> Self {
        InvariantSpec {
            burn_in: None,
            initials: None,
            stationarity_tol: stationarity_tol(),
            floor_factor: floor_factor(),
            oracle: None,
            ks_tol: ks_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    pub h0: Vec<f64>,
    pub r0: f64,
    pub a1: f64,
    pub a2: f64,
    #[serde(default = "audit_samples")]
    pub samples: usize,
}

fn audit_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub experiment: Experiment,
    #[serde(default)]
    pub space: SpaceSpec,
    pub operator: OperatorSpec,
    pub input: InputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "zero_drift")]
    pub drift: Drift,
    #[serde(default = "zero_diffusion")]
    pub diffusion: Diffusion,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default = "prox")]
    pub scheme: SdeScheme,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<InvariantSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSpec>,
    /// Output directory; not part of the resolved configuration.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

fn zero_drift() -> Drift {
    Drift::Zero
}
fn zero_diffusion() -> Diffusion {
    Diffusion::Zero
}
fn prox() -> SdeScheme {
    SdeScheme::Prox
}

/// Command-line overrides of scenario fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<String>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
}

/// A parsed scenario together with its source text, kept for line lookups.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub scenario: Scenario,
    source: Option<String>,
}

impl Loaded {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let (field, line) = diagnose(text, e.message(), e.span().map(|s| s.start));
            Error::Config {
                field,
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        Ok(Loaded {
            scenario,
            source: Some(text.to_string()),
        })
    }

    /// Accepts a bare scenario or a run summary embedding one under `config`.
    pub fn from_json(text: &str) -> Result<Self> {
        let json_error = |e: serde_json::Error| Error::Config {
            field: "scenario".into(),
            line: Some(e.line()),
            message: e.to_string(),
        };
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
        if let Some(config) = value.get_mut("config") {
            value = config.take();
        }
        let scenario: Scenario = serde_json::from_value(value).map_err(|e| Error::Config {
            field: "scenario".into(),
            line: None,
            message: e.to_string(),
        })?;
        Ok(Loaded { scenario, source: None })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("scenario", format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    /// Attaches the line of `table.key` (or of `[table]`) in the source.
    pub fn locate(&self, field: &str, message: impl Into<String>) -> Error {
        let line = self.source.as_deref().and_then(|s| find_field(s, field));
        Error::Config {
            field: field.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Applies overrides and checks the cross-field invariants.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self> {
        let sc = &mut self.scenario;
        if let Some(steps) = overrides.steps {
            sc.grid.steps = steps;
        }
        if overrides.seed.is_some() || overrides.paths.is_some() {
            let ensemble = sc.ensemble.get_or_insert(EnsembleSpec {
                paths: 1,
                seed: String::new(),
            });
            if let Some(seed) = &overrides.seed {
                ensemble.seed = seed.clone();
            }
            if let Some(paths) = overrides.paths {
                ensemble.paths = paths;
            }
        }
        if let Some(ensemble) = &mut sc.ensemble {
            match parse_hex_seed(&ensemble.seed) {
                Some(master) => ensemble.seed = RngSeed::new(master).to_hex(),
                None => return Err(self.locate("ensemble.seed", "expected a hex seed such as \"0x2a\"")),
            }
        }
        let sc = &self.scenario;
        if sc.version != SCHEMA_VERSION {
            return Err(self.locate("version", format!("unsupported schema version, expected {SCHEMA_VERSION}")));
        }
        if !(sc.grid.horizon > 0.0 && sc.grid.horizon.is_finite()) || sc.grid.steps == 0 {
            return Err(self.locate("grid", "needs a positive horizon and at least one step"));
        }
        if sc.experiment.is_stochastic() && sc.ensemble.is_none() {
            return Err(self.locate("ensemble", "stochastic experiments need [ensemble] with paths and seed"));
        }
        if sc.experiment.is_stochastic() && sc.noise.is_none() {
            return Err(self.locate("noise", "stochastic experiments need [noise]"));
        }
        if sc.ensemble.as_ref().is_some_and(|e| e.paths == 0) {
            return Err(self.locate("ensemble.paths", "must be positive"));
        }
        if sc.name.is_empty() || sc.name.contains(['/', '\\']) {
            return Err(self.locate("name", "must be a non-empty file stem"));
        }
        let missing = match sc.experiment {
            Experiment::Stability if sc.stability.is_none() => Some("stability"),
            Experiment::Audit if sc.audit.is_none() => Some("audit"),
            _ => None,
        };
        if let Some(table) = missing {
            return Err(self.locate(table, format!("experiment needs a [{table}] table")));
        }
        Ok(self)
    }

    pub fn seed(&self) -> Option<RngSeed> {
        self.scenario
            .ensemble
            .as_ref()
            .and_then(|e| parse_hex_seed(&e.seed))
            .map(RngSeed::new)
    }

    pub fn resolved_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.scenario).expect("scenario serializes")
    }
}

/// Names the offending field of a TOML deserialization error and its line.
fn diagnose(source: &str, message: &str, offset: Option<usize>) -> (String, Option<usize>) {
    let Some(offset) = offset else {
        return ("scenario".into(), None);
    };
    let offset = offset.min(source.len());
    let line_no = source[..offset].matches('\n').count() + 1;
    let line = source.lines().nth(line_no - 1).unwrap_or("");
    let line_end = source[offset..].find('\n').map_or(source.len(), |i| offset + i);
    let table = source[..line_end]
        .lines()
        .rev()
        .find_map(table_header)
        .unwrap_or_default();
    let quoted = |prefix: &str| {
        message
            .find(prefix)
            .and_then(|i| message[i + prefix.len()..].split('`').next())
            .map(str::to_string)
    };
    let mut line_no = line_no;
    let key = if let Some(name) = quoted("missing field `") {
        Some(name)
    } else if let Some(name) = quoted("unknown field `") {
        Some(name)
    } else if let Some(variant) = quoted("unknown variant `") {
        // The variant is a value; its key is on the line that holds it.
        let needle = format!("\"{variant}\"");
        let hit = source.lines().enumerate().skip(line_no - 1).find(|(_, l)| l.contains(&needle));
        hit.and_then(|(i, l)| {
            line_no = i + 1;
            line_key(l)
        })
    } else {
        line_key(line)
    };
    let field = match (table.is_empty(), key) {
        (true, Some(k)) => k,
        (false, Some(k)) => format!("{table}.{k}"),
        (false, None) => table,
        (true, None) => "scenario".into(),
    };
    (field, Some(line_no))
}

fn table_header(line: &str) -> Option<String> {
    let t = line.trim();
    (t.starts_with('[') && t.ends_with(']')).then(|| t.trim_matches(|c| c == '[' || c == ']').trim().to_string())
}

fn line_key(line: &str) -> Option<String> {
    let (key, _) = line.split_once('=')?;
    let key = key.trim();
    (!key.is_empty() && !key.starts_with('#')).then(|| key.to_string())
}

fn find_field(source: &str, field: &str) -> Option<usize> {
    let (table, key) = match field.rsplit_once('.') {
        Some((t, k)) => (t, Some(k)),
        None => (field, None),
    };
    let mut current = String::new();
    for (i, line) in source.lines().enumerate() {
        if let Some(t) = table_header(line) {
            current = t;
            if current == table && key.is_none() {
                return Some(i + 1);
            }
            continue;
        }
        let Some(k) = line_key(line) else { continue };
        let hit = match key {
            Some(key) => current == table && k == key,
            None => current.is_empty() && k == table,
        };
        if hit {
            return Some(i + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const OBSTACLE: &str = r#"
version = 1
name = "obstacle"
experiment = "solve-det"

[operator]
kind = "scalar-graph"
graph = "interval"
lo = 0.0
hi = inf

[input]
u0 = [1.0]
forcing = [-1.0]

[grid]
horizon = 2.0
steps = 2000
"#;

    #[test]
    fn parses_obstacle_scenario() {
        let l = Loaded::from_toml(OBSTACLE).unwrap().resolve(&Overrides::default()).unwrap();
        assert_eq!(l.scenario.experiment, Experiment::SolveDet);
        assert_eq!(l.scenario.scheme, SdeScheme::Prox);
    }

    #[test]
    fn unknown_kind_names_the_field() {
        let text = OBSTACLE.replace("\"scalar-graph\"", "\"foo\"");
        match Loaded::from_toml(&text) {
            Err(Error::Config { field, line, .. }) => {
                assert_eq!(field, "operator.kind");
                assert_eq!(line, Some(7));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_and_unknown_fields() {
        let text = OBSTACLE.replace("steps = 2000", "");
        let Err(Error::Config { field, .. }) = Loaded::from_toml(&text) else { panic!() };
        assert_eq!(field, "grid.steps");
        let text = OBSTACLE.replace("steps = 2000", "steps = 2000\nstpes = 3");
        let Err(Error::Config { field, line, .. }) = Loaded::from_toml(&text) else { panic!() };
        assert_eq!((field.as_str(), line), ("grid.stpes", Some(19)));
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        let text = format!("{OBSTACLE}\n[ensemble]\npaths = 3\nseed = \"0x2A\"\n");
        let l = Loaded::from_toml(&text).unwrap().resolve(&Overrides::default()).unwrap();
        assert_eq!(l.scenario.ensemble.as_ref().unwrap().seed, "0x000000000000002a");
        let json = serde_json::to_string(&serde_json::json!({ "config": l.resolved_json() })).unwrap();
        let back = Loaded::from_json(&json).unwrap();
        assert_eq!(back.scenario, l.scenario);
    }

    #[test]
    fn stochastic_runs_need_a_seed() {
        let text = OBSTACLE.replace("solve-det", "solve-sde");
        let Err(Error::Config { field, .. }) = Loaded::from_toml(&text).unwrap().resolve(&Overrides::default()) else {
            panic!()
        };
        assert_eq!(field, "ensemble");
        let bad = Overrides {
            seed: Some("xyz".into()),
            ..Overrides::default()
        };
        assert!(Loaded::from_toml(OBSTACLE).unwrap().resolve(&bad).is_err());
    }
}
