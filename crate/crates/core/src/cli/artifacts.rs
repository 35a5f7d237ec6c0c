//! Run artifacts: a CSV series, a JSON summary and a provenance record.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(header: Vec<String>) -> Self {
        Series { header, rows: Vec::new() }
    }

    /// 17 significant digits, so equal runs give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            pass: value <= threshold,
            value,
            threshold,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Outcome {
    #[serde(skip)]
    pub series: Option<Series>,
    pub checks: Vec<Check>,
    pub estimates: BTreeMap<String, f64>,
    pub reports: BTreeMap<String, serde_json::Value>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn report(&mut self, name: &str, value: &impl Serialize) {
        self.reports
            .insert(name.into(), serde_json::to_value(value).expect("reports serialize"));
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    experiment: &'a serde_json::Value,
    pass: bool,
    checks: &'a [Check],
    estimates: &'a BTreeMap<String, f64>,
    reports: &'a BTreeMap<String, serde_json::Value>,
    config: &'a serde_json::Value,
}

#[derive(Serialize)]
struct Provenance<'a> {
    config_sha256: String,
    seed: Option<String>,
    version: &'a str,
    schema_version: u32,
    artifacts: Vec<String>,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Writes `<name>.series.csv` (when present), `<name>.summary.json` and
/// `<name>.provenance.json`, each through a temporary file and a rename.
pub fn write_all(
    dir: &Path,
    name: &str,
    config: &serde_json::Value,
    seed: Option<String>,
    outcome: &Outcome,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    if let Some(series) = &outcome.series {
        files.push(write_atomic(dir, &format!("{name}.series.csv"), &series.to_csv())?);
    }
    let summary = Summary {
        name,
        experiment: &config["experiment"],
        pass: outcome.pass(),
        checks: &outcome.checks,
        estimates: &outcome.estimates,
        reports: &outcome.reports,
        config,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    files.push(write_atomic(dir, &format!("{name}.summary.json"), &text)?);
    let mut artifacts: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    artifacts.push(format!("{name}.provenance.json"));
    let provenance = Provenance {
        config_sha256: config_hash(config),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        schema_version: super::config::SCHEMA_VERSION,
        artifacts,
    };
    let text = serde_json::to_string_pretty(&provenance).expect("provenance serializes") + "\n";
    files.push(write_atomic(dir, &format!("{name}.provenance.json"), &text)?);
    Ok(files)
}

fn write_atomic(dir: &Path, file: &str, contents: &str) -> Result<PathBuf> {
    let target = dir.join(file);
    let tmp = dir.join(format!(".{file}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, &target)?;
    Ok(target)
}
