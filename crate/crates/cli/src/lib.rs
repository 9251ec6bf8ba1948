//! Scenario runner for `malliavin-lab`: a TOML configuration selects one
//! built-in check suite, whose verdicts and CSV/JSON artifacts are written to
//! an output directory.

pub mod config;
pub mod scenarios;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::ScenarioConfig;
pub use scenarios::{default_config, list_scenarios, ScenarioInfo};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: malliavin_lab::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for usage, configuration and I/O problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if source.is_numerical() => 3,
            _ => 2,
        }
    }
}

/// Attaches the module a core error came from.
pub(crate) trait At<T> {
    fn at(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> At<T> for malliavin_lab::Result<T> {
    fn at(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { module, source })
    }
}

/// One verdict: `value` compared with `threshold` in the sense stated by
/// `detail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: "value <= threshold".into(),
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool, value: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            value,
            threshold: f64::NAN,
            detail: detail.into(),
        }
    }
}

/// A named file body produced by a scenario.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, content: impl Into<String>) -> Self {
        Artifact {
            name: name.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub anchor: String,
    pub config_hash: String,
    /// Kept out of `summary.json` so that file is reproducible; written to
    /// `timing.json` instead.
    #[serde(skip)]
    pub wall_time_s: f64,
    pub checks: Vec<Check>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    pub passed: bool,
}

impl RunReport {
    /// Plain-text table for standard output.
    pub fn render(&self) -> String {
        let mut s = format!(
            "# {}  [{}]\n# config {}\n",
            self.scenario,
            self.anchor,
            &self.config_hash[..16]
        );
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let thr = if c.threshold.is_nan() {
                String::new()
            } else {
                format!(" (<= {:.3e})", c.threshold)
            };
            s.push_str(&format!("{verdict}  {:width$}  {:.4e}{thr}\n", c.name, c.value));
            if c.threshold.is_nan() && !c.detail.is_empty() {
                s.push_str(&format!("      {}\n", c.detail));
            }
        }
        s.push_str(&format!(
            "{} in {:.2} s\n",
            if self.passed { "all checks passed" } else { "some checks failed" },
            self.wall_time_s
        ));
        s
    }
}

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Executes the configured scenario and writes `config.toml`,
/// `summary.json`, `timing.json` and the scenario's CSV files to
/// `config.output.dir`.
pub fn run(config: &ScenarioConfig) -> Result<RunReport, CliError> {
    config.validate()?;
    let start = Instant::now();
    let info = scenarios::info(&config.scenario)?;
    let outcome = scenarios::execute(config)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    if outcome.checks.is_empty() {
        return Err(CliError::Config(format!("scenario {} produced no checks", config.scenario)));
    }

    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut names = vec!["config.toml".to_string()];
    write(dir, "config.toml", &config.to_toml())?;
    for a in &outcome.artifacts {
        write(dir, &a.name, &a.content)?;
        names.push(a.name.clone());
    }
    names.push("summary.json".into());
    let passed = outcome.checks.iter().all(|c| c.passed);
    let report = RunReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        scenario: config.scenario.clone(),
        anchor: info.anchor.to_string(),
        config_hash: config.hash(),
        wall_time_s,
        checks: outcome.checks,
        artifacts: names,
        passed,
    };
    let summary = serde_json::to_string_pretty(&report).expect("report serialises");
    write(dir, "summary.json", &summary)?;
    let timing = serde_json::json!({ "scenario": report.scenario, "wall_time_s": wall_time_s });
    write(dir, "timing.json", &timing.to_string())?;
    Ok(report)
}

fn write(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| CliError::Io { path, source })
}
