use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use malliavin_lab::pathspace::{Direction, Grid};

use crate::CliError;

/// One scenario invocation. Every section is optional in the file; missing
/// keys take the scenario's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub harness: HarnessConfig,
    pub model: ModelConfig,
    #[serde(default, rename = "direction", skip_serializing_if = "Vec::is_empty")]
    pub directions: Vec<DirectionConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub dim: usize,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub eps_schedule: Vec<f64>,
    /// Exponent of the BSDE quotient errors.
    pub p: f64,
    /// Exponent of the Wiener-functional quotient errors.
    pub q: f64,
    pub degree: usize,
    pub ridge: f64,
    pub bump_cells: usize,
}

/// Coefficients of the shipped BSDE scenarios: affine driver
/// `α + βy + γz`, quadratic driver `(c/2)z²` with terminal `aW_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// A Cameron-Martin direction by its density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DirectionConfig {
    /// `ḣ = value`.
    Constant { value: Vec<f64> },
    /// `ḣ = intercept + slope·t`.
    Linear { intercept: Vec<f64>, slope: Vec<f64> },
    /// `ḣ^component = value` on `[start, end]`.
    Indicator { component: usize, start: f64, end: f64, value: f64 },
    /// Unit-mass bump on `[center − width, center]`.
    Bump { component: usize, center: f64, width: f64 },
}

impl DirectionConfig {
    pub fn build(&self, grid: &Grid, dim: usize) -> malliavin_lab::Result<Direction> {
        match self {
            DirectionConfig::Constant { value } => {
                check_len(value.len(), dim)?;
                Direction::constant(grid, value)
            }
            DirectionConfig::Linear { intercept, slope } => {
                check_len(intercept.len(), dim)?;
                check_len(slope.len(), dim)?;
                Direction::from_fn(grid, dim, |t| intercept.iter().zip(slope).map(|(a, b)| a + b * t).collect())
            }
            DirectionConfig::Indicator {
                component,
                start,
                end,
                value,
            } => Direction::indicator(grid, dim, *component, *start, *end, *value),
            DirectionConfig::Bump { component, center, width } => {
                Direction::bump(grid, dim, *component, *center, *width)
            }
        }
    }
}

fn check_len(got: usize, expected: usize) -> malliavin_lab::Result<()> {
    if got != expected {
        return Err(malliavin_lab::Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

// Mirror of the config with every key optional, so parse errors keep their
// line numbers and defaults can be layered afterwards.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    grid: Option<RawGrid>,
    ensemble: Option<RawEnsemble>,
    harness: Option<RawHarness>,
    model: Option<RawModel>,
    #[serde(default, rename = "direction")]
    directions: Option<Vec<DirectionConfig>>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: Option<f64>,
    n_steps: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    dim: Option<usize>,
    n_paths: Option<usize>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarness {
    eps_schedule: Option<Vec<f64>>,
    p: Option<f64>,
    q: Option<f64>,
    degree: Option<usize>,
    ridge: Option<f64>,
    bump_cells: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    c: Option<f64>,
    a: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

fn layer<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ScenarioConfig {
    /// Parses a TOML file body, fills defaults from the named scenario and
    /// validates the result.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = crate::scenarios::default_config(&raw.scenario)?;
        if let Some(g) = raw.grid {
            layer(&mut cfg.grid.horizon, g.horizon);
            layer(&mut cfg.grid.n_steps, g.n_steps);
        }
        if let Some(e) = raw.ensemble {
            layer(&mut cfg.ensemble.dim, e.dim);
            layer(&mut cfg.ensemble.n_paths, e.n_paths);
            layer(&mut cfg.ensemble.seed, e.seed);
        }
        if let Some(h) = raw.harness {
            layer(&mut cfg.harness.eps_schedule, h.eps_schedule);
            layer(&mut cfg.harness.p, h.p);
            layer(&mut cfg.harness.q, h.q);
            layer(&mut cfg.harness.degree, h.degree);
            layer(&mut cfg.harness.ridge, h.ridge);
            layer(&mut cfg.harness.bump_cells, h.bump_cells);
        }
        if let Some(m) = raw.model {
            layer(&mut cfg.model.alpha, m.alpha);
            layer(&mut cfg.model.beta, m.beta);
            layer(&mut cfg.model.gamma, m.gamma);
            layer(&mut cfg.model.c, m.c);
            layer(&mut cfg.model.a, m.a);
        }
        layer(&mut cfg.directions, raw.directions);
        if let Some(o) = raw.output {
            layer(&mut cfg.output.dir, o.dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical serialisation, hex encoded. The output
    /// directory is left out: where results go does not change them.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        Sha256::digest(canonical.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: &str| Err(CliError::Config(format!("field `{field}`: {why}")));
        if !(self.grid.horizon > 0.0) || !self.grid.horizon.is_finite() {
            return bad("grid.horizon", "must be positive and finite");
        }
        if self.grid.n_steps == 0 {
            return bad("grid.n_steps", "must be at least 1");
        }
        if self.ensemble.dim == 0 {
            return bad("ensemble.dim", "must be at least 1");
        }
        if self.ensemble.n_paths < 2 {
            return bad("ensemble.n_paths", "must be at least 2");
        }
        let eps = &self.harness.eps_schedule;
        if eps.len() < 4 {
            return bad("harness.eps_schedule", "needs at least 4 values");
        }
        if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) || eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad("harness.eps_schedule", "must be positive and strictly decreasing");
        }
        if !(self.harness.p > 1.0) || !self.harness.p.is_finite() {
            return bad("harness.p", "must exceed 1");
        }
        if !(self.harness.q >= 1.0) || !self.harness.q.is_finite() {
            return bad("harness.q", "must be at least 1");
        }
        if self.harness.degree == 0 || self.harness.degree > 8 {
            return bad("harness.degree", "must lie in 1..=8");
        }
        if !(self.harness.ridge >= 0.0) || !self.harness.ridge.is_finite() {
            return bad("harness.ridge", "must be non-negative");
        }
        if self.harness.bump_cells == 0 {
            return bad("harness.bump_cells", "must be at least 1");
        }
        let m = &self.model;
        if [m.alpha, m.beta, m.gamma, m.c, m.a].iter().any(|v| !v.is_finite()) {
            return bad("model", "coefficients must be finite");
        }
        if m.c == 0.0 {
            return bad("model.c", "must be non-zero");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        for info in crate::scenarios::list_scenarios() {
            let mut cfg = crate::scenarios::default_config(info.name).unwrap();
            cfg.directions.push(DirectionConfig::Indicator {
                component: 0,
                start: 0.0,
                end: 0.5,
                value: 1.0,
            });
            let text = cfg.to_toml();
            let back = ScenarioConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg, "{text}");
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = ScenarioConfig::from_toml("scenario = \"affine\"\n[ensemble]\nn_paths = 500\n").unwrap();
        let mut expected = crate::scenarios::default_config("affine").unwrap();
        expected.ensemble.n_paths = 500;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let err = ScenarioConfig::from_toml("scenario = \"affine\"\n[grid]\nn_stepz = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_stepz") && msg.contains('3'), "{msg}");
    }

    #[test]
    fn zero_steps_name_the_field() {
        let err = ScenarioConfig::from_toml("scenario = \"affine\"\n[grid]\nn_steps = 0\n").unwrap_err();
        assert!(err.to_string().contains("grid.n_steps"), "{err}");
    }

    #[test]
    fn unknown_scenario_is_rejected() {
        assert!(ScenarioConfig::from_toml("scenario = \"nope\"\n").is_err());
    }

    #[test]
    fn hash_tracks_the_experiment_not_the_output_dir() {
        let cfg = crate::default_config("affine").unwrap();
        let mut moved = cfg.clone();
        moved.output.dir = PathBuf::from("elsewhere");
        assert_eq!(moved.hash(), cfg.hash());
        let mut reseeded = cfg.clone();
        reseeded.ensemble.seed += 1;
        assert_ne!(reseeded.hash(), cfg.hash());
    }
}
