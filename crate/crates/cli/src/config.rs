//! Run configuration: JSON documents merged with command-line overrides.

use std::path::PathBuf;

use sasaki_core::problems;
use sasaki_core::solver::SolverConfig;
use sasaki_core::verify::{self, Level};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Distance,
    Verify,
    IdentityCheck,
}

/// Boundary potentials `φ₀`, `φ₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Boundary {
    /// Spatially constant endpoints.
    Constants { phi0: f64, phi1: f64 },
    /// `0 → a·cos(2πk x_axis)`.
    Cosine {
        amplitude: f64,
        #[serde(default = "one_u32")]
        frequency: u32,
        #[serde(default)]
        axis: usize,
    },
    /// Two seeded band-limited fields (`seed` and `seed + 1`).
    Random {
        seed: u64,
        amplitude: f64,
        #[serde(default = "one_u32")]
        max_mode: u32,
    },
    /// Single-slice grid dumps.
    File { phi0: PathBuf, phi1: PathBuf },
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary::Constants { phi0: 0.0, phi1: 1.0 }
    }
}

/// Right-hand side `f > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Rhs {
    Constant { value: f64 },
    File { path: PathBuf },
}

impl Default for Rhs {
    fn default() -> Self {
        Rhs::Constant { value: 1.0 }
    }
}

fn one_u32() -> u32 {
    1
}

/// The document as written; unset model fields get command-specific defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Command,
    n: Option<usize>,
    grid: Option<Vec<usize>>,
    nt: Option<usize>,
    eps_start: Option<f64>,
    eps_min: Option<f64>,
    eps_factor: Option<f64>,
    newton_tol: Option<f64>,
    max_newton: Option<usize>,
    backtrack: Option<f64>,
    min_step: Option<f64>,
    m_init: Option<f64>,
    m_doublings: Option<u32>,
    #[serde(default)]
    boundary: Boundary,
    #[serde(default)]
    rhs: Rhs,
    output: Option<PathBuf>,
    #[serde(default = "quick")]
    level: Level,
}

fn quick() -> Level {
    Level::Quick
}

/// Fully resolved and validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub grid: Vec<usize>,
    pub solver: SolverConfig,
    pub boundary: Boundary,
    pub rhs: Rhs,
    pub output: PathBuf,
    pub level: Level,
}

pub fn parse_config(json: &str) -> Result<RunConfig, ConfigError> {
    let value: Value = serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))?;
    from_value(value)
}

pub fn from_value(value: Value) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw)
}

/// Overlays `overrides` onto `base` key by key (nested objects are replaced whole).
pub fn merge(base: Value, overrides: Map<String, Value>) -> Result<Value, ConfigError> {
    let mut map = match base {
        Value::Object(m) => m,
        Value::Null => Map::new(),
        _ => return Err(ConfigError::Parse("top level must be a JSON object".into())),
    };
    map.extend(overrides);
    Ok(Value::Object(map))
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let (quick_model, quick_cfg) = verify::quick_setup();
    let (default_grid, default_nt) = match raw.command {
        Command::Verify => (quick_model.grid_dims().to_vec(), quick_cfg.nt),
        _ => (vec![16, 16], SolverConfig::default().nt),
    };
    let grid = raw.grid.unwrap_or(default_grid);
    if grid.is_empty() || !grid.len().is_multiple_of(2) {
        return Err(invalid("grid", "needs an even, nonzero number of axes (two per complex dimension)"));
    }
    if let Some((i, _)) = grid.iter().enumerate().find(|(_, &d)| d < 4) {
        return Err(invalid(&format!("grid[{i}]"), "each axis needs at least 4 points"));
    }
    let n = grid.len() / 2;
    if let Some(given) = raw.n {
        if given != n {
            return Err(invalid("n", format!("{given} disagrees with a grid of {} axes", grid.len())));
        }
    }
    let d = SolverConfig::default();
    let solver = SolverConfig {
        nt: raw.nt.unwrap_or(default_nt),
        eps_start: raw.eps_start.unwrap_or(d.eps_start),
        eps_min: raw.eps_min.unwrap_or(d.eps_min),
        eps_factor: raw.eps_factor.unwrap_or(d.eps_factor),
        newton_tol: raw.newton_tol.unwrap_or(d.newton_tol),
        max_newton: raw.max_newton.unwrap_or(d.max_newton),
        backtrack: raw.backtrack.unwrap_or(d.backtrack),
        min_step: raw.min_step.unwrap_or(d.min_step),
        m_init: raw.m_init.unwrap_or(d.m_init),
        m_doublings: raw.m_doublings.unwrap_or(d.m_doublings),
    };
    // A start above the floor is only meaningful when the floor was raised explicitly.
    let solver = if raw.eps_start.is_none() && solver.eps_min > solver.eps_start {
        SolverConfig { eps_start: solver.eps_min, ..solver }
    } else {
        solver
    };
    validate_solver(&solver)?;
    validate_boundary(&raw.boundary, n)?;
    if let Rhs::Constant { value } = raw.rhs {
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid("rhs.value", "must be positive and finite"));
        }
    }
    let output = raw.output.unwrap_or_else(|| PathBuf::from("out"));
    Ok(RunConfig {
        command: raw.command,
        n,
        grid,
        solver,
        boundary: raw.boundary,
        rhs: raw.rhs,
        output,
        level: raw.level,
    })
}

fn validate_solver(c: &SolverConfig) -> Result<(), ConfigError> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    let unit = |v: f64| v > 0.0 && v < 1.0;
    if c.nt < 2 {
        return Err(invalid("nt", "must be at least 2"));
    }
    if !positive(c.eps_min) {
        return Err(invalid("eps_min", "must be positive"));
    }
    if !positive(c.eps_start) || c.eps_start < c.eps_min {
        return Err(invalid("eps_start", "must be finite and at least eps_min"));
    }
    if !unit(c.eps_factor) {
        return Err(invalid("eps_factor", "must lie in (0, 1)"));
    }
    if !positive(c.newton_tol) {
        return Err(invalid("newton_tol", "must be positive"));
    }
    if c.max_newton == 0 {
        return Err(invalid("max_newton", "must be positive"));
    }
    if !unit(c.backtrack) {
        return Err(invalid("backtrack", "must lie in (0, 1)"));
    }
    if !unit(c.min_step) {
        return Err(invalid("min_step", "must lie in (0, 1)"));
    }
    if !positive(c.m_init) {
        return Err(invalid("m_init", "must be positive"));
    }
    Ok(())
}

fn validate_boundary(b: &Boundary, n: usize) -> Result<(), ConfigError> {
    match *b {
        Boundary::Constants { phi0, phi1 } => {
            if !phi0.is_finite() {
                return Err(invalid("boundary.phi0", "must be finite"));
            }
            if !phi1.is_finite() {
                return Err(invalid("boundary.phi1", "must be finite"));
            }
        }
        Boundary::Cosine { amplitude, frequency, axis } => {
            if frequency == 0 {
                return Err(invalid("boundary.frequency", "must be at least 1"));
            }
            if axis >= 2 * n {
                return Err(invalid("boundary.axis", format!("must be below {}", 2 * n)));
            }
            let curvature = problems::cosine_curvature(amplitude, frequency);
            if !(curvature < 1.0) {
                return Err(invalid(
                    "boundary.amplitude",
                    format!("|a|·π²·k² = {curvature:.4} must stay below 1 for an admissible metric"),
                ));
            }
        }
        Boundary::Random { amplitude, max_mode, .. } => {
            if !(0.0..1.0).contains(&amplitude) {
                return Err(invalid("boundary.amplitude", "must lie in [0, 1) for an admissible metric"));
            }
            if max_mode == 0 {
                return Err(invalid("boundary.max_mode", "must be at least 1"));
            }
        }
        Boundary::File { .. } => {}
    }
    Ok(())
}
