//! Strict run configuration: a single TOML file with typed blocks, unknown
//! keys rejected, and `WESTERLY_`-prefixed environment overrides applied
//! before deserialization (double underscore separates nesting levels, so
//! `WESTERLY_SOLVER__EPS=1e-4` overrides `[solver] eps`).

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use westerly_core::profiles::{GyreSetup, Profile};

pub const ENV_PREFIX: &str = "WESTERLY_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Verify,
    Fields,
    Ode,
    Sweep,
    Convergence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; the command verb is authoritative and must agree when set.
    #[serde(default)]
    pub mode: Option<Mode>,
    pub setup: SetupConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub ode: OdeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub lambda0: f64,
    pub y_span: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub coastline: Profile,
    pub psi0: Profile,
}

fn default_eta() -> f64 {
    0.1
}

impl SetupConfig {
    pub fn build(&self) -> Result<GyreSetup, CliError> {
        GyreSetup::new(
            self.lambda0,
            self.y_span,
            self.eta,
            self.coastline.clone(),
            self.psi0.clone(),
        )
        .map_err(|e| CliError::Config(format!("invalid setup: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// The shot separable profile as initial data (the benchmark oracle).
    Separable,
    /// The built-in compatible profile with left slope `b`.
    Default { b: f64 },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Separable
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub eps: f64,
    pub n_s: usize,
    pub stretching: f64,
    pub dy0: f64,
    pub dy_min_factor: f64,
    pub dy_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let step = westerly_core::march::StepConfig::default();
        Self {
            eps: 1e-3,
            n_s: 256,
            stretching: 3.0,
            dy0: step.dy0,
            dy_min_factor: step.dy_min_factor,
            dy_max: step.dy_max,
            newton_tol: step.newton_tol,
            newton_max_iter: step.newton_max_iter,
        }
    }
}

impl SolverConfig {
    pub fn step_config(&self) -> westerly_core::march::StepConfig {
        westerly_core::march::StepConfig {
            dy0: self.dy0,
            dy_min_factor: self.dy_min_factor,
            dy_max: self.dy_max,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierConfig {
    /// Zone-III band half-width around a(y).
    pub mu: f64,
    /// Doubling-ladder exponent cap: rates 2^0 .. 2^cap are tried.
    pub alpha_ladder_cap: u32,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            mu: 0.1,
            alpha_ladder_cap: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConfig {
    /// λ₀α for the `ode` verb.
    pub alpha_param: f64,
    pub xi_max: f64,
    pub tol: f64,
    /// Optional [lo, hi] bracket for the critical λ₀α scan.
    pub scan: Option<[f64; 2]>,
    pub scan_tol: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            alpha_param: 2.5,
            xi_max: westerly_core::ode::DEFAULT_XI_MAX,
            tol: westerly_core::ode::DEFAULT_ODE_TOL,
            scan: None,
            scan_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// κ values; each row sets ψ⁰ = 1 + κ·y with λ₀ = 1, ν ≡ 1.
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    /// Regularisation ladder, marched one by one and compared pairwise.
    pub eps_ladder: Vec<f64>,
    /// Required bound on successive sup-difference ratios.
    pub ratio_bound: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            eps_ladder: vec![4e-3, 2e-3, 1e-3],
            ratio_bound: 0.6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Latitudes at which physical fields are reconstructed.
    pub levels: Vec<f64>,
    /// Keep every `cadence`-th accepted level in field.csv (1 = all).
    pub cadence: usize,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            levels: vec![0.25, 0.5, 1.0],
            cadence: 1,
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Path to a field.json from a previous solve; when unset the field is
    /// solved inline.
    pub field: Option<PathBuf>,
}

/// Parse an override scalar: integer, float, boolean, then bare string.
fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(v) = raw.parse::<i64>() {
        return toml::Value::Integer(v);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return toml::Value::Float(v);
    }
    if let Ok(v) = raw.parse::<bool>() {
        return toml::Value::Boolean(v);
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(root: &mut toml::Value, path: &[String], scalar: toml::Value) {
    let mut node = root;
    for key in &path[..path.len() - 1] {
        let table = node.as_table_mut();
        let Some(table) = table else { return };
        node = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    if let Some(table) = node.as_table_mut() {
        table.insert(path[path.len() - 1].clone(), scalar);
    }
}

/// Load, apply environment overrides, and strictly deserialize.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut overrides: Vec<(String, String)> = std::env::vars()
        .filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX)
                .map(|rest| (rest.to_string(), v))
        })
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        let path: Vec<String> = key.split("__").map(|p| p.to_lowercase()).collect();
        if path.iter().any(|p| p.is_empty()) {
            continue;
        }
        apply_override(&mut value, &path, parse_scalar(&raw));
    }
    value
        .try_into()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
