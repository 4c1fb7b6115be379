//! Config-file schemas (JSON, or TOML by extension). Unknown keys are hard
//! errors; every file carries `"schema": 1`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use jacobi_core::freeprob::MeasureExpr;
use jacobi_core::harness::{DeclaredConstants, Experiment, ParamRule, ZerosKind};
use jacobi_core::model::Domain;
use jacobi_core::sde::Scheme;

use crate::{CliError, CliResult};

fn default_schema() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSpec {
    Explicit { p: f64, q: f64 },
    Multiplicities { k1: f64, k2: f64, k3: f64 },
}

impl ParamsSpec {
    pub fn resolve(&self, n: usize) -> CliResult<(f64, f64, f64)> {
        match self {
            ParamsSpec::Explicit { p, q } => Ok((1.0, *p, *q)),
            ParamsSpec::Multiplicities { k1, k2, k3 } => {
                let params = jacobi_core::model::params_from_multiplicities(*k1, *k2, *k3, n)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok((params.kappa, params.p, params.q))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeRunConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub domain: Domain,
    pub params: ParamsSpec,
    pub x0: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub n_out: Option<usize>,
    #[serde(default)]
    pub t_out: Option<Vec<f64>>,
    #[serde(default)]
    pub rtol: Option<f64>,
    #[serde(default)]
    pub atol: Option<f64>,
    #[serde(default)]
    pub track_lyapunov: bool,
    #[serde(default)]
    pub track_discriminant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeRunConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub domain: Domain,
    pub params: ParamsSpec,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub kappa: f64,
    pub steps: u64,
    pub replicas: u32,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    /// Record every k-th step in the exported path (replica 0).
    #[serde(default = "default_record_every")]
    pub record_every: u32,
    /// Moment order of the replica summary.
    #[serde(default = "default_moment_order")]
    pub moment_order: usize,
    /// Window for the replica summary moments (defaults to a = 1, b = 0).
    #[serde(default)]
    pub window: Option<Window>,
    /// Martingale diagnostic orders to evaluate on replica 0.
    #[serde(default)]
    pub martingale_orders: Vec<usize>,
}

fn default_scheme() -> Scheme {
    Scheme::EulerProjected
}

fn default_record_every() -> u32 {
    1
}

fn default_moment_order() -> usize {
    6
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum LimitCheckConfig {
    /// Full dynamics experiment (frozen or stochastic).
    Experiment(Experiment),
    /// Rescaled Jacobi-zero moments against their stationary limits.
    ZerosExperiment {
        kind: ZerosKind,
        n_list: Vec<usize>,
        param_rule: ParamRule,
        moment_order: usize,
        #[serde(default)]
        declared: DeclaredConstants,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentOracleConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub domain: Domain,
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub n: usize,
    /// Initial moments `m_0..m_L` (`m_0 = 1`).
    pub s0: Vec<f64>,
    pub t_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeprobEvalConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub expr: MeasureExpr,
    pub order: usize,
}

/// Loads a config file as JSON, or TOML when the extension says so.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let is_toml = path
        .extension()
        .map(|ext| ext.eq_ignore_ascii_case("toml"))
        .unwrap_or(false);
    if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn require_schema(schema: u32) -> CliResult<()> {
    if schema != 1 {
        return Err(CliError::Config(format!(
            "unsupported schema version {schema} (expected 1)"
        )));
    }
    Ok(())
}
