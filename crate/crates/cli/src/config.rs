//! Scenario configuration: a flat TOML table plus `--set key=value` overrides.

use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use crate::CliError;

pub const SCHEMA: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Diffusion1d,
    Smoluchowski,
    Ou,
    Kramers,
    RandomwalkNd,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Lightcone,
    AppendixB,
    Simplex,
}

/// Every key is optional; scenario defaults fill the gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema: Option<i64>,
    pub scenario: Option<ScenarioName>,
    pub eps: Option<f64>,
    pub eps_grid: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub report_every: Option<usize>,
    pub trim_tol: Option<f64>,
    pub h: Option<f64>,
    pub h_diag: Option<Vec<f64>>,
    pub chart: Option<ChartKind>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub force: Option<Vec<f64>>,
    pub r0: Option<Vec<f64>>,
    pub jac: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub window: Option<f64>,
    pub domain_lo: Option<Vec<f64>>,
    pub domain_hi: Option<Vec<f64>>,
    pub s0: Option<f64>,
    pub region: Option<f64>,
    pub h_x: Option<f64>,
    pub h22: Option<f64>,
    pub margin: Option<f64>,
    pub compensate: Option<bool>,
    pub rows: Option<Vec<String>>,
    pub alpha: Option<f64>,
}

/// Reads the config file (if any) and applies overrides in order.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RawConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        table.insert(k.trim().to_string(), parse_value(v.trim()));
    }
    let cfg: RawConfig = Value::Table(table).try_into().map_err(|e| CliError::Config(e.to_string()))?;
    match cfg.schema {
        None | Some(SCHEMA) => Ok(cfg),
        Some(s) => Err(CliError::Config(format!("unsupported schema {s} (expected {SCHEMA})"))),
    }
}

/// A TOML literal if it parses as one, else a bare string.
fn parse_value(s: &str) -> Value {
    format!("v = {s}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(s.to_string()))
}

pub fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

pub fn check_grid(grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Config("eps_grid is empty".into()));
    }
    for e in grid {
        positive("eps", *e)?;
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CliError::Config("eps_grid must be strictly decreasing".into()));
    }
    Ok(())
}
