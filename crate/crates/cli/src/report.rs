//! JSON reports written by `dist` and `baseline`. The layout is described by
//! `schema/report.schema.json`.

use rrho::{Engine, Mode, SolverParams, SolverReport, Termination};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistReport {
    pub estimate: f64,
    pub dual_value: f64,
    pub r: f64,
    pub rho: f64,
    pub eps: f64,
    pub iterations: u64,
    pub termination: Termination,
    pub alpha_updates: u64,
    pub beta_updates: u64,
    pub seed: u64,
    pub mode: Mode,
    pub engine: Engine,
    pub wall_time_ms: f64,
    pub n: usize,
    pub m: usize,
    pub sigma_actual: f64,
    pub warnings: Vec<String>,
    pub params: SolverParams,
}

impl DistReport {
    pub fn new(report: &SolverReport, n: usize, m: usize, sigma_actual: f64, warnings: Vec<String>) -> Self {
        Self {
            estimate: report.estimate,
            dual_value: report.dual_value,
            r: report.r,
            rho: report.params.rho,
            eps: report.params.eps,
            iterations: report.iterations,
            termination: report.termination,
            alpha_updates: report.alpha_updates,
            beta_updates: report.beta_updates,
            seed: report.seed,
            mode: report.params.mode,
            engine: report.engine,
            wall_time_ms: report.wall_time.as_secs_f64() * 1e3,
            n,
            m,
            sigma_actual,
            warnings,
            params: report.params.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BaselineAlgo {
    Emd,
    Sinkhorn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub algo: BaselineAlgo,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub r: f64,
    pub iterations: usize,
    pub n: usize,
    pub m: usize,
    pub wall_time_ms: f64,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Drops the `wall_time_ms` field, for comparing runs.
pub fn without_timing(json: &str) -> serde_json::Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("wall_time_ms");
    }
    Ok(v)
}
