//! Wire types shared by the pcmg service and its clients. Every report
//! starts with a [`ReportHeader`] naming the scenario digest it was
//! computed for.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use pcmg_core::balancer::{BalancingPlan, MrSummary, PlanConfig};
use pcmg_core::lsgen::{canonical, BalancingRequirement, LearningSet};
use pcmg_core::planner::{AnnualEvents, PlanningTable, Source};
use pcmg_core::Scenario;
use pcmg_distgen::{Failover, WorkerTiming};
use serde::{Deserialize, Serialize};

pub mod paths {
    pub const HEALTH: &str = "/v1/health";
    pub const PLAN_HOUR: &str = "/v1/plan/hour";
    pub const PLAN_ISLANDING: &str = "/v1/plan/islanding";
    pub const PLAN_STORAGE: &str = "/v1/plan/storage";
    pub const EVALUATE_MR: &str = "/v1/evaluate-mr";
    pub const LS_DISTRIBUTED: &str = "/v1/ls/distributed";
}

/// Seed, sample count and profitability levels (fractions) of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub seed: u64,
    pub samples: u32,
    pub levels: Vec<f64>,
}

impl Default for RunParams {
    fn default() -> Self {
        let cfg = PlanConfig::default();
        Self {
            seed: cfg.seed,
            samples: cfg.samples,
            levels: cfg.levels,
        }
    }
}

impl RunParams {
    pub fn config(&self) -> PlanConfig {
        PlanConfig {
            levels: self.levels.clone(),
            samples: self.samples,
            seed: self.seed,
            ..PlanConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanRequest {
    pub scenario: Scenario,
    #[serde(default)]
    pub params: RunParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageRequest {
    pub scenario: Scenario,
    #[serde(default)]
    pub params: RunParams,
    /// Hourly loading for the year, kW. The scenario's synthetic profile
    /// is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MrRequest {
    pub scenario: Scenario,
    #[serde(default)]
    pub params: RunParams,
    pub repeats: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributedRequest {
    pub scenario: Scenario,
    pub seed: u64,
    pub samples: u32,
    /// `host:port` worker endpoints.
    pub workers: Vec<String>,
    /// Defaults to islanding the scheduled state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<BalancingRequirement>,
    /// Label the merged set at this top fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub scenario: String,
    /// Hex sha256 of the scenario's canonical JSON.
    pub digest: String,
    pub seed: u64,
    pub samples: u32,
    pub levels: Vec<f64>,
}

impl ReportHeader {
    pub fn new(sc: &Scenario, seed: u64, samples: u32, levels: &[f64]) -> Self {
        Self {
            scenario: sc.meta.name.clone(),
            digest: sc.digest_hex(),
            seed,
            samples,
            levels: levels.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourReport {
    pub header: ReportHeader,
    pub deficit: BalancingPlan,
    pub excess: BalancingPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandingReport {
    pub header: ReportHeader,
    pub plan: BalancingPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub raw_load: usize,
    pub raw_pv: usize,
    pub raw_wind: usize,
    pub combined: usize,
    pub dropped: usize,
    pub deadband_kw: f64,
}

impl From<&AnnualEvents> for EventSummary {
    fn from(e: &AnnualEvents) -> Self {
        Self {
            raw_load: e.raw_count(Source::Load),
            raw_pv: e.raw_count(Source::Pv),
            raw_wind: e.raw_count(Source::Wind),
            combined: e.combined.len(),
            dropped: e.dropped,
            deadband_kw: e.deadband_kw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub header: ReportHeader,
    pub events: EventSummary,
    pub table: PlanningTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrReport {
    pub header: ReportHeader,
    pub repeats: u32,
    /// Loosest level first.
    pub levels: Vec<MrSummary>,
    /// One islanding plan per seed.
    pub plans: Vec<BalancingPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedReport {
    pub header: ReportHeader,
    pub requirement: BalancingRequirement,
    pub workers: Vec<String>,
    pub attempted: u32,
    pub kept: u32,
    pub skipped: u32,
    /// Hex sha256 of the canonical learning-set encoding.
    pub ls_sha256: String,
    pub failovers: Vec<Failover>,
    pub timings: Vec<WorkerTiming>,
    pub wall_seconds: f64,
    /// Base64 of the canonical learning-set encoding.
    pub ls: String,
}

impl DistributedReport {
    pub fn encode_ls(ls: &LearningSet) -> String {
        STANDARD.encode(canonical::encode(ls))
    }

    pub fn ls_bytes(&self) -> Result<Vec<u8>, ApiError> {
        STANDARD
            .decode(&self.ls)
            .map_err(|e| ApiError::new("format", format!("learning set is not base64: {e}")))
    }

    pub fn learning_set(&self) -> Result<LearningSet, ApiError> {
        canonical::decode(&self.ls_bytes()?).map_err(|e| ApiError::new("format", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: String,
    pub message: String,
}

impl ApiError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for ApiError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_default_to_the_planning_defaults() {
        let p = RunParams::default();
        assert_eq!(p.config(), PlanConfig::default());
    }

    #[test]
    fn requests_round_trip_with_digest_intact() {
        let sc = Scenario::bundled();
        let req = PlanRequest {
            scenario: sc.clone(),
            params: RunParams::default(),
        };
        let back: PlanRequest = serde_json::from_str(&serde_json::to_string(&req).unwrap()).unwrap();
        assert_eq!(back.scenario.digest_hex(), sc.digest_hex());
        assert_eq!(back.params, req.params);
    }

    #[test]
    fn missing_params_take_defaults() {
        let body = format!("{{\"scenario\": {}}}", Scenario::bundled().canonical_json());
        let req: PlanRequest = serde_json::from_str(&body).unwrap();
        assert_eq!(req.params, RunParams::default());
    }
}
