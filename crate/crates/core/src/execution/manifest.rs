use serde::{Deserialize, Serialize};

use super::queue::{JobStatus, SimulationJob, ThroughputSample};
use crate::config::RunConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub job_id: String,
    pub trial: u32,
    pub year: u32,
    pub status: JobStatus,
    pub submitted_ms: Option<u64>,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    /// Completed by an earlier invocation and skipped on resume.
    #[serde(default)]
    pub resumed: bool,
}

impl From<&SimulationJob> for LedgerEntry {
    fn from(j: &SimulationJob) -> Self {
        Self {
            job_id: j.spec.job_id.clone(),
            trial: j.spec.trial,
            year: j.spec.year,
            status: j.status,
            submitted_ms: Some(j.submitted_ms),
            started_ms: j.started_ms,
            finished_ms: j.finished_ms,
            failure_reason: j.failure_reason.clone(),
            resumed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub years: u32,
    pub trials: u32,
    pub master_seed: u64,
    pub config: RunConfig,
    /// One entry per (trial, year), sorted by job id.
    pub jobs: Vec<LedgerEntry>,
    pub throughput: Vec<ThroughputSample>,
    pub report_paths: Vec<String>,
    /// Modeling assumptions that fill gaps in the method description.
    pub assumptions: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("run manifest", e))
    }

    pub fn count(&self, status: JobStatus) -> usize {
        self.jobs.iter().filter(|j| j.status == status).count()
    }
}
