//! Job ledger and queue shared by the requester and the worker pool.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::store::ArtifactStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JobStatus {
    Pending,
    Running,
    Completed,
    Failed,
}

impl JobStatus {
    pub fn can_transition(self, to: JobStatus) -> bool {
        matches!(
            (self, to),
            (JobStatus::Pending, JobStatus::Running)
                | (JobStatus::Running, JobStatus::Completed)
                | (JobStatus::Running, JobStatus::Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Completed | JobStatus::Failed)
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// What the requester asks the executor to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub trial: u32,
    pub year: u32,
    /// Artifact key prefix of the input bundle.
    pub input_bundle: String,
    /// Artifact key prefix for outputs.
    pub output_path: String,
    /// Keys that must exist for the job to count as completed.
    pub expected_outputs: Vec<String>,
    /// Key inside the bundle whose presence marks the bundle as staged.
    pub bundle_marker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationJob {
    #[serde(flatten)]
    pub spec: JobSpec,
    pub status: JobStatus,
    pub submitted_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
    pub failure_reason: Option<String>,
    pub attempts: u32,
}

impl SimulationJob {
    pub fn id(&self) -> &str {
        &self.spec.job_id
    }

    pub fn duration_ms(&self) -> Option<u64> {
        Some(self.finished_ms?.saturating_sub(self.started_ms?))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub running: usize,
    pub completed: usize,
    pub failed: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.pending + self.running + self.completed + self.failed
    }

    fn bump(&mut self, s: JobStatus, delta: isize) {
        let slot = match s {
            JobStatus::Pending => &mut self.pending,
            JobStatus::Running => &mut self.running,
            JobStatus::Completed => &mut self.completed,
            JobStatus::Failed => &mut self.failed,
        };
        *slot = slot.checked_add_signed(delta).expect("status count underflow");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputSample {
    pub timestamp_ms: u64,
    pub pending: usize,
    pub running: usize,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub job_id: String,
    pub from: JobStatus,
    pub to: JobStatus,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusSnapshot {
    pub statuses: Vec<(String, JobStatus)>,
    pub counts: StatusCounts,
}

#[derive(Debug, Default)]
pub struct SubmitOutcome {
    pub accepted: Vec<String>,
    pub rejected: Vec<(String, Error)>,
}

#[derive(Debug, Default)]
struct QueueState {
    jobs: Vec<SimulationJob>,
    index: HashMap<String, usize>,
    pending: VecDeque<usize>,
    counts: StatusCounts,
    /// Jobs completed by an earlier invocation of the same run.
    carried_over: usize,
    transitions: Vec<Transition>,
    execution_log: Vec<String>,
    throughput: Vec<ThroughputSample>,
}

impl QueueState {
    fn sample(&mut self) {
        let c = self.counts;
        self.throughput.push(ThroughputSample {
            timestamp_ms: now_ms(),
            pending: c.pending,
            running: c.running,
            completed: c.completed + self.carried_over,
            failed: c.failed,
        });
    }

    fn transition(&mut self, idx: usize, to: JobStatus) -> Result<()> {
        let job = &mut self.jobs[idx];
        let from = job.status;
        if !from.can_transition(to) {
            return Err(Error::InvalidTransition {
                job: job.spec.job_id.clone(),
                from,
                to,
            });
        }
        let ts = now_ms();
        job.status = to;
        match to {
            JobStatus::Running => job.started_ms = Some(ts),
            _ => job.finished_ms = Some(ts),
        }
        self.transitions.push(Transition {
            job_id: job.spec.job_id.clone(),
            from,
            to,
            timestamp_ms: ts,
        });
        self.counts.bump(from, -1);
        self.counts.bump(to, 1);
        self.sample();
        Ok(())
    }
}

/// Linearizable job ledger: every mutation and snapshot takes the same lock.
#[derive(Debug)]
pub struct JobQueue {
    store: ArtifactStore,
    state: Mutex<QueueState>,
}

impl JobQueue {
    pub fn new(store: ArtifactStore) -> Self {
        Self::with_carried_over(store, 0)
    }

    /// Queue for a resumed run where `completed` jobs finished earlier.
    pub fn with_carried_over(store: ArtifactStore, completed: usize) -> Self {
        let mut state = QueueState {
            carried_over: completed,
            ..QueueState::default()
        };
        state.sample();
        Self {
            store,
            state: Mutex::new(state),
        }
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.store
    }

    /// Enqueues every request whose bundle is staged and whose id is new.
    /// The whole batch becomes visible to workers at once.
    pub fn submit_jobs(&self, requests: Vec<JobSpec>) -> SubmitOutcome {
        let mut outcome = SubmitOutcome::default();
        let ts = now_ms();
        let mut staged = Vec::with_capacity(requests.len());
        for spec in requests {
            let marker = format!("{}/{}", spec.input_bundle, spec.bundle_marker);
            if !self.store.exists(&marker) {
                outcome
                    .rejected
                    .push((spec.job_id.clone(), Error::MissingBundle(spec.job_id)));
                continue;
            }
            staged.push(spec);
        }
        let mut st = self.state.lock().expect("queue lock");
        for spec in staged {
            if st.index.contains_key(&spec.job_id) || outcome.accepted.contains(&spec.job_id) {
                outcome
                    .rejected
                    .push((spec.job_id.clone(), Error::DuplicateJob(spec.job_id)));
                continue;
            }
            let idx = st.jobs.len();
            outcome.accepted.push(spec.job_id.clone());
            st.index.insert(spec.job_id.clone(), idx);
            st.jobs.push(SimulationJob {
                spec,
                status: JobStatus::Pending,
                submitted_ms: ts,
                started_ms: None,
                finished_ms: None,
                failure_reason: None,
                attempts: 0,
            });
            st.pending.push_back(idx);
            st.counts.pending += 1;
        }
        st.sample();
        outcome
    }

    /// Claims the next pending job, marking it Running.
    pub fn start_next(&self) -> Option<SimulationJob> {
        let mut st = self.state.lock().expect("queue lock");
        let idx = st.pending.pop_front()?;
        st.transition(idx, JobStatus::Running)
            .expect("pending job must be startable");
        let id = st.jobs[idx].spec.job_id.clone();
        st.execution_log.push(id);
        Some(st.jobs[idx].clone())
    }

    pub fn record_attempt(&self, job_id: &str) {
        let mut st = self.state.lock().expect("queue lock");
        if let Some(&i) = st.index.get(job_id) {
            st.jobs[i].attempts += 1;
        }
    }

    /// Moves a Running job to its terminal state.
    pub fn finish(&self, job_id: &str, outcome: std::result::Result<(), String>) -> Result<()> {
        let mut st = self.state.lock().expect("queue lock");
        let idx = *st.index.get(job_id).ok_or_else(|| Error::Unknown {
            kind: "job",
            id: job_id.to_string(),
        })?;
        match outcome {
            Ok(()) => st.transition(idx, JobStatus::Completed),
            Err(reason) => {
                st.transition(idx, JobStatus::Failed)?;
                st.jobs[idx].failure_reason = Some(reason);
                Ok(())
            }
        }
    }

    pub fn poll_status(&self, ids: &[String]) -> Result<StatusSnapshot> {
        let st = self.state.lock().expect("queue lock");
        let mut statuses = Vec::with_capacity(ids.len());
        let mut counts = StatusCounts::default();
        for id in ids {
            let &i = st.index.get(id).ok_or_else(|| Error::Unknown {
                kind: "job",
                id: id.clone(),
            })?;
            let s = st.jobs[i].status;
            counts.bump(s, 1);
            statuses.push((id.clone(), s));
        }
        Ok(StatusSnapshot { statuses, counts })
    }

    pub fn counts(&self) -> StatusCounts {
        self.state.lock().expect("queue lock").counts
    }

    pub fn jobs(&self) -> Vec<SimulationJob> {
        self.state.lock().expect("queue lock").jobs.clone()
    }

    pub fn job_ids(&self) -> Vec<String> {
        let st = self.state.lock().expect("queue lock");
        st.jobs.iter().map(|j| j.spec.job_id.clone()).collect()
    }

    pub fn transitions(&self) -> Vec<Transition> {
        self.state.lock().expect("queue lock").transitions.clone()
    }

    pub fn execution_log(&self) -> Vec<String> {
        self.state.lock().expect("queue lock").execution_log.clone()
    }

    pub fn throughput(&self) -> Vec<ThroughputSample> {
        self.state.lock().expect("queue lock").throughput.clone()
    }

    pub fn sample_now(&self) {
        self.state.lock().expect("queue lock").sample();
    }
}

pub fn throughput_csv(samples: &[ThroughputSample]) -> String {
    let mut s = String::from("timestamp_ms,pending,running,completed,failed\n");
    for t in samples {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            t.timestamp_ms, t.pending, t.running, t.completed, t.failed
        ));
    }
    s
}

pub fn parse_throughput_csv(text: &str) -> Result<Vec<ThroughputSample>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse("throughput csv", e))?;
        let num = |i: usize| -> Result<u64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse("throughput csv", format!("bad column {i}")))
        };
        out.push(ThroughputSample {
            timestamp_ms: num(0)?,
            pending: num(1)? as usize,
            running: num(2)? as usize,
            completed: num(3)? as usize,
            failed: num(4)? as usize,
        });
    }
    Ok(out)
}
