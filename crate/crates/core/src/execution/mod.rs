//! Requester/executor job harness: a write-once artifact store, a job queue
//! with an explicit status machine, and a worker pool that fans jobs out.

pub mod layout;
mod manifest;
mod pool;
mod queue;
mod store;

pub use manifest::{LedgerEntry, RunManifest};
pub use pool::{execute_pool, JobExecutor, PoolOptions, PoolReport};
pub use queue::{
    now_ms, parse_throughput_csv, throughput_csv, JobQueue, JobSpec, JobStatus, SimulationJob,
    StatusCounts, StatusSnapshot, SubmitOutcome, ThroughputSample, Transition,
};
pub use store::ArtifactStore;
