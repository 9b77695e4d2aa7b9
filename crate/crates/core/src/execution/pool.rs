//! Fixed-size worker pool draining a [`JobQueue`].

use std::panic::{self, AssertUnwindSafe};
use std::thread;

use super::queue::{now_ms, JobQueue, SimulationJob};
use super::store::ArtifactStore;

/// Backend seam between the queue and whatever actually runs a job.
pub trait JobExecutor: Sync {
    /// Runs one job, writing its outputs into `store`. Errors become the
    /// job's failure reason.
    fn execute(&self, job: &SimulationJob, store: &ArtifactStore) -> Result<(), String>;
}

impl<F> JobExecutor for F
where
    F: Fn(&SimulationJob, &ArtifactStore) -> Result<(), String> + Sync,
{
    fn execute(&self, job: &SimulationJob, store: &ArtifactStore) -> Result<(), String> {
        self(job, store)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolOptions {
    pub workers: usize,
    /// Extra attempts for a failing job before it is marked Failed.
    pub max_retries: u32,
}

impl PoolOptions {
    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
            max_retries: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolReport {
    pub started_ms: u64,
    pub finished_ms: u64,
    pub executed: usize,
}

impl PoolReport {
    pub fn wall_ms(&self) -> u64 {
        self.finished_ms.saturating_sub(self.started_ms)
    }
}

/// Runs every pending job exactly once on `options.workers` threads.
pub fn execute_pool(queue: &JobQueue, executor: &dyn JobExecutor, options: PoolOptions) -> PoolReport {
    let started_ms = now_ms();
    queue.sample_now();
    let executed: usize = thread::scope(|s| {
        let handles: Vec<_> = (0..options.workers.max(1))
            .map(|_| s.spawn(|| worker_loop(queue, executor, options.max_retries)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker loop does not panic"))
            .sum()
    });
    queue.sample_now();
    PoolReport {
        started_ms,
        finished_ms: now_ms(),
        executed,
    }
}

fn worker_loop(queue: &JobQueue, executor: &dyn JobExecutor, max_retries: u32) -> usize {
    let mut executed = 0;
    while let Some(job) = queue.start_next() {
        executed += 1;
        let mut outcome = Err(String::new());
        for _ in 0..=max_retries {
            queue.record_attempt(job.id());
            outcome = run_once(queue.store(), executor, &job);
            if outcome.is_ok() {
                break;
            }
        }
        queue
            .finish(job.id(), outcome)
            .expect("running job can always be finished");
    }
    executed
}

fn run_once(store: &ArtifactStore, executor: &dyn JobExecutor, job: &SimulationJob) -> Result<(), String> {
    let result = panic::catch_unwind(AssertUnwindSafe(|| executor.execute(job, store)));
    match result {
        Ok(Ok(())) => {
            if let Some(missing) = job.spec.expected_outputs.iter().find(|k| !store.exists(k)) {
                Err(format!("executor reported success but `{missing}` is missing"))
            } else {
                Ok(())
            }
        }
        Ok(Err(reason)) => Err(reason),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(format!("worker panicked: {msg}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::execution::queue::{JobSpec, JobStatus};
    use std::collections::HashSet;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn setup(n: usize) -> (tempfile::TempDir, JobQueue) {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let mut specs = Vec::new();
        for i in 0..n {
            let id = format!("job{i:03}");
            store.store(&format!("in/{id}/job.json"), id.as_bytes()).unwrap();
            specs.push(JobSpec {
                job_id: id.clone(),
                trial: 1,
                year: i as u32 + 1,
                input_bundle: format!("in/{id}"),
                output_path: format!("out/{id}"),
                expected_outputs: vec![format!("out/{id}/done")],
                bundle_marker: "job.json".into(),
            });
        }
        let q = JobQueue::new(store);
        assert_eq!(q.submit_jobs(specs).accepted.len(), n);
        (dir, q)
    }

    fn echo(job: &SimulationJob, store: &ArtifactStore) -> Result<(), String> {
        let input = store
            .fetch(&format!("{}/job.json", job.spec.input_bundle))
            .map_err(|e| e.to_string())?;
        if input.starts_with(b"job003") {
            panic!("corrupt bundle");
        }
        store
            .store(&format!("{}/done", job.spec.output_path), &input)
            .map_err(|e| e.to_string())
    }

    #[test]
    fn exactly_once_and_failures_isolated() {
        let (_d, q) = setup(10);
        let report = execute_pool(&q, &echo, PoolOptions::new(4));
        assert_eq!(report.executed, 10);
        let log = q.execution_log();
        assert_eq!(log.len(), 10);
        assert_eq!(log.iter().collect::<HashSet<_>>().len(), 10);
        let c = q.counts();
        assert_eq!((c.completed, c.failed), (9, 1));
        let failed: Vec<_> = q.jobs().into_iter().filter(|j| j.status == JobStatus::Failed).collect();
        assert_eq!(failed[0].id(), "job003");
        assert!(failed[0].failure_reason.as_ref().unwrap().contains("corrupt bundle"));
        for t in q.transitions() {
            assert!(t.from.can_transition(t.to));
        }
    }

    #[test]
    fn throughput_is_monotone_and_terminates() {
        let (_d, q) = setup(12);
        execute_pool(&q, &echo, PoolOptions::new(3));
        let samples = q.throughput();
        for w in samples.windows(2) {
            assert!(w[1].completed + w[1].failed >= w[0].completed + w[0].failed);
        }
        let last = samples.last().unwrap();
        assert_eq!(last.completed + last.failed, 12);
    }

    #[test]
    fn missing_output_marks_failed() {
        let (_d, q) = setup(2);
        let noop = |_: &SimulationJob, _: &ArtifactStore| Ok(());
        execute_pool(&q, &noop, PoolOptions::new(2));
        assert_eq!(q.counts().failed, 2);
    }

    #[test]
    fn retry_knob() {
        let (_d, q) = setup(1);
        let calls = AtomicUsize::new(0);
        let flaky = |job: &SimulationJob, store: &ArtifactStore| {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                return Err("transient".to_string());
            }
            store
                .store(&format!("{}/done", job.spec.output_path), b"ok")
                .map_err(|e| e.to_string())
        };
        execute_pool(&q, &flaky, PoolOptions { workers: 1, max_retries: 1 });
        assert_eq!(q.counts().completed, 1);
        assert_eq!(q.jobs()[0].attempts, 2);
        assert_eq!(q.execution_log().len(), 1);
    }

    #[test]
    fn outputs_independent_of_worker_count() {
        let collect = |k| {
            let (d, q) = setup(20);
            execute_pool(&q, &echo, PoolOptions::new(k));
            let store = q.store();
            let keys = store.list("out").unwrap();
            let files: Vec<_> = keys.iter().map(|key| (key.clone(), store.fetch(key).unwrap())).collect();
            let statuses: Vec<_> = q.jobs().into_iter().map(|j| (j.spec.job_id, j.status)).collect();
            drop(d);
            (files, statuses)
        };
        assert_eq!(collect(1), collect(8));
    }
}
