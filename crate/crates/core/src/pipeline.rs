//! End-to-end orchestration: scenarios, job bundles, pool execution, report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::adoption::{generate_scenarios, ScenarioSet, Technology, TrialAdoption};
use crate::config::RunConfig;
use crate::execution::{
    execute_pool, layout, parse_throughput_csv, throughput_csv, ArtifactStore, JobExecutor, JobQueue,
    JobSpec, JobStatus, LedgerEntry, PoolOptions, RunManifest, SimulationJob, StatusCounts, ThroughputSample,
};
use crate::feeder::{disaggregate_loads, feeder_to_json, load_feeder, parse_feeder, FeederModel};
use crate::postprocess::{emit_report, records_from_loading, ImpactAccumulator, ReportInputs};
use crate::powerflow::{run_yearly, LoadingTable, PowerFlowCase, PowerFlowConfig, TransformerSeries};
use crate::profiles::{customer_injection, JobProfileContext, WeatherYear};
use crate::{Error, Result, HOURS_PER_YEAR};

pub const BUNDLE_MARKER: &str = "job.json";
pub const INJECTIONS_FILE: &str = "injections.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Scenarios,
    Staging,
    Execution,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Scenarios => "scenario generation",
            Stage::Staging => "bundle staging",
            Stage::Execution => "execution",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, PipelineError>;

trait InStage<T> {
    fn in_stage(self, stage: Stage) -> StageResult<T>;
}

impl<T> InStage<T> for Result<T> {
    fn in_stage(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

/// Contents of a bundle's `job.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleDescriptor {
    pub job_id: String,
    pub trial: u32,
    pub year: u32,
    pub master_seed: u64,
    pub scenario: String,
    pub feeder: String,
    pub weather: String,
    /// Per-transformer hourly injections; absent for ledger-only staging.
    pub injections: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleMode {
    /// Materialize the hourly injections each job needs.
    Full,
    /// Write only the descriptor. Jobs staged this way cannot execute.
    DescriptorOnly,
}

/// A run's configuration with its feeder and weather loaded.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: RunConfig,
    pub run_id: String,
    /// Feeder after lumped-load disaggregation.
    pub feeder: FeederModel,
    pub weather: WeatherYear,
    pub store: ArtifactStore,
}

impl RunContext {
    pub fn prepare(config: RunConfig) -> StageResult<Self> {
        config.validate().in_stage(Stage::Config)?;
        let raw = load_feeder(&config.feeder).in_stage(Stage::Config)?;
        let feeder = disaggregate_loads(&raw, config.houses_per_kva).in_stage(Stage::Config)?;
        let weather = match &config.weather {
            Some(p) => WeatherYear::load_csv(p).in_stage(Stage::Config)?,
            None => WeatherYear::bundled(),
        };
        let store = ArtifactStore::open(&config.out).in_stage(Stage::Config)?;
        Ok(Self {
            run_id: config.run_id(),
            config,
            feeder,
            weather,
            store,
        })
    }

    /// Reopens an existing run from its manifest and staged inputs.
    pub fn open(out: impl Into<PathBuf>, run_id: &str) -> Result<Self> {
        let store = ArtifactStore::open(out)?;
        let key = layout::manifest(run_id);
        if !store.exists(&key) {
            return Err(Error::NotFound(format!("run `{run_id}`")));
        }
        let manifest = RunManifest::from_json(&store.fetch_string(&key)?)?;
        let feeder = parse_feeder(&store.fetch_string(&layout::inputs(run_id, "feeder.json"))?)?;
        let weather = WeatherYear::from_csv(&store.fetch_string(&layout::inputs(run_id, "weather.csv"))?)?;
        Ok(Self {
            run_id: run_id.to_string(),
            config: manifest.config,
            feeder,
            weather,
            store,
        })
    }

    fn workers(&self) -> usize {
        self.config.worker_count()
    }

    pub fn job_spec(&self, trial: u32, year: u32) -> JobSpec {
        let job_id = layout::job_id(&self.run_id, trial, year);
        JobSpec {
            input_bundle: layout::bundle_dir(&self.run_id, &job_id),
            output_path: layout::result_dir(&self.run_id, trial, year),
            expected_outputs: vec![
                layout::result_json(&self.run_id, trial, year),
                layout::loading_csv(&self.run_id, trial, year),
            ],
            bundle_marker: BUNDLE_MARKER.into(),
            job_id,
            trial,
            year,
        }
    }

    /// Every (trial, year) in ledger order.
    pub fn all_cells(&self) -> Vec<(u32, u32)> {
        let (n, m) = (self.config.years, self.config.trials);
        (1..=m).flat_map(|t| (1..=n).map(move |y| (t, y))).collect()
    }

    pub fn is_completed(&self, trial: u32, year: u32) -> bool {
        self.job_spec(trial, year)
            .expected_outputs
            .iter()
            .all(|k| self.store.exists(k))
    }
}

/// Runs `f` over `items` on up to `workers` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let workers = workers.clamp(1, items.len());
    let chunk = items.len().div_ceil(workers);
    let parts: Vec<Result<Vec<R>>> = thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn write_inputs(ctx: &RunContext) -> Result<()> {
    ctx.store
        .store_idempotent(&layout::inputs(&ctx.run_id, "feeder.json"), feeder_to_json(&ctx.feeder).as_bytes())?;
    ctx.store
        .store_idempotent(&layout::inputs(&ctx.run_id, "weather.csv"), ctx.weather.to_csv().as_bytes())
}

pub fn write_scenarios(store: &ArtifactStore, run_id: &str, set: &ScenarioSet, workers: usize) -> Result<usize> {
    let written = parallel_map(&set.trials, workers, |trial| {
        for view in trial.scenarios() {
            store.store_idempotent(&layout::scenario(run_id, view.trial, view.year), view.to_json().as_bytes())?;
        }
        Ok(trial.horizon as usize)
    })?;
    Ok(written.into_iter().sum())
}

/// Hourly (P, Q) per transformer, in feeder order, for one trial's installations at `year`.
pub fn build_injections(ctx: &RunContext, trial: &TrialAdoption, year: u32) -> Result<Vec<TransformerSeries>> {
    let mut capacity: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for inst in trial.scenario(year).installations {
        let e = capacity.entry(inst.customer_id.as_str()).or_default();
        match inst.technology {
            Technology::Pv => e.0 += inst.capacity_kw,
            Technology::Ev => e.1 += inst.capacity_kw,
        }
    }
    let pctx = JobProfileContext {
        weather: &ctx.weather,
        config: &ctx.config.profiles,
        master_seed: ctx.config.seed,
        trial: trial.trial,
        year,
        power_factor: ctx.config.powerflow.power_factor,
    };
    let mut series = vec![
        TransformerSeries {
            p_kw: vec![0.0; HOURS_PER_YEAR],
            q_kvar: vec![0.0; HOURS_PER_YEAR],
        };
        ctx.feeder.transformers.len()
    ];
    // fixed customer order keeps the floating-point sums reproducible
    let mut customers: Vec<_> = ctx.feeder.customers.iter().collect();
    customers.sort_by(|a, b| a.id.cmp(&b.id));
    for c in customers {
        let (pv, ev) = capacity.get(c.id.as_str()).copied().unwrap_or_default();
        let inj = customer_injection(c, pv, ev, &pctx)?;
        let ti = ctx.feeder.transformer_index(&c.transformer_id).expect("validated feeder");
        let t = &mut series[ti];
        for (acc, v) in t.p_kw.iter_mut().zip(inj.p_kw.values()) {
            *acc += v;
        }
        for (acc, v) in t.q_kvar.iter_mut().zip(inj.q_kvar.values()) {
            *acc += v;
        }
    }
    Ok(series)
}

/// `hour,<tx>_p_kw,<tx>_q_kvar,...` with transformers in feeder order.
pub fn injections_csv(feeder: &FeederModel, series: &[TransformerSeries]) -> String {
    let mut s = String::with_capacity(HOURS_PER_YEAR * series.len() * 20);
    s.push_str(&injections_header(feeder));
    for h in 0..HOURS_PER_YEAR {
        let _ = write!(s, "{h}");
        for t in series {
            let _ = write!(s, ",{:.6},{:.6}", t.p_kw[h], t.q_kvar[h]);
        }
        s.push('\n');
    }
    s
}

fn injections_header(feeder: &FeederModel) -> String {
    let mut s = String::from("hour");
    for t in &feeder.transformers {
        let _ = write!(s, ",{0}_p_kw,{0}_q_kvar", t.id);
    }
    s.push('\n');
    s
}

pub fn parse_injections_csv(feeder: &FeederModel, text: &str) -> Result<Vec<TransformerSeries>> {
    const WHAT: &str = "injections csv";
    let header = injections_header(feeder);
    let body = text
        .strip_prefix(header.as_str())
        .ok_or_else(|| Error::parse(WHAT, "header does not match the feeder's transformers"))?;
    let n = feeder.transformers.len();
    let mut series = vec![
        TransformerSeries {
            p_kw: Vec::with_capacity(HOURS_PER_YEAR),
            q_kvar: Vec::with_capacity(HOURS_PER_YEAR),
        };
        n
    ];
    let mut rows = 0;
    for (i, line) in body.lines().enumerate() {
        let mut fields = line.split(',');
        let hour: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::parse(WHAT, format!("row {i}: bad hour")))?;
        if hour != i {
            return Err(Error::parse(WHAT, format!("row {i} has hour {hour}")));
        }
        for (k, t) in series.iter_mut().enumerate() {
            let mut num = || -> Result<f64> {
                fields
                    .next()
                    .and_then(|f| f.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(WHAT, format!("row {i}: bad value for transformer {k}")))
            };
            t.p_kw.push(num()?);
            t.q_kvar.push(num()?);
        }
        if fields.next().is_some() {
            return Err(Error::parse(WHAT, format!("row {i}: too many fields")));
        }
        rows += 1;
    }
    if rows != HOURS_PER_YEAR {
        return Err(Error::LengthMismatch {
            expected: HOURS_PER_YEAR,
            actual: rows,
        });
    }
    Ok(series)
}

/// Writes bundles for every (trial, year) not already staged; returns the job
/// specs for all cells in ledger order.
pub fn stage_bundles(ctx: &RunContext, set: &ScenarioSet, mode: BundleMode) -> Result<Vec<JobSpec>> {
    let cells = ctx.all_cells();
    parallel_map(&cells, ctx.workers(), |&(trial, year)| {
        let spec = ctx.job_spec(trial, year);
        let marker = format!("{}/{}", spec.input_bundle, BUNDLE_MARKER);
        // the descriptor goes last, so its presence means the bundle is complete
        if ctx.store.exists(&marker) || ctx.is_completed(trial, year) {
            return Ok(spec);
        }
        let injections = match mode {
            BundleMode::Full => {
                let ta = set.trial(trial).ok_or_else(|| Error::NotFound(format!("trial {trial}")))?;
                let key = format!("{}/{}", spec.input_bundle, INJECTIONS_FILE);
                let series = build_injections(ctx, ta, year)?;
                ctx.store
                    .store_idempotent(&key, injections_csv(&ctx.feeder, &series).as_bytes())?;
                Some(key)
            }
            BundleMode::DescriptorOnly => None,
        };
        let desc = BundleDescriptor {
            job_id: spec.job_id.clone(),
            trial,
            year,
            master_seed: ctx.config.seed,
            scenario: layout::scenario(&ctx.run_id, trial, year),
            feeder: layout::inputs(&ctx.run_id, "feeder.json"),
            weather: layout::inputs(&ctx.run_id, "weather.csv"),
            injections,
        };
        let mut body = serde_json::to_string_pretty(&desc).expect("descriptor serializes");
        body.push('\n');
        ctx.store.store_idempotent(&marker, body.as_bytes())?;
        Ok(spec)
    })
}

/// Runs the yearly power flow for one staged bundle.
pub struct PowerFlowExecutor<'a> {
    pub feeder: &'a FeederModel,
    pub config: &'a PowerFlowConfig,
}

impl PowerFlowExecutor<'_> {
    fn run(&self, job: &SimulationJob, store: &ArtifactStore) -> Result<()> {
        let desc: BundleDescriptor = serde_json::from_slice(
            &store.fetch(&format!("{}/{}", job.spec.input_bundle, BUNDLE_MARKER))?,
        )
        .map_err(|e| Error::parse("bundle descriptor", e))?;
        let key = desc
            .injections
            .ok_or_else(|| Error::MissingBundle(format!("{} has no injection profiles", job.spec.job_id)))?;
        let series = parse_injections_csv(self.feeder, &store.fetch_string(&key)?)?;
        let case = PowerFlowCase::from_transformer_series(self.feeder, desc.trial, desc.year, series)?;
        let result = run_yearly(self.feeder, &case, self.config)?;
        let [json_key, csv_key] = job.spec.expected_outputs.as_slice() else {
            return Err(Error::Validation(format!("{}: expected two output keys", job.spec.job_id)));
        };
        // reruns after a crash may find these already written
        store.store_idempotent(json_key, result.summary_json().as_bytes())?;
        store.store_idempotent(csv_key, result.loading_csv().as_bytes())
    }
}

impl JobExecutor for PowerFlowExecutor<'_> {
    fn execute(&self, job: &SimulationJob, store: &ArtifactStore) -> std::result::Result<(), String> {
        self.run(job, store).map_err(|e| e.to_string())
    }
}

fn assumptions(cfg: &RunConfig) -> Vec<String> {
    let pf = &cfg.powerflow;
    vec![
        format!(
            "loads are constant-power at power factor {} lagging; PV injects at unity power factor",
            pf.power_factor
        ),
        format!(
            "transformer loading is |P + jQ| of its customers plus {} kVA no-load allowance; transformer impedance is not in the network solve",
            pf.no_load_kva
        ),
        format!(
            "overload means loading above {} x rating for at least {} consecutive hour(s)",
            cfg.overload.threshold, cfg.overload.min_duration_hours
        ),
        format!("lumped transformer loads are split at {} houses per kVA", cfg.houses_per_kva),
        format!(
            "sweep tolerance {} pu, at most {} iterations, non-convergence policy {:?}",
            pf.tolerance, pf.max_iterations, pf.failure_policy
        ),
        format!(
            "PV derate {}, load noise +/-{}, EV one charging block per day",
            cfg.profiles.pv_derate, cfg.profiles.load_noise
        ),
        "installed capacity is fixed at adoption; PV and EV may be adopted in the same year".into(),
        format!("failed jobs are retried {} time(s)", cfg.max_retries),
    ]
}

fn write_manifest(ctx: &RunContext, jobs: Vec<LedgerEntry>, throughput: Vec<ThroughputSample>, report_paths: Vec<String>) -> Result<RunManifest> {
    let manifest = RunManifest {
        run_id: ctx.run_id.clone(),
        years: ctx.config.years,
        trials: ctx.config.trials,
        master_seed: ctx.config.seed,
        config: ctx.config.clone(),
        jobs,
        throughput,
        report_paths,
        assumptions: assumptions(&ctx.config),
    };
    ctx.store.overwrite(&layout::manifest(&ctx.run_id), manifest.to_json().as_bytes())?;
    Ok(manifest)
}

fn previous_ledger(ctx: &RunContext) -> BTreeMap<String, LedgerEntry> {
    ctx.store
        .fetch_string(&layout::manifest(&ctx.run_id))
        .ok()
        .and_then(|t| RunManifest::from_json(&t).ok())
        .map(|m| m.jobs.into_iter().map(|j| (j.job_id.clone(), j)).collect())
        .unwrap_or_default()
}

fn carried_entry(spec: &JobSpec, previous: &BTreeMap<String, LedgerEntry>) -> LedgerEntry {
    let mut e = previous.get(&spec.job_id).cloned().unwrap_or(LedgerEntry {
        job_id: spec.job_id.clone(),
        trial: spec.trial,
        year: spec.year,
        status: JobStatus::Completed,
        submitted_ms: None,
        started_ms: None,
        finished_ms: None,
        failure_reason: None,
        resumed: true,
    });
    e.status = JobStatus::Completed;
    e.failure_reason = None;
    e.resumed = true;
    e
}

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub scenarios: usize,
    pub jobs: usize,
    pub scenario_set: ScenarioSet,
    pub specs: Vec<JobSpec>,
}

/// Pre-processing: scenarios and job bundles.
pub fn generate(ctx: &RunContext, mode: BundleMode) -> StageResult<GenerateOutcome> {
    write_inputs(ctx).in_stage(Stage::Staging)?;
    let cfg = &ctx.config;
    let set = generate_scenarios(&ctx.feeder, cfg.years, cfg.trials, cfg.seed, &cfg.adoption, ctx.workers())
        .in_stage(Stage::Scenarios)?;
    let scenarios = write_scenarios(&ctx.store, &ctx.run_id, &set, ctx.workers()).in_stage(Stage::Scenarios)?;
    let specs = stage_bundles(ctx, &set, mode).in_stage(Stage::Staging)?;
    Ok(GenerateOutcome {
        scenarios,
        jobs: specs.len(),
        scenario_set: set,
        specs,
    })
}

/// Submits every job that has not completed yet. Returns the queue and the
/// ledger entries carried over from earlier invocations.
pub fn submit(ctx: &RunContext, specs: Vec<JobSpec>) -> StageResult<(JobQueue, Vec<LedgerEntry>)> {
    let previous = previous_ledger(ctx);
    let (done, todo): (Vec<JobSpec>, Vec<JobSpec>) =
        specs.into_iter().partition(|s| ctx.is_completed(s.trial, s.year));
    let carried: Vec<LedgerEntry> = done.iter().map(|s| carried_entry(s, &previous)).collect();
    let queue = JobQueue::with_carried_over(ctx.store.clone(), carried.len());
    let outcome = queue.submit_jobs(todo);
    if let Some((_, e)) = outcome.rejected.into_iter().next() {
        return Err(e).in_stage(Stage::Staging);
    }
    Ok((queue, carried))
}

fn ledger(queue: &JobQueue, carried: Vec<LedgerEntry>) -> Vec<LedgerEntry> {
    let mut jobs: Vec<LedgerEntry> = queue.jobs().iter().map(LedgerEntry::from).chain(carried).collect();
    jobs.sort_by(|a, b| a.job_id.cmp(&b.job_id));
    jobs
}

/// `generate` then writes a manifest whose ledger lists every job (submitted, not executed).
pub fn generate_and_submit(ctx: &RunContext, mode: BundleMode) -> StageResult<(GenerateOutcome, RunManifest)> {
    let gen = generate(ctx, mode)?;
    let (queue, carried) = submit(ctx, gen.specs.clone())?;
    let manifest = write_manifest(ctx, ledger(&queue, carried), queue.throughput(), Vec::new()).in_stage(Stage::Staging)?;
    Ok((gen, manifest))
}

/// Reads completed results and tallies overloads.
pub fn collect_impacts(ctx: &RunContext, cells: &[(u32, u32)]) -> Result<ImpactAccumulator> {
    let parts = parallel_map(cells, ctx.workers(), |&(t, y)| {
        let table = LoadingTable::parse(&ctx.store.fetch_string(&layout::loading_csv(&ctx.run_id, t, y))?)?;
        records_from_loading(&table, &ctx.feeder, t, y, &ctx.config.overload)
    })?;
    let mut acc = ImpactAccumulator::new();
    for p in parts {
        acc.extend(p)?;
    }
    Ok(acc)
}

/// Post-processing over every completed job in `jobs`.
pub fn build_report(ctx: &RunContext, jobs: &[LedgerEntry]) -> Result<Vec<String>> {
    let completed: Vec<(u32, u32)> = jobs
        .iter()
        .filter(|j| j.status == JobStatus::Completed)
        .map(|j| (j.trial, j.year))
        .collect();
    let failed = jobs.iter().filter(|j| j.status == JobStatus::Failed).count();
    let acc = collect_impacts(ctx, &completed)?;
    let ids: Vec<String> = ctx.feeder.transformers.iter().map(|t| t.id.clone()).collect();
    let summaries = acc.summarize(&ids, ctx.config.years, ctx.config.trials)?;
    let inputs = ReportInputs {
        run_id: &ctx.run_id,
        feeder: &ctx.feeder,
        years: ctx.config.years,
        trials: ctx.config.trials,
        jobs_total: jobs.len(),
        jobs_completed: completed.len(),
        jobs_failed: failed,
        overload: ctx.config.overload,
        circles: &ctx.config.report,
    };
    emit_report(&ctx.store, &inputs, &acc, &summaries)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// Jobs executed by this invocation.
    pub executed: usize,
    /// Jobs skipped because an earlier invocation completed them.
    pub resumed: usize,
    pub failed: usize,
    pub wall: Duration,
}

impl RunOutcome {
    pub fn is_partial(&self) -> bool {
        self.failed > 0
    }
}

/// Full pipeline: scenarios, bundles, execution, report, manifest.
pub fn run_pipeline(config: RunConfig) -> StageResult<RunOutcome> {
    let ctx = RunContext::prepare(config)?;
    run_context(&ctx)
}

pub fn run_context(ctx: &RunContext) -> StageResult<RunOutcome> {
    let start = Instant::now();
    let gen = generate(ctx, BundleMode::Full)?;
    let (queue, carried) = submit(ctx, gen.specs)?;
    let resumed = carried.len();
    write_manifest(ctx, ledger(&queue, carried.clone()), queue.throughput(), Vec::new()).in_stage(Stage::Execution)?;

    let executor = PowerFlowExecutor {
        feeder: &ctx.feeder,
        config: &ctx.config.powerflow,
    };
    let options = PoolOptions {
        workers: ctx.workers(),
        max_retries: ctx.config.max_retries,
    };
    let throughput_key = layout::throughput(&ctx.run_id);
    let done = AtomicBool::new(false);
    let report = thread::scope(|s| {
        // periodic snapshots let `status` follow a live run
        s.spawn(|| {
            while !done.load(Ordering::Acquire) {
                let _ = ctx.store.overwrite(&throughput_key, throughput_csv(&queue.throughput()).as_bytes());
                thread::park_timeout(Duration::from_millis(500));
            }
        });
        let r = execute_pool(&queue, &executor, options);
        done.store(true, Ordering::Release);
        r
    });
    ctx.store
        .overwrite(&throughput_key, throughput_csv(&queue.throughput()).as_bytes())
        .in_stage(Stage::Execution)?;

    let jobs = ledger(&queue, carried);
    let report_paths = build_report(ctx, &jobs).in_stage(Stage::Report)?;
    let failed = jobs.iter().filter(|j| j.status == JobStatus::Failed).count();
    let manifest = write_manifest(ctx, jobs, queue.throughput(), report_paths).in_stage(Stage::Report)?;
    Ok(RunOutcome {
        manifest,
        executed: report.executed,
        resumed,
        failed,
        wall: start.elapsed(),
    })
}

/// Rebuilds the report of an existing run from its stored results.
pub fn report_existing(out: impl Into<PathBuf>, run_id: &str) -> StageResult<Vec<String>> {
    let ctx = RunContext::open(out, run_id).in_stage(Stage::Config)?;
    let manifest = RunManifest::from_json(&ctx.store.fetch_string(&layout::manifest(run_id)).in_stage(Stage::Report)?)
        .in_stage(Stage::Report)?;
    let paths = build_report(&ctx, &manifest.jobs).in_stage(Stage::Report)?;
    write_manifest(&ctx, manifest.jobs, manifest.throughput, paths.clone()).in_stage(Stage::Report)?;
    Ok(paths)
}

/// Throughput summary of a run, finished or in progress.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSummary {
    pub run_id: String,
    pub total_jobs: usize,
    pub counts: StatusCounts,
    pub samples: Vec<ThroughputSample>,
    /// Jobs with start and finish timestamps.
    pub timed_jobs: usize,
    /// Sum of per-job execution time.
    pub busy_ms: u64,
    /// First start to last finish.
    pub wall_ms: u64,
}

impl MonitorSummary {
    pub fn average_job_ms(&self) -> f64 {
        if self.timed_jobs == 0 {
            0.0
        } else {
            self.busy_ms as f64 / self.timed_jobs as f64
        }
    }
}

pub fn monitor(out: &Path, run_id: &str) -> Result<MonitorSummary> {
    let store = ArtifactStore::open(out)?;
    let key = layout::manifest(run_id);
    if !store.exists(&key) {
        return Err(Error::NotFound(format!("run `{run_id}`")));
    }
    let manifest = RunManifest::from_json(&store.fetch_string(&key)?)?;
    let samples = match store.fetch_string(&layout::throughput(run_id)) {
        Ok(text) => parse_throughput_csv(&text)?,
        Err(Error::NotFound(_)) => manifest.throughput.clone(),
        Err(e) => return Err(e),
    };
    let counts = samples.last().map_or_else(
        || StatusCounts {
            pending: manifest.count(JobStatus::Pending),
            running: manifest.count(JobStatus::Running),
            completed: manifest.count(JobStatus::Completed),
            failed: manifest.count(JobStatus::Failed),
        },
        |s| StatusCounts {
            pending: s.pending,
            running: s.running,
            completed: s.completed,
            failed: s.failed,
        },
    );
    let timed: Vec<(u64, u64)> = manifest
        .jobs
        .iter()
        .filter(|j| !j.resumed)
        .filter_map(|j| Some((j.started_ms?, j.finished_ms?)))
        .collect();
    let busy_ms = timed.iter().map(|(s, f)| f.saturating_sub(*s)).sum();
    let wall_ms = match (timed.iter().map(|t| t.0).min(), timed.iter().map(|t| t.1).max()) {
        (Some(a), Some(b)) => b.saturating_sub(a),
        _ => 0,
    };
    Ok(MonitorSummary {
        run_id: run_id.to_string(),
        total_jobs: manifest.jobs.len(),
        counts,
        samples,
        timed_jobs: timed.len(),
        busy_ms,
        wall_ms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub workers: usize,
    pub run_id: String,
    pub wall: Duration,
    pub speedup: f64,
    /// Scenarios, results and report match the first row byte for byte.
    pub identical: bool,
}

/// Keys under a run's scenarios, results and report, relative to the run directory.
pub fn comparable_artifacts(store: &ArtifactStore, run_id: &str) -> Result<BTreeSet<String>> {
    let dir = layout::run_dir(run_id);
    let mut out = BTreeSet::new();
    for sub in ["scenarios", "results", "report"] {
        for key in store.list(&format!("{dir}/{sub}"))? {
            out.insert(key[dir.len() + 1..].to_string());
        }
    }
    Ok(out)
}

/// True when both runs hold the same comparable artifacts with equal bytes.
pub fn runs_identical(store: &ArtifactStore, a: &str, b: &str) -> Result<bool> {
    let ka = comparable_artifacts(store, a)?;
    if ka != comparable_artifacts(store, b)? {
        return Ok(false);
    }
    for k in &ka {
        let pa = format!("{}/{k}", layout::run_dir(a));
        let pb = format!("{}/{k}", layout::run_dir(b));
        if store.fetch(&pa)? != store.fetch(&pb)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs the same workload once per worker count into fresh runs `<run_id>-k<k>`.
pub fn bench(config: &RunConfig, worker_counts: &[usize]) -> StageResult<Vec<BenchRow>> {
    let base = config.run_id();
    let mut rows: Vec<BenchRow> = Vec::new();
    for &k in worker_counts {
        let mut cfg = config.clone();
        cfg.workers = k.max(1);
        cfg.run_id = Some(format!("{base}-k{k}"));
        let ctx = RunContext::prepare(cfg)?;
        if ctx.store.exists(&layout::manifest(&ctx.run_id)) {
            return Err(Error::AlreadyExists(format!("benchmark run `{}`", ctx.run_id))).in_stage(Stage::Config);
        }
        let out = run_context(&ctx)?;
        let (speedup, identical) = match rows.first() {
            Some(first) => (
                first.wall.as_secs_f64() / out.wall.as_secs_f64().max(1e-9),
                runs_identical(&ctx.store, &first.run_id, &ctx.run_id).in_stage(Stage::Report)?,
            ),
            None => (1.0, true),
        };
        rows.push(BenchRow {
            workers: k,
            run_id: ctx.run_id.clone(),
            wall: out.wall,
            speedup,
            identical,
        });
    }
    Ok(rows)
}
