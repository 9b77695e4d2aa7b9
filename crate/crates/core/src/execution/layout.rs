//! Normative artifact keys for a run.

pub fn run_dir(run_id: &str) -> String {
    format!("runs/{run_id}")
}

pub fn scenario(run_id: &str, trial: u32, year: u32) -> String {
    format!("runs/{run_id}/scenarios/trial_{trial}/year_{year}.json")
}

/// Deterministic job id for (run, trial, year).
pub fn job_id(run_id: &str, trial: u32, year: u32) -> String {
    format!("{run_id}-t{trial:05}-y{year:03}")
}

pub fn bundle_dir(run_id: &str, job_id: &str) -> String {
    format!("runs/{run_id}/jobs/{job_id}/bundle")
}

pub fn result_dir(run_id: &str, trial: u32, year: u32) -> String {
    format!("runs/{run_id}/results/trial_{trial}/year_{year}")
}

pub fn result_json(run_id: &str, trial: u32, year: u32) -> String {
    format!("{}/result.json", result_dir(run_id, trial, year))
}

pub fn loading_csv(run_id: &str, trial: u32, year: u32) -> String {
    format!("{}/transformer_loading.csv", result_dir(run_id, trial, year))
}

pub fn manifest(run_id: &str) -> String {
    format!("runs/{run_id}/manifest.json")
}

pub fn throughput(run_id: &str) -> String {
    format!("runs/{run_id}/throughput.csv")
}

pub fn inputs(run_id: &str, name: &str) -> String {
    format!("runs/{run_id}/inputs/{name}")
}

pub fn report(run_id: &str, name: &str) -> String {
    format!("runs/{run_id}/report/{name}")
}
