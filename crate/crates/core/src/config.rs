//! Run configuration: TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adoption::AdoptionConfig;
use crate::feeder::DEFAULT_HOUSES_PER_KVA;
use crate::postprocess::{CircleSettings, OverloadSettings};
use crate::powerflow::PowerFlowConfig;
use crate::profiles::ProfileConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub feeder: PathBuf,
    /// Hourly weather CSV; the bundled synthetic year when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weather: Option<PathBuf>,
    pub years: u32,
    pub trials: u32,
    pub seed: u64,
    /// Worker threads; 0 means available hardware parallelism.
    pub workers: usize,
    pub max_retries: u32,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub houses_per_kva: f64,
    pub overload: OverloadSettings,
    pub adoption: AdoptionConfig,
    pub profiles: ProfileConfig,
    pub powerflow: PowerFlowConfig,
    pub report: CircleSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            feeder: PathBuf::new(),
            weather: None,
            years: 10,
            trials: 20,
            seed: 1,
            workers: 0,
            max_retries: 0,
            out: PathBuf::from("out"),
            run_id: None,
            houses_per_kva: DEFAULT_HOUSES_PER_KVA,
            overload: OverloadSettings::default(),
            adoption: AdoptionConfig::default(),
            profiles: ProfileConfig::default(),
            powerflow: PowerFlowConfig::default(),
            report: CircleSettings::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub feeder: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub years: Option<u32>,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub run_id: Option<String>,
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.feeder = resolve(base_dir, &cfg.feeder);
        cfg.weather = cfg.weather.map(|w| resolve(base_dir, &w));
        cfg.out = resolve(base_dir, &cfg.out);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        if let Some(v) = &o.feeder {
            self.feeder = v.clone();
        }
        if let Some(v) = &o.weather {
            self.weather = Some(v.clone());
        }
        if let Some(v) = o.years {
            self.years = v;
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.threshold {
            self.overload.threshold = v;
        }
        if let Some(v) = &o.run_id {
            self.run_id = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feeder.as_os_str().is_empty() {
            return Err(Error::Config("no feeder given".into()));
        }
        if self.years == 0 || self.trials == 0 {
            return Err(Error::Config("years and trials must be at least 1".into()));
        }
        if self.years > 999 || self.trials > 99_999 {
            return Err(Error::Config("at most 999 years and 99999 trials".into()));
        }
        if self.max_retries > 1 {
            return Err(Error::Config("max_retries is 0 or 1".into()));
        }
        if !(self.houses_per_kva > 0.0) {
            return Err(Error::Config("houses_per_kva must be positive".into()));
        }
        if !(self.overload.threshold > 0.0) || !self.overload.threshold.is_finite() {
            return Err(Error::Config("threshold must be positive".into()));
        }
        if self.overload.min_duration_hours == 0 {
            return Err(Error::Config("min_duration_hours must be at least 1".into()));
        }
        if let Some(id) = &self.run_id {
            let ok = !id.is_empty()
                && id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
                && id != "."
                && id != "..";
            if !ok {
                return Err(Error::Config(format!("run id `{id}` must be [A-Za-z0-9_.-]+")));
            }
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.profiles.validate().map_err(wrap)?;
        self.powerflow.validate().map_err(wrap)?;
        self.report.validate()?;
        Ok(())
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("s{}_n{}_m{}", self.seed, self.years, self.trials))
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.as_os_str().is_empty() || p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
