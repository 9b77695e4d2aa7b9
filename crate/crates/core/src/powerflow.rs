//! Radial power flow by forward-backward sweep and the 8,760-hour yearly run.
//!
//! Loads are constant-power and expressed in per-unit on `base_kva`. The
//! source bus is held at 1.0 pu. Service transformers are represented only
//! through their loading metric: their series impedance is not part of the
//! network solve.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::feeder::{validate_radial, FeederModel};
use crate::profiles::CustomerInjection;
use crate::{Error, Result, HOURS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Fail the whole job on the first non-converged hour.
    Abort,
    /// Record the hour as failed and keep going.
    MarkFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerFlowConfig {
    /// System power base for the per-unit line impedances, kVA.
    pub base_kva: f64,
    /// Lagging power factor applied to consumption.
    pub power_factor: f64,
    /// Max voltage update (pu) at which the sweep is considered converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub failure_policy: FailurePolicy,
    /// Constant kVA added to every transformer loading sample.
    pub no_load_kva: f64,
}

impl Default for PowerFlowConfig {
    fn default() -> Self {
        Self {
            base_kva: 1000.0,
            power_factor: 0.95,
            tolerance: 1e-10,
            max_iterations: 50,
            failure_policy: FailurePolicy::Abort,
            no_load_kva: 0.0,
        }
    }
}

impl PowerFlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_kva > 0.0) {
            return Err(Error::Config("base_kva must be positive".into()));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(Error::Config("power_factor must be in (0, 1]".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config(
                "tolerance must be positive and max_iterations >= 1".into(),
            ));
        }
        if !(self.no_load_kva >= 0.0) {
            return Err(Error::Config("no_load_kva must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSolution {
    /// Per-bus complex voltage, pu, in feeder bus order.
    pub voltage: Vec<Complex64>,
    /// Sending-end complex power per line (feeder line order), kVA.
    pub branch_flow: Vec<Complex64>,
    /// Apparent power through each transformer, kVA.
    pub transformer_loading: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest voltage update of the last iteration, pu.
    pub residual: f64,
    /// Complex power leaving the source, pu.
    pub source_power: Complex64,
    /// Sum of the constant-power loads, pu.
    pub load_power: Complex64,
    /// Sum of `z |I|^2` over all lines, pu.
    pub loss_power: Complex64,
}

impl SnapshotSolution {
    pub fn balance_error(&self) -> f64 {
        power_balance_error(self.source_power, self.load_power, self.loss_power)
    }
}

/// `|S_source - S_load - S_loss| / |S_source|`, or the absolute mismatch
/// when the source carries no power.
pub fn power_balance_error(source: Complex64, load: Complex64, loss: Complex64) -> f64 {
    let mismatch = (source - load - loss).norm();
    let scale = source.norm();
    if scale > 0.0 {
        mismatch / scale
    } else {
        mismatch
    }
}

/// Precomputed sweep ordering for one feeder.
#[derive(Debug, Clone)]
pub struct RadialSolver {
    order: Vec<usize>,
    parent: Vec<usize>,
    parent_line: Vec<usize>,
    /// Impedance of the segment feeding each bus (zero at the source).
    z: Vec<Complex64>,
    source: usize,
    n_lines: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl From<&PowerFlowConfig> for SweepSettings {
    fn from(c: &PowerFlowConfig) -> Self {
        Self {
            tolerance: c.tolerance,
            max_iterations: c.max_iterations,
        }
    }
}

/// Raw sweep output with per-bus injections only.
#[derive(Debug, Clone, PartialEq)]
pub struct BusSolution {
    pub voltage: Vec<Complex64>,
    /// Current flowing from parent into each bus (zero at the source), pu.
    pub branch_current: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub source_power: Complex64,
    pub load_power: Complex64,
    pub loss_power: Complex64,
}

impl RadialSolver {
    pub fn new(feeder: &FeederModel) -> Result<Self> {
        let topo = validate_radial(feeder)?;
        let n = feeder.buses.len();
        let source = topo.order[0];
        let mut parent = vec![usize::MAX; n];
        let mut parent_line = vec![usize::MAX; n];
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..n {
            if let (Some(p), Some(li)) = (topo.parent[b], topo.parent_line[b]) {
                parent[b] = p;
                parent_line[b] = li;
                let line = &feeder.lines[li];
                z[b] = Complex64::new(line.resistance, line.reactance);
            }
        }
        Ok(Self {
            order: topo.order,
            parent,
            parent_line,
            z,
            source,
            n_lines: feeder.lines.len(),
        })
    }

    pub fn bus_count(&self) -> usize {
        self.parent.len()
    }

    /// Solves with `loads[b]` the constant complex power consumed at bus `b`, pu.
    pub fn solve_bus_loads(&self, loads: &[Complex64], settings: SweepSettings) -> Result<BusSolution> {
        let n = self.bus_count();
        if loads.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: loads.len(),
            });
        }
        if let Some(b) = loads.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::Domain(format!("non-finite injection at bus index {b}")));
        }
        let mut v = vec![Complex64::new(1.0, 0.0); n];
        let mut current = vec![Complex64::new(0.0, 0.0); n];
        let mut converged = false;
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        while iterations < settings.max_iterations {
            iterations += 1;
            self.backward(loads, &v, &mut current);
            residual = 0.0;
            for &b in &self.order[1..] {
                let updated = v[self.parent[b]] - self.z[b] * current[b];
                residual = f64::max(residual, (updated - v[b]).norm());
                v[b] = updated;
            }
            if !residual.is_finite() {
                break;
            }
            if residual < settings.tolerance {
                converged = true;
                break;
            }
        }
        // currents consistent with the final voltages
        self.backward(loads, &v, &mut current);
        let source_power = v[self.source] * current[self.source].conj();
        let load_power = loads.iter().sum();
        let loss_power = self.order[1..]
            .iter()
            .map(|&b| self.z[b] * current[b].norm_sqr())
            .sum();
        Ok(BusSolution {
            voltage: v,
            branch_current: {
                current[self.source] = Complex64::new(0.0, 0.0);
                current
            },
            converged,
            iterations,
            residual,
            source_power,
            load_power,
            loss_power,
        })
    }

    /// Leaf-to-root accumulation; afterwards `current[b]` is the current
    /// entering `b` from its parent, and `current[source]` the total.
    fn backward(&self, loads: &[Complex64], v: &[Complex64], current: &mut [Complex64]) {
        for b in 0..loads.len() {
            current[b] = (loads[b] / v[b]).conj();
        }
        for &b in self.order[1..].iter().rev() {
            let c = current[b];
            current[self.parent[b]] += c;
        }
    }

    /// Sending-end power per line, pu.
    pub fn branch_flows(&self, sol: &BusSolution) -> Vec<Complex64> {
        let mut flows = vec![Complex64::new(0.0, 0.0); self.n_lines];
        for &b in &self.order[1..] {
            flows[self.parent_line[b]] = sol.voltage[self.parent[b]] * sol.branch_current[b].conj();
        }
        flows
    }
}

/// Solves one hour given each customer's `(kW, kvar)` consumption.
///
/// Customers missing from `hour_injections` draw nothing. Fails on
/// non-convergence.
pub fn solve_snapshot(
    feeder: &FeederModel,
    hour_injections: &BTreeMap<String, (f64, f64)>,
    config: &PowerFlowConfig,
) -> Result<SnapshotSolution> {
    config.validate()?;
    for id in hour_injections.keys() {
        if !feeder.customers.iter().any(|c| &c.id == id) {
            return Err(Error::Unknown {
                kind: "customer",
                id: id.clone(),
            });
        }
    }
    let solver = RadialSolver::new(feeder)?;
    let mut tx_power = vec![Complex64::new(0.0, 0.0); feeder.transformers.len()];
    for c in &feeder.customers {
        if let Some(&(p, q)) = hour_injections.get(&c.id) {
            let ti = feeder
                .transformer_index(&c.transformer_id)
                .expect("validated feeder");
            tx_power[ti] += Complex64::new(p, q);
        }
    }
    let mut loads = vec![Complex64::new(0.0, 0.0); feeder.buses.len()];
    for (t, s) in feeder.transformers.iter().zip(&tx_power) {
        let b = feeder.bus_index(&t.bus).expect("validated feeder");
        loads[b] += s / config.base_kva;
    }
    let sol = solver.solve_bus_loads(&loads, config.into())?;
    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            residual: sol.residual,
            hour: None,
        });
    }
    let branch_flow = solver
        .branch_flows(&sol)
        .into_iter()
        .map(|f| f * config.base_kva)
        .collect();
    Ok(SnapshotSolution {
        transformer_loading: tx_power
            .iter()
            .map(|s| s.norm() + config.no_load_kva)
            .collect(),
        branch_flow,
        voltage: sol.voltage,
        converged: true,
        iterations: sol.iterations,
        residual: sol.residual,
        source_power: sol.source_power,
        load_power: sol.load_power,
        loss_power: sol.loss_power,
    })
}

/// Hourly aggregate consumption of one transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerSeries {
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

/// Inputs of one yearly job: per-transformer aggregated injections in feeder
/// transformer order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowCase {
    pub trial: u32,
    pub year: u32,
    pub transformers: Vec<TransformerSeries>,
}

impl PowerFlowCase {
    /// Aggregates per-customer injections; every feeder customer must appear exactly once.
    pub fn from_customer_injections(
        feeder: &FeederModel,
        trial: u32,
        year: u32,
        injections: &BTreeMap<String, CustomerInjection>,
    ) -> Result<Self> {
        for id in injections.keys() {
            if !feeder.customers.iter().any(|c| &c.id == id) {
                return Err(Error::Unknown {
                    kind: "customer",
                    id: id.clone(),
                });
            }
        }
        let mut transformers = vec![
            TransformerSeries {
                p_kw: vec![0.0; HOURS_PER_YEAR],
                q_kvar: vec![0.0; HOURS_PER_YEAR],
            };
            feeder.transformers.len()
        ];
        for c in &feeder.customers {
            let inj = injections.get(&c.id).ok_or_else(|| {
                Error::Validation(format!("customer `{}` has no injection profile", c.id))
            })?;
            let ti = feeder.transformer_index(&c.transformer_id).expect("validated");
            let t = &mut transformers[ti];
            for (acc, v) in t.p_kw.iter_mut().zip(inj.p_kw.values()) {
                *acc += v;
            }
            for (acc, v) in t.q_kvar.iter_mut().zip(inj.q_kvar.values()) {
                *acc += v;
            }
        }
        Ok(Self {
            trial,
            year,
            transformers,
        })
    }

    pub fn from_transformer_series(
        feeder: &FeederModel,
        trial: u32,
        year: u32,
        transformers: Vec<TransformerSeries>,
    ) -> Result<Self> {
        if transformers.len() != feeder.transformers.len() {
            return Err(Error::LengthMismatch {
                expected: feeder.transformers.len(),
                actual: transformers.len(),
            });
        }
        for t in &transformers {
            for len in [t.p_kw.len(), t.q_kvar.len()] {
                if len != HOURS_PER_YEAR {
                    return Err(Error::LengthMismatch {
                        expected: HOURS_PER_YEAR,
                        actual: len,
                    });
                }
            }
        }
        Ok(Self {
            trial,
            year,
            transformers,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub snapshots: usize,
    pub converged: usize,
    pub failed_hours: Vec<usize>,
    pub total_iterations: u64,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub max_balance_error: f64,
    pub source_energy_kwh: f64,
    pub load_energy_kwh: f64,
    pub loss_energy_kwh: f64,
    /// Peak loading per transformer, kVA, in feeder transformer order.
    pub transformer_peak_kva: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageEnvelope {
    pub bus: String,
    pub min_pu: f64,
    pub max_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearlyResult {
    pub trial: u32,
    pub year: u32,
    pub transformer_ids: Vec<String>,
    /// `loading[t][h]`, kVA.
    pub loading: Vec<Vec<f64>>,
    pub envelopes: Vec<VoltageEnvelope>,
    pub stats: SolverStats,
}

/// Serialized form of everything but the loading series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub trial: u32,
    pub year: u32,
    pub transformer_ids: Vec<String>,
    pub stats: SolverStats,
    pub voltage_envelope: Vec<VoltageEnvelope>,
}

/// Runs the 8,760 independent snapshots of one case.
pub fn run_yearly(
    feeder: &FeederModel,
    case: &PowerFlowCase,
    config: &PowerFlowConfig,
) -> Result<YearlyResult> {
    config.validate()?;
    if case.transformers.len() != feeder.transformers.len() {
        return Err(Error::LengthMismatch {
            expected: feeder.transformers.len(),
            actual: case.transformers.len(),
        });
    }
    let solver = RadialSolver::new(feeder)?;
    let tx_bus: Vec<usize> = feeder
        .transformers
        .iter()
        .map(|t| feeder.bus_index(&t.bus).expect("validated feeder"))
        .collect();
    let n_bus = feeder.buses.len();
    let n_tx = feeder.transformers.len();
    let settings = SweepSettings::from(config);

    let mut loading = vec![vec![0.0; HOURS_PER_YEAR]; n_tx];
    let mut v_min = vec![f64::INFINITY; n_bus];
    let mut v_max = vec![f64::NEG_INFINITY; n_bus];
    let mut stats = SolverStats {
        snapshots: 0,
        converged: 0,
        failed_hours: Vec::new(),
        total_iterations: 0,
        max_iterations: 0,
        max_residual: 0.0,
        max_balance_error: 0.0,
        source_energy_kwh: 0.0,
        load_energy_kwh: 0.0,
        loss_energy_kwh: 0.0,
        transformer_peak_kva: vec![0.0; n_tx],
    };
    let mut loads = vec![Complex64::new(0.0, 0.0); n_bus];
    #[allow(clippy::needless_range_loop)]
    for h in 0..HOURS_PER_YEAR {
        loads.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
        for (ti, t) in case.transformers.iter().enumerate() {
            let s = Complex64::new(t.p_kw[h], t.q_kvar[h]);
            let kva = s.norm() + config.no_load_kva;
            loading[ti][h] = kva;
            if kva > stats.transformer_peak_kva[ti] {
                stats.transformer_peak_kva[ti] = kva;
            }
            loads[tx_bus[ti]] += s / config.base_kva;
        }
        let sol = solver.solve_bus_loads(&loads, settings)?;
        stats.snapshots += 1;
        stats.total_iterations += sol.iterations as u64;
        stats.max_iterations = stats.max_iterations.max(sol.iterations);
        if !sol.converged {
            match config.failure_policy {
                FailurePolicy::Abort => {
                    return Err(Error::NonConvergence {
                        iterations: sol.iterations,
                        residual: sol.residual,
                        hour: Some(h),
                    })
                }
                FailurePolicy::MarkFailed => {
                    stats.failed_hours.push(h);
                    continue;
                }
            }
        }
        stats.converged += 1;
        stats.max_residual = stats.max_residual.max(sol.residual);
        let balance = power_balance_error(sol.source_power, sol.load_power, sol.loss_power);
        stats.max_balance_error = stats.max_balance_error.max(balance);
        stats.source_energy_kwh += sol.source_power.re * config.base_kva;
        stats.load_energy_kwh += sol.load_power.re * config.base_kva;
        stats.loss_energy_kwh += sol.loss_power.re * config.base_kva;
        for (b, v) in sol.voltage.iter().enumerate() {
            let m = v.norm();
            v_min[b] = v_min[b].min(m);
            v_max[b] = v_max[b].max(m);
        }
    }
    let envelopes = feeder
        .buses
        .iter()
        .enumerate()
        .map(|(b, bus)| VoltageEnvelope {
            bus: bus.id.clone(),
            // a year with every hour failed leaves no samples
            min_pu: if v_min[b].is_finite() { v_min[b] } else { 0.0 },
            max_pu: if v_max[b].is_finite() { v_max[b] } else { 0.0 },
        })
        .collect();
    Ok(YearlyResult {
        trial: case.trial,
        year: case.year,
        transformer_ids: feeder.transformers.iter().map(|t| t.id.clone()).collect(),
        loading,
        envelopes,
        stats,
    })
}

pub fn extract_transformer_series<'a>(result: &'a YearlyResult, transformer_id: &str) -> Result<&'a [f64]> {
    result
        .transformer_ids
        .iter()
        .position(|t| t == transformer_id)
        .map(|i| result.loading[i].as_slice())
        .ok_or_else(|| Error::Unknown {
            kind: "transformer",
            id: transformer_id.to_string(),
        })
}

impl YearlyResult {
    pub fn summary(&self) -> ResultSummary {
        ResultSummary {
            trial: self.trial,
            year: self.year,
            transformer_ids: self.transformer_ids.clone(),
            stats: self.stats.clone(),
            voltage_envelope: self.envelopes.clone(),
        }
    }

    /// `result.json` contents.
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        s.push('\n');
        s
    }

    /// `transformer_loading.csv`: one row per hour, one kVA column per transformer.
    pub fn loading_csv(&self) -> String {
        let mut s = String::with_capacity(HOURS_PER_YEAR * (8 + 12 * self.loading.len()));
        s.push_str("hour");
        for id in &self.transformer_ids {
            s.push(',');
            s.push_str(id);
        }
        s.push('\n');
        for h in 0..HOURS_PER_YEAR {
            let _ = write!(s, "{h}");
            for series in &self.loading {
                let _ = write!(s, ",{:.6}", series[h]);
            }
            s.push('\n');
        }
        s
    }
}

/// Parsed `transformer_loading.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingTable {
    pub transformer_ids: Vec<String>,
    pub series: Vec<Vec<f64>>,
}

impl LoadingTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("loading csv", "empty file"))?;
        let mut cols = header.split(',');
        if cols.next() != Some("hour") {
            return Err(Error::parse("loading csv", "first column must be `hour`"));
        }
        let transformer_ids: Vec<String> = cols.map(str::to_string).collect();
        let mut series = vec![Vec::with_capacity(HOURS_PER_YEAR); transformer_ids.len()];
        for (i, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let hour: usize = fields
                .next()
                .and_then(|h| h.parse().ok())
                .ok_or_else(|| Error::parse("loading csv", format!("bad hour on row {i}")))?;
            if hour != i {
                return Err(Error::parse("loading csv", format!("row {i} has hour {hour}")));
            }
            for (t, s) in series.iter_mut().enumerate() {
                let v: f64 = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Error::parse("loading csv", format!("bad value row {i} col {t}")))?;
                s.push(v);
            }
            if fields.next().is_some() {
                return Err(Error::parse("loading csv", format!("extra columns on row {i}")));
            }
        }
        if let Some(s) = series.first() {
            if s.len() != HOURS_PER_YEAR {
                return Err(Error::LengthMismatch {
                    expected: HOURS_PER_YEAR,
                    actual: s.len(),
                });
            }
        }
        Ok(Self {
            transformer_ids,
            series,
        })
    }
}
