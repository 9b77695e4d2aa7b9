//! Hourly load, PV and EV-charging profiles for one simulated year.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::feeder::CustomerSite;
use crate::seed;
use crate::{Error, Result, HOURS_PER_YEAR};

const DAYS: usize = HOURS_PER_YEAR / 24;

/// Exactly 8,760 finite kW values.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyProfile(Vec<f64>);

impl HourlyProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != HOURS_PER_YEAR {
            return Err(Error::LengthMismatch {
                expected: HOURS_PER_YEAR,
                actual: values.len(),
            });
        }
        if let Some(h) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("profile value at hour {h} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; HOURS_PER_YEAR])
    }

    pub fn constant(kw: f64) -> Self {
        Self(vec![kw; HOURS_PER_YEAR])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn peak(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `hour,kw` columnar text, 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(HOURS_PER_YEAR * 16);
        s.push_str("hour,kw\n");
        for (h, v) in self.0.iter().enumerate() {
            let _ = writeln!(s, "{h},{v:.6}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut values = Vec::with_capacity(HOURS_PER_YEAR);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse("profile csv", e))?;
            let hour: usize = field(&rec, 0, "profile csv")?;
            if hour != i {
                return Err(Error::parse("profile csv", format!("row {i} has hour {hour}")));
            }
            values.push(field(&rec, 1, "profile csv")?);
        }
        Self::new(values)
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    rec.get(i)
        .ok_or_else(|| Error::parse(what, format!("missing column {i}")))?
        .trim()
        .parse()
        .map_err(|e: T::Err| Error::parse(what, e))
}

/// One year of weather. Irradiance is the fraction of rated plane-of-array output.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherYear {
    pub irradiance: Vec<f64>,
    pub temperature: Vec<f64>,
}

impl WeatherYear {
    /// Synthetic clear-sky year with cloud attenuation shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv(include_str!("../fixtures/weather_synthetic.csv")).expect("bundled weather parses")
    }

    pub fn new(irradiance: Vec<f64>, temperature: Vec<f64>) -> Result<Self> {
        for len in [irradiance.len(), temperature.len()] {
            if len != HOURS_PER_YEAR {
                return Err(Error::LengthMismatch {
                    expected: HOURS_PER_YEAR,
                    actual: len,
                });
            }
        }
        if let Some(h) = irradiance.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "irradiance {} at hour {h} outside [0, 1]",
                irradiance[h]
            )));
        }
        Ok(Self {
            irradiance,
            temperature,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Parses `hour,irradiance,temp_c` rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut irr = Vec::with_capacity(HOURS_PER_YEAR);
        let mut temp = Vec::with_capacity(HOURS_PER_YEAR);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse("weather csv", e))?;
            let hour: usize = field(&rec, 0, "weather csv")?;
            if hour != i {
                return Err(Error::parse("weather csv", format!("row {i} has hour {hour}")));
            }
            irr.push(field(&rec, 1, "weather csv")?);
            temp.push(field(&rec, 2, "weather csv")?);
        }
        Self::new(irr, temp)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("hour,irradiance,temp_c\n");
        for h in 0..HOURS_PER_YEAR {
            let _ = writeln!(s, "{h},{:.6},{:.3}", self.irradiance[h], self.temperature[h]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedHour {
    pub hour: u32,
    pub weight: f64,
}

/// Daily EV charging: one block per day, start and duration drawn independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvBehavior {
    pub start_hour: Vec<WeightedHour>,
    pub duration_hours: Vec<WeightedHour>,
}

impl Default for EvBehavior {
    fn default() -> Self {
        let w = |hour, weight| WeightedHour { hour, weight };
        Self {
            start_hour: vec![
                w(15, 0.05),
                w(16, 0.10),
                w(17, 0.20),
                w(18, 0.30),
                w(19, 0.20),
                w(20, 0.15),
            ],
            duration_hours: vec![w(2, 1.0), w(3, 1.0), w(4, 1.0)],
        }
    }
}

impl EvBehavior {
    pub fn fixed(start: u32, duration: u32) -> Self {
        Self {
            start_hour: vec![WeightedHour { hour: start, weight: 1.0 }],
            duration_hours: vec![WeightedHour { hour: duration, weight: 1.0 }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let latest = self.start_hour.iter().map(|w| w.hour).max();
        let longest = self.duration_hours.iter().map(|w| w.hour).max();
        match (latest, longest) {
            (Some(s), Some(d)) if d >= 1 && s + d <= 24 => {}
            _ => {
                return Err(Error::Config(
                    "EV behavior needs start hours and durations with start + duration <= 24".into(),
                ))
            }
        }
        if self.duration_hours.iter().any(|w| w.hour == 0) {
            return Err(Error::Config("EV charging durations must be >= 1 h".into()));
        }
        WeightedIndex::new(self.start_hour.iter().map(|w| w.weight))
            .and(WeightedIndex::new(self.duration_hours.iter().map(|w| w.weight)))
            .map(|_| ())
            .map_err(|e| Error::Config(format!("EV behavior weights: {e}")))
    }
}

/// Draw record for one charging day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvDraw {
    pub day: usize,
    pub start: u32,
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    /// Half-width of the uniform multiplicative per-hour load noise.
    pub load_noise: f64,
    pub pv_derate: f64,
    pub ev_behavior: EvBehavior,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            load_noise: 0.10,
            pv_derate: 0.85,
            ev_behavior: EvBehavior::default(),
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.load_noise) {
            return Err(Error::Config(format!(
                "load_noise {} outside [0, 1)",
                self.load_noise
            )));
        }
        if !(self.pv_derate > 0.0 && self.pv_derate <= 1.0) {
            return Err(Error::Config(format!(
                "pv_derate {} outside (0, 1]",
                self.pv_derate
            )));
        }
        self.ev_behavior.validate()
    }
}

const TAG_LOAD: u64 = 0x4c4f_4144;
const TAG_EV: u64 = 0x4556;

// Relative hourly demand, hour 0..23.
const WINTER_WEEKDAY: [f64; 24] = [
    0.42, 0.38, 0.36, 0.36, 0.38, 0.46, 0.62, 0.78, 0.74, 0.60, 0.52, 0.50, 0.49, 0.48, 0.48,
    0.52, 0.62, 0.82, 0.96, 1.00, 0.94, 0.82, 0.66, 0.52,
];
const WINTER_WEEKEND: [f64; 24] = [
    0.46, 0.41, 0.38, 0.37, 0.37, 0.40, 0.47, 0.58, 0.70, 0.76, 0.72, 0.66, 0.62, 0.60, 0.60,
    0.63, 0.70, 0.84, 0.95, 0.98, 0.92, 0.82, 0.68, 0.55,
];
const SUMMER_WEEKDAY: [f64; 24] = [
    0.40, 0.36, 0.34, 0.33, 0.34, 0.38, 0.46, 0.54, 0.56, 0.58, 0.62, 0.68, 0.74, 0.80, 0.86,
    0.92, 0.97, 1.00, 0.98, 0.92, 0.84, 0.74, 0.60, 0.48,
];
const SUMMER_WEEKEND: [f64; 24] = [
    0.44, 0.39, 0.36, 0.35, 0.35, 0.37, 0.42, 0.50, 0.60, 0.68, 0.74, 0.80, 0.85, 0.89, 0.92,
    0.95, 0.98, 1.00, 0.97, 0.91, 0.84, 0.75, 0.62, 0.50,
];

/// Seasonal-diurnal load shape with multiplicative noise, scaled so the annual
/// peak equals `customer.base_load_scale`.
pub fn build_load_profile(
    customer: &CustomerSite,
    year: u32,
    master_seed: u64,
    config: &ProfileConfig,
) -> HourlyProfile {
    if customer.base_load_scale == 0.0 {
        return HourlyProfile::zeros();
    }
    let mut rng = seed::rng_from(&[
        TAG_LOAD,
        master_seed,
        seed::hash_str(&customer.id),
        u64::from(year),
    ]);
    let mut values = Vec::with_capacity(HOURS_PER_YEAR);
    for day in 0..DAYS {
        let phase = 2.0 * std::f64::consts::PI * (day as f64 - 15.0) / DAYS as f64;
        let summer = 0.5 - 0.5 * phase.cos();
        let amplitude = 0.8 + 0.2 * phase.cos().abs();
        let weekend = day % 7 >= 5;
        let (w, s) = if weekend {
            (&WINTER_WEEKEND, &SUMMER_WEEKEND)
        } else {
            (&WINTER_WEEKDAY, &SUMMER_WEEKDAY)
        };
        for h in 0..24 {
            let shape = amplitude * ((1.0 - summer) * w[h] + summer * s[h]);
            let noise = 1.0 + config.load_noise * rng.gen_range(-1.0..=1.0);
            values.push(shape * noise);
        }
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    let scale = customer.base_load_scale / peak;
    for v in &mut values {
        *v *= scale;
    }
    HourlyProfile(values)
}

/// `capacity * irradiance * derate` per hour.
pub fn build_pv_profile(capacity: f64, weather: &WeatherYear, derate: f64) -> Result<HourlyProfile> {
    if !(capacity >= 0.0) || !capacity.is_finite() {
        return Err(Error::Domain(format!("PV capacity {capacity} must be >= 0")));
    }
    if !(derate > 0.0 && derate <= 1.0) {
        return Err(Error::Domain(format!("derate {derate} outside (0, 1]")));
    }
    Ok(HourlyProfile(
        weather
            .irradiance
            .iter()
            .map(|irr| capacity * irr * derate)
            .collect(),
    ))
}

pub fn build_ev_profile<R: Rng + ?Sized>(
    charger: f64,
    behavior: &EvBehavior,
    rng: &mut R,
) -> Result<HourlyProfile> {
    build_ev_profile_logged(charger, behavior, rng).map(|(p, _)| p)
}

/// Like [`build_ev_profile`], also returning the per-day draws.
pub fn build_ev_profile_logged<R: Rng + ?Sized>(
    charger: f64,
    behavior: &EvBehavior,
    rng: &mut R,
) -> Result<(HourlyProfile, Vec<EvDraw>)> {
    if !(charger >= 0.0) || !charger.is_finite() {
        return Err(Error::Domain(format!("charger rating {charger} must be >= 0")));
    }
    behavior.validate()?;
    if charger == 0.0 {
        return Ok((HourlyProfile::zeros(), Vec::new()));
    }
    let starts = WeightedIndex::new(behavior.start_hour.iter().map(|w| w.weight))
        .expect("validated weights");
    let durations = WeightedIndex::new(behavior.duration_hours.iter().map(|w| w.weight))
        .expect("validated weights");
    let mut values = vec![0.0; HOURS_PER_YEAR];
    let mut draws = Vec::with_capacity(DAYS);
    for day in 0..DAYS {
        let start = behavior.start_hour[starts.sample(rng)].hour;
        let duration = behavior.duration_hours[durations.sample(rng)].hour;
        let base = day * 24 + start as usize;
        for v in &mut values[base..base + duration as usize] {
            *v = charger;
        }
        draws.push(EvDraw {
            day,
            start,
            duration,
        });
    }
    Ok((HourlyProfile(values), draws))
}

/// Pointwise `load - pv + ev` over raw series.
pub fn net_load_series(load: &[f64], pv: &[f64], ev: &[f64]) -> Result<Vec<f64>> {
    for other in [pv.len(), ev.len()] {
        if other != load.len() {
            return Err(Error::LengthMismatch {
                expected: load.len(),
                actual: other,
            });
        }
    }
    Ok(load
        .iter()
        .zip(pv)
        .zip(ev)
        .map(|((l, p), e)| l - p + e)
        .collect())
}

pub fn net_load(load: &HourlyProfile, pv: &HourlyProfile, ev: &HourlyProfile) -> Result<HourlyProfile> {
    net_load_series(&load.0, &pv.0, &ev.0).map(HourlyProfile)
}

/// Active and reactive hourly injection of one customer (positive = consumption).
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerInjection {
    pub p_kw: HourlyProfile,
    pub q_kvar: HourlyProfile,
}

/// Inputs shared by every customer of one (trial, year) job.
#[derive(Debug, Clone, Copy)]
pub struct JobProfileContext<'a> {
    pub weather: &'a WeatherYear,
    pub config: &'a ProfileConfig,
    pub master_seed: u64,
    pub trial: u32,
    pub year: u32,
    /// Load power factor (lagging) applied to consumption; PV is unity.
    pub power_factor: f64,
}

/// Net injection of one customer given its installed PV and EV kW.
pub fn customer_injection(
    customer: &CustomerSite,
    pv_kw: f64,
    ev_kw: f64,
    ctx: &JobProfileContext<'_>,
) -> Result<CustomerInjection> {
    let load = build_load_profile(customer, ctx.year, ctx.master_seed, ctx.config);
    let pv = build_pv_profile(pv_kw, ctx.weather, ctx.config.pv_derate)?;
    let mut rng = seed::rng_from(&[
        TAG_EV,
        ctx.master_seed,
        seed::hash_str(&customer.id),
        u64::from(ctx.year),
        u64::from(ctx.trial),
    ]);
    let ev = build_ev_profile(ev_kw, &ctx.config.ev_behavior, &mut rng)?;
    let p = net_load(&load, &pv, &ev)?;
    let tan_phi = reactive_ratio(ctx.power_factor)?;
    let q = load
        .0
        .iter()
        .zip(&ev.0)
        .map(|(l, e)| (l + e) * tan_phi)
        .collect();
    Ok(CustomerInjection {
        p_kw: p,
        q_kvar: HourlyProfile(q),
    })
}

/// `tan(acos(pf))` for a lagging power factor in (0, 1].
pub fn reactive_ratio(power_factor: f64) -> Result<f64> {
    if !(power_factor > 0.0 && power_factor <= 1.0) {
        return Err(Error::Domain(format!(
            "power factor {power_factor} outside (0, 1]"
        )));
    }
    Ok((1.0 - power_factor * power_factor).sqrt() / power_factor)
}
