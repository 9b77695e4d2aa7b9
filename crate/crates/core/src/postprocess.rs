//! Transformer overload metrics over the `n x m` yearly results.
//!
//! Two metrics drive the report: the first year a transformer overloads in
//! each trial, and for every year the fraction of trials with at least one
//! overloaded hour. Frequencies are kept as integer tallies so they are exact
//! `k / m` rationals regardless of reduction order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::execution::{layout, ArtifactStore};
use crate::feeder::FeederModel;
use crate::powerflow::LoadingTable;
use crate::{Error, Result, HOURS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverloadSettings {
    /// Overload when loading exceeds `threshold * rating`.
    pub threshold: f64,
    /// Only runs of at least this many consecutive overloaded hours count.
    pub min_duration_hours: usize,
}

impl Default for OverloadSettings {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            min_duration_hours: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationCounts {
    pub violation_hours: u32,
    pub peak_loading_ratio: f64,
}

pub fn detect_overloads(series: &[f64], rating: f64, settings: &OverloadSettings) -> Result<ViolationCounts> {
    if series.len() != HOURS_PER_YEAR {
        return Err(Error::LengthMismatch {
            expected: HOURS_PER_YEAR,
            actual: series.len(),
        });
    }
    if !(rating > 0.0) || !(settings.threshold > 0.0) {
        return Err(Error::Domain(format!(
            "rating {rating} and threshold {} must be positive",
            settings.threshold
        )));
    }
    let limit = settings.threshold * rating;
    let min_run = settings.min_duration_hours.max(1);
    let mut hours = 0u32;
    let mut run = 0usize;
    let mut peak = 0.0f64;
    for &v in series {
        peak = peak.max(v);
        if v > limit {
            run += 1;
        } else {
            if run >= min_run {
                hours += run as u32;
            }
            run = 0;
        }
    }
    if run >= min_run {
        hours += run as u32;
    }
    Ok(ViolationCounts {
        violation_hours: hours,
        peak_loading_ratio: peak / rating,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub transformer_id: String,
    pub trial: u32,
    pub year: u32,
    pub violation_hours: u32,
    pub peak_loading_ratio: f64,
}

/// One record per transformer of a parsed loading table.
pub fn records_from_loading(
    table: &LoadingTable,
    feeder: &FeederModel,
    trial: u32,
    year: u32,
    settings: &OverloadSettings,
) -> Result<Vec<ViolationRecord>> {
    table
        .transformer_ids
        .iter()
        .zip(&table.series)
        .map(|(id, series)| {
            let t = feeder.transformer(id).ok_or_else(|| Error::Unknown {
                kind: "transformer",
                id: id.clone(),
            })?;
            let c = detect_overloads(series, t.rating, settings)?;
            Ok(ViolationRecord {
                transformer_id: id.clone(),
                trial,
                year,
                violation_hours: c.violation_hours,
                peak_loading_ratio: c.peak_loading_ratio,
            })
        })
        .collect()
}

/// Smallest 1-based year with a nonzero count.
pub fn first_violation_year(counts: &[u32]) -> Option<u32> {
    counts.iter().position(|c| *c > 0).map(|i| i as u32 + 1)
}

/// `trials_with_violation / trials`, kept as integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frequency {
    pub trials_with_violation: u32,
    pub trials: u32,
}

impl Frequency {
    pub fn value(&self) -> f64 {
        f64::from(self.trials_with_violation) / f64::from(self.trials)
    }
}

pub fn violation_frequency(
    records: &[ViolationRecord],
    transformer_id: &str,
    year: u32,
    trials: u32,
) -> Result<Frequency> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let mut violating: Vec<u32> = records
        .iter()
        .filter(|r| r.transformer_id == transformer_id && r.year == year && r.violation_hours > 0)
        .map(|r| r.trial)
        .collect();
    violating.sort_unstable();
    violating.dedup();
    Ok(Frequency {
        trials_with_violation: violating.len() as u32,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerImpactSummary {
    pub transformer_id: String,
    /// Earliest violating year per trial `1..=m` (`None` if that trial never violates).
    pub first_violation_year: Vec<Option<u32>>,
    /// Per year `1..=n`.
    pub yearly_frequency: Vec<Frequency>,
    pub earliest_year_overall: Option<u32>,
}

impl TransformerImpactSummary {
    pub fn has_violation(&self) -> bool {
        self.earliest_year_overall.is_some()
    }
}

/// Order-independent accumulation of violation records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImpactAccumulator {
    records: BTreeMap<(String, u32, u32), ViolationRecord>,
}

impl ImpactAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, r: ViolationRecord) -> Result<()> {
        let key = (r.transformer_id.clone(), r.trial, r.year);
        match self.records.get(&key) {
            Some(existing) if existing != &r => Err(Error::Validation(format!(
                "conflicting records for transformer {} trial {} year {}",
                r.transformer_id, r.trial, r.year
            ))),
            _ => {
                self.records.insert(key, r);
                Ok(())
            }
        }
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = ViolationRecord>) -> Result<()> {
        records.into_iter().try_for_each(|r| self.add(r))
    }

    /// Associative, commutative union.
    pub fn merge(mut self, other: ImpactAccumulator) -> Result<Self> {
        self.extend(other.records.into_values())?;
        Ok(self)
    }

    pub fn records(&self) -> impl Iterator<Item = &ViolationRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn violation_hours(&self, transformer_id: &str, trial: u32, year: u32) -> u32 {
        self.records
            .get(&(transformer_id.to_string(), trial, year))
            .map_or(0, |r| r.violation_hours)
    }

    /// Summaries for `transformer_ids` over `years x trials`. Missing records count as zero.
    pub fn summarize(&self, transformer_ids: &[String], years: u32, trials: u32) -> Result<Vec<TransformerImpactSummary>> {
        if years == 0 || trials == 0 {
            return Err(Error::Domain("need at least one year and trial".into()));
        }
        transformer_ids
            .iter()
            .map(|id| {
                let first: Vec<Option<u32>> = (1..=trials)
                    .map(|t| {
                        let counts: Vec<u32> =
                            (1..=years).map(|y| self.violation_hours(id, t, y)).collect();
                        first_violation_year(&counts)
                    })
                    .collect();
                let yearly_frequency = (1..=years)
                    .map(|y| Frequency {
                        trials_with_violation: (1..=trials)
                            .filter(|&t| self.violation_hours(id, t, y) > 0)
                            .count() as u32,
                        trials,
                    })
                    .collect();
                Ok(TransformerImpactSummary {
                    transformer_id: id.clone(),
                    earliest_year_overall: first.iter().flatten().copied().min(),
                    first_violation_year: first,
                    yearly_frequency,
                })
            })
            .collect()
    }

    /// Violation hours at years 5, 10, ... for one trial.
    pub fn five_year_trend(&self, transformer_id: &str, trial: u32, years: u32) -> Result<Vec<(u32, u32)>> {
        let counts: Vec<u32> = (1..=years)
            .map(|y| self.violation_hours(transformer_id, trial, y))
            .collect();
        five_year_trend(&counts)
    }
}

/// Samples per-year counts (index 0 = year 1) at every fifth year.
pub fn five_year_trend(counts: &[u32]) -> Result<Vec<(u32, u32)>> {
    if counts.len() < 5 {
        return Err(Error::Domain(format!(
            "five-year trend needs a horizon of at least 5 years, got {}",
            counts.len()
        )));
    }
    Ok((5..=counts.len())
        .step_by(5)
        .map(|y| (y as u32, counts[y - 1]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircleSettings {
    pub r_min: f64,
    pub r_max: f64,
    /// Urgency colors, earliest years first.
    pub palette: Vec<String>,
}

impl Default for CircleSettings {
    fn default() -> Self {
        Self {
            r_min: 3.0,
            r_max: 18.0,
            palette: ["#d73027", "#fc8d59", "#fee090", "#e0f3f8", "#91bfdb", "#4575b4"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl CircleSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min >= 0.0 && self.r_max > self.r_min) {
            return Err(Error::Config("ring radii need 0 <= r_min < r_max".into()));
        }
        if self.palette.is_empty() {
            return Err(Error::Config("color palette is empty".into()));
        }
        Ok(())
    }

    pub fn radius(&self, frequency: f64) -> f64 {
        self.r_min + (self.r_max - self.r_min) * frequency
    }

    /// Palette bucket for a 1-based year over an `n`-year horizon.
    pub fn color_index(&self, year: u32, horizon: u32) -> usize {
        let buckets = self.palette.len();
        (((year.max(1) - 1) as usize * buckets) / horizon.max(1) as usize).min(buckets - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub year: u32,
    pub frequency: f64,
    pub radius: f64,
    pub color_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactCircleSpec {
    pub transformer_id: String,
    pub center: (f64, f64),
    pub earliest_year: u32,
    /// Rings for years with a nonzero frequency, in year order.
    pub rings: Vec<Ring>,
}

pub fn build_impact_circles(
    summaries: &[TransformerImpactSummary],
    feeder: &FeederModel,
    settings: &CircleSettings,
) -> Result<Vec<ImpactCircleSpec>> {
    settings.validate()?;
    let mut out = Vec::new();
    for s in summaries {
        let t = feeder.transformer(&s.transformer_id).ok_or_else(|| Error::Unknown {
            kind: "transformer",
            id: s.transformer_id.clone(),
        })?;
        let Some(earliest) = s.earliest_year_overall else {
            continue;
        };
        let bus = &feeder.buses[feeder.bus_index(&t.bus).expect("validated feeder")];
        let horizon = s.yearly_frequency.len() as u32;
        let color_index = settings.color_index(earliest, horizon);
        let rings = s
            .yearly_frequency
            .iter()
            .enumerate()
            .filter(|(_, f)| f.trials_with_violation > 0)
            .map(|(i, f)| Ring {
                year: i as u32 + 1,
                frequency: f.value(),
                radius: settings.radius(f.value()),
                color_index,
            })
            .collect();
        out.push(ImpactCircleSpec {
            transformer_id: s.transformer_id.clone(),
            center: (bus.x, bus.y),
            earliest_year: earliest,
            rings,
        });
    }
    Ok(out)
}

/// `impact_summary.csv`: impacted transformers only, sorted by id.
pub fn impact_summary_csv(summaries: &[TransformerImpactSummary], years: u32) -> String {
    let mut s = String::from("transformer_id,earliest_year");
    for y in 1..=years {
        let _ = write!(s, ",freq_year_{y}");
    }
    s.push('\n');
    let mut rows: Vec<_> = summaries.iter().filter(|x| x.has_violation()).collect();
    rows.sort_by(|a, b| a.transformer_id.cmp(&b.transformer_id));
    for r in rows {
        let _ = write!(
            s,
            "{},{}",
            r.transformer_id,
            r.earliest_year_overall.expect("filtered")
        );
        for f in &r.yearly_frequency {
            let _ = write!(s, ",{:.6}", f.value());
        }
        s.push('\n');
    }
    s
}

const SVG_W: f64 = 1000.0;
const SVG_H: f64 = 700.0;
const SVG_MARGIN: f64 = 40.0;

/// Feeder layout with one concentric-circle group per impacted transformer.
pub fn impact_map_svg(feeder: &FeederModel, circles: &[ImpactCircleSpec], settings: &CircleSettings) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for b in &feeder.buses {
        x0 = x0.min(b.x);
        x1 = x1.max(b.x);
        y0 = y0.min(b.y);
        y1 = y1.max(b.y);
    }
    let span = f64::max(x1 - x0, y1 - y0).max(1e-9);
    let scale = f64::min(
        (SVG_W - 2.0 * SVG_MARGIN) / (x1 - x0).max(span * 1e-3),
        (SVG_H - 2.0 * SVG_MARGIN) / (y1 - y0).max(span * 1e-3),
    );
    // screen y grows downwards
    let px = |x: f64| SVG_MARGIN + (x - x0) * scale;
    let py = |y: f64| SVG_H - SVG_MARGIN - (y - y0) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W:.6}" height="{SVG_H:.6}" viewBox="0 0 {SVG_W:.6} {SVG_H:.6}">"#
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    s.push_str("<g id=\"lines\" stroke=\"#7f7f7f\" stroke-width=\"1.500000\">\n");
    for l in &feeder.lines {
        let a = &feeder.buses[feeder.bus_index(&l.from_bus).expect("validated")];
        let b = &feeder.buses[feeder.bus_index(&l.to_bus).expect("validated")];
        let _ = writeln!(
            s,
            r#"<line x1="{:.6}" y1="{:.6}" x2="{:.6}" y2="{:.6}"/>"#,
            px(a.x),
            py(a.y),
            px(b.x),
            py(b.y)
        );
    }
    s.push_str("</g>\n<g id=\"buses\" fill=\"#303030\">\n");
    for b in &feeder.buses {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.6}" cy="{:.6}" r="{:.6}"><title>{}</title></circle>"#,
            px(b.x),
            py(b.y),
            if b.id == feeder.source_bus { 5.0 } else { 1.8 },
            xml_escape(&b.id)
        );
    }
    s.push_str("</g>\n<g id=\"impacts\">\n");
    for c in circles {
        let _ = writeln!(
            s,
            r#"<g class="impact" data-transformer="{}" data-earliest-year="{}">"#,
            xml_escape(&c.transformer_id),
            c.earliest_year
        );
        let mut rings: Vec<&Ring> = c.rings.iter().collect();
        // largest first so smaller rings stay visible
        rings.sort_by(|a, b| b.radius.total_cmp(&a.radius).then(a.year.cmp(&b.year)));
        for r in rings {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="{}" fill-opacity="0.350000" stroke="{}" stroke-width="0.600000" data-year="{}" data-frequency="{:.6}"/>"#,
                px(c.center.0),
                py(c.center.1),
                r.radius,
                settings.palette[r.color_index],
                settings.palette[r.color_index],
                r.year,
                r.frequency
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// `trial,year_5,year_10,...` rows for one transformer.
pub fn trend_csv(acc: &ImpactAccumulator, transformer_id: &str, years: u32, trials: u32) -> Result<String> {
    let mut s = String::from("trial");
    for y in (5..=years).step_by(5) {
        let _ = write!(s, ",year_{y}");
    }
    s.push('\n');
    for t in 1..=trials {
        let _ = write!(s, "{t}");
        for (_, c) in acc.five_year_trend(transformer_id, t, years)? {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub years: u32,
    pub trials: u32,
    pub jobs_total: usize,
    pub jobs_completed: usize,
    pub jobs_failed: usize,
    /// True when some jobs failed or never ran; metrics then treat them as violation-free.
    pub partial: bool,
    pub threshold: f64,
    pub min_duration_hours: usize,
    pub impacted_transformers: usize,
}

/// Everything [`emit_report`] needs besides the summaries.
#[derive(Debug, Clone)]
pub struct ReportInputs<'a> {
    pub run_id: &'a str,
    pub feeder: &'a FeederModel,
    pub years: u32,
    pub trials: u32,
    pub jobs_total: usize,
    pub jobs_completed: usize,
    pub jobs_failed: usize,
    pub overload: OverloadSettings,
    pub circles: &'a CircleSettings,
}

/// Writes the report artifacts and returns their keys.
pub fn emit_report(
    store: &ArtifactStore,
    inputs: &ReportInputs<'_>,
    acc: &ImpactAccumulator,
    summaries: &[TransformerImpactSummary],
) -> Result<Vec<String>> {
    let circles = build_impact_circles(summaries, inputs.feeder, inputs.circles)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let key = layout::report(inputs.run_id, name);
        store.overwrite(&key, body.as_bytes())?;
        written.push(key);
        Ok(())
    };
    put("impact_summary.csv", impact_summary_csv(summaries, inputs.years))?;
    put("impact_map.svg", impact_map_svg(inputs.feeder, &circles, inputs.circles))?;
    if inputs.years >= 5 {
        let mut impacted: Vec<_> = summaries.iter().filter(|s| s.has_violation()).collect();
        impacted.sort_by(|a, b| a.transformer_id.cmp(&b.transformer_id));
        for s in impacted {
            put(
                &format!("trend_{}.csv", s.transformer_id),
                trend_csv(acc, &s.transformer_id, inputs.years, inputs.trials)?,
            )?;
        }
    }
    let meta = ReportMeta {
        years: inputs.years,
        trials: inputs.trials,
        jobs_total: inputs.jobs_total,
        jobs_completed: inputs.jobs_completed,
        jobs_failed: inputs.jobs_failed,
        partial: inputs.jobs_completed < inputs.jobs_total,
        threshold: inputs.overload.threshold,
        min_duration_hours: inputs.overload.min_duration_hours,
        impacted_transformers: circles.len(),
    };
    let mut body = serde_json::to_string_pretty(&meta).expect("report meta serializes");
    body.push('\n');
    put("report.json", body)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_with(hours: &[(usize, f64)]) -> Vec<f64> {
        let mut s = vec![0.0; HOURS_PER_YEAR];
        for &(h, v) in hours {
            s[h] = v;
        }
        s
    }

    #[test]
    fn count_ten_overloaded_hours() {
        let s = series_with(&(0..10).map(|h| (h * 3, 30.0)).collect::<Vec<_>>());
        let c = detect_overloads(&s, 25.0, &OverloadSettings::default()).unwrap();
        assert_eq!(c.violation_hours, 10);
        assert!((c.peak_loading_ratio - 1.2).abs() < 1e-12);
    }

    #[test]
    fn zero_series_has_no_violations() {
        let c = detect_overloads(&vec![0.0; HOURS_PER_YEAR], 25.0, &OverloadSettings::default()).unwrap();
        assert_eq!(c.violation_hours, 0);
        assert_eq!(c.peak_loading_ratio, 0.0);
    }

    #[test]
    fn exact_threshold_is_not_overload() {
        let s = series_with(&[(5, 25.0)]);
        assert_eq!(detect_overloads(&s, 25.0, &OverloadSettings::default()).unwrap().violation_hours, 0);
    }

    #[test]
    fn min_duration_filters_short_runs() {
        let s = series_with(&[(0, 30.0), (10, 30.0), (11, 30.0), (8759, 30.0), (8758, 30.0)]);
        let settings = OverloadSettings {
            threshold: 1.0,
            min_duration_hours: 2,
        };
        assert_eq!(detect_overloads(&s, 25.0, &settings).unwrap().violation_hours, 4);
    }

    #[test]
    fn bad_inputs() {
        assert!(detect_overloads(&[1.0; 10], 25.0, &OverloadSettings::default()).is_err());
        assert!(detect_overloads(&vec![0.0; HOURS_PER_YEAR], 0.0, &OverloadSettings::default()).is_err());
    }

    #[test]
    fn first_year_examples() {
        assert_eq!(first_violation_year(&[0, 0, 5, 0, 2]), Some(3));
        assert_eq!(first_violation_year(&[0, 0, 0]), None);
    }

    fn rec(tx: &str, trial: u32, year: u32, hours: u32) -> ViolationRecord {
        ViolationRecord {
            transformer_id: tx.into(),
            trial,
            year,
            violation_hours: hours,
            peak_loading_ratio: 1.0,
        }
    }

    #[test]
    fn frequency_examples() {
        let records = vec![rec("T", 1, 2, 3), rec("T", 2, 2, 1), rec("T", 3, 2, 0), rec("T", 4, 2, 8)];
        let f = violation_frequency(&records, "T", 2, 4).unwrap();
        assert_eq!(f.value(), 0.75);
        assert_eq!(violation_frequency(&records, "T", 1, 4).unwrap().value(), 0.0);
        assert!(violation_frequency(&records, "T", 1, 0).is_err());
    }

    #[test]
    fn trend_sampling() {
        assert_eq!(
            five_year_trend(&[10; 30]).unwrap().iter().map(|x| x.1).collect::<Vec<_>>(),
            vec![10; 6]
        );
        let mut only7 = vec![0; 30];
        only7[6] = 9;
        assert!(five_year_trend(&only7).unwrap().iter().all(|x| x.1 == 0));
        assert!(five_year_trend(&[1; 4]).is_err());
    }

    #[test]
    fn radius_and_color_encoding() {
        let c = CircleSettings::default();
        assert_eq!(c.radius(1.0), c.r_max);
        assert_eq!(c.radius(0.0), c.r_min);
        assert_eq!(c.color_index(1, 30), 0);
        assert_eq!(c.color_index(30, 30), 5);
        assert_eq!(c.color_index(1, 1), 0);
        assert_eq!(c.color_index(16, 30), 3);
    }

    #[test]
    fn accumulator_conflicts_rejected() {
        let mut a = ImpactAccumulator::new();
        a.add(rec("T", 1, 1, 2)).unwrap();
        a.add(rec("T", 1, 1, 2)).unwrap();
        assert!(a.add(rec("T", 1, 1, 3)).is_err());
    }
}
