//! Two-state absorbing Markov adoption of PV and EV per customer.
//!
//! Each customer carries one chain per technology with transition matrix
//! `[1 - p, p; 0, 1]`. A trial steps every chain once per year, in
//! lexicographic customer order, and records a [`DerInstallation`] with a
//! sampled capacity for every new adoption. `n x m` scenarios come from `m`
//! independent trials of `n` years each.

use std::fmt;
use std::thread;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::feeder::FeederModel;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technology {
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "EV")]
    Ev,
}

impl Technology {
    pub const ALL: [Technology; 2] = [Technology::Pv, Technology::Ev];
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Technology::Pv => "PV",
            Technology::Ev => "EV",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AdoptionState {
    NotAdopted = 0,
    Adopted = 1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSpec {
    p_adopt: f64,
}

impl TransitionSpec {
    pub fn new(p_adopt: f64) -> Result<Self> {
        check_probability(p_adopt)?;
        Ok(Self { p_adopt })
    }

    pub fn p_adopt(&self) -> f64 {
        self.p_adopt
    }

    /// Row-stochastic matrix indexed `[from][to]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.p_adopt, self.p_adopt], [0.0, 1.0]]
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} outside [0, 1]")))
    }
}

/// `P(X(t) = 1) = 1 - (1 - p)^t` for a chain started in the not-adopted state.
pub fn adoption_probability_by_year(p: f64, t: i64) -> Result<f64> {
    check_probability(p)?;
    if t < 0 {
        return Err(Error::Domain(format!("negative year count {t}")));
    }
    let t = i32::try_from(t).map_err(|_| Error::Domain(format!("year count {t} too large")))?;
    Ok(1.0 - (1.0 - p).powi(t))
}

/// One yearly transition. Draws a single uniform only from the not-adopted state.
pub fn step_customer<R: Rng + ?Sized>(
    state: AdoptionState,
    spec: TransitionSpec,
    rng: &mut R,
) -> AdoptionState {
    match state {
        AdoptionState::Adopted => AdoptionState::Adopted,
        AdoptionState::NotAdopted => {
            let u: f64 = rng.gen();
            if u < spec.p_adopt {
                AdoptionState::Adopted
            } else {
                AdoptionState::NotAdopted
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub kw: f64,
    pub weight: f64,
}

/// Discrete capacity distribution, kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CapacityPoint>", into = "Vec<CapacityPoint>")]
pub struct CapacityDistribution {
    points: Vec<CapacityPoint>,
    #[serde(skip)]
    index: WeightedIndex<f64>,
}

impl CapacityDistribution {
    pub fn new(points: Vec<CapacityPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("capacity distribution is empty".into()));
        }
        if let Some(p) = points.iter().find(|p| !(p.kw > 0.0) || !p.kw.is_finite()) {
            return Err(Error::Config(format!(
                "capacity {} kW is not strictly positive",
                p.kw
            )));
        }
        let index = WeightedIndex::new(points.iter().map(|p| p.weight))
            .map_err(|e| Error::Config(format!("capacity weights: {e}")))?;
        Ok(Self { points, index })
    }

    pub fn uniform(values_kw: &[f64]) -> Result<Self> {
        Self::new(
            values_kw
                .iter()
                .map(|&kw| CapacityPoint { kw, weight: 1.0 })
                .collect(),
        )
    }

    pub fn points(&self) -> &[CapacityPoint] {
        &self.points
    }

    /// Normalized weights in support order.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.points.iter().map(|p| p.weight).sum();
        self.points.iter().map(|p| p.weight / total).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.points[self.index.sample(rng)].kw
    }
}

impl TryFrom<Vec<CapacityPoint>> for CapacityDistribution {
    type Error = Error;

    fn try_from(points: Vec<CapacityPoint>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<CapacityDistribution> for Vec<CapacityPoint> {
    fn from(d: CapacityDistribution) -> Self {
        d.points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdoptionConfig {
    pub pv_capacity: CapacityDistribution,
    pub ev_capacity: CapacityDistribution,
}

impl Default for AdoptionConfig {
    fn default() -> Self {
        Self {
            pv_capacity: CapacityDistribution::uniform(&[3.0, 5.0, 7.0, 10.0]).unwrap(),
            ev_capacity: CapacityDistribution::uniform(&[3.3, 7.2, 11.5]).unwrap(),
        }
    }
}

impl AdoptionConfig {
    pub fn distribution(&self, technology: Technology) -> &CapacityDistribution {
        match technology {
            Technology::Pv => &self.pv_capacity,
            Technology::Ev => &self.ev_capacity,
        }
    }
}

pub fn sample_capacity<R: Rng + ?Sized>(
    config: &AdoptionConfig,
    technology: Technology,
    rng: &mut R,
) -> f64 {
    config.distribution(technology).sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerInstallation {
    #[serde(rename = "customer")]
    pub customer_id: String,
    pub technology: Technology,
    #[serde(rename = "kw")]
    pub capacity_kw: f64,
    /// Year of adoption; 0 marks DER installed before the horizon starts.
    pub adoption_year: u32,
}

/// Cumulative installations for one (trial, year).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptionScenario {
    pub trial: u32,
    pub year: u32,
    pub installations: Vec<DerInstallation>,
}

impl AdoptionScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("scenario file", e))
    }

    pub fn capacity_of(&self, customer_id: &str, technology: Technology) -> f64 {
        self.installations
            .iter()
            .filter(|i| i.customer_id == customer_id && i.technology == technology)
            .map(|i| i.capacity_kw)
            .sum()
    }
}

/// Borrowed view of one scenario inside a [`TrialAdoption`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScenarioView<'a> {
    pub trial: u32,
    pub year: u32,
    pub installations: &'a [DerInstallation],
}

impl ScenarioView<'_> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn to_owned_scenario(&self) -> AdoptionScenario {
        AdoptionScenario {
            trial: self.trial,
            year: self.year,
            installations: self.installations.to_vec(),
        }
    }
}

/// All years of one trial. Installations are stored once in adoption order,
/// so each year's cumulative set is a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialAdoption {
    pub trial: u32,
    pub horizon: u32,
    installations: Vec<DerInstallation>,
    /// `year_end[y]` = number of installations adopted in years `0..=y`.
    year_end: Vec<usize>,
}

impl TrialAdoption {
    pub fn scenario(&self, year: u32) -> ScenarioView<'_> {
        assert!(
            (1..=self.horizon).contains(&year),
            "year {year} outside 1..={}",
            self.horizon
        );
        ScenarioView {
            trial: self.trial,
            year,
            installations: &self.installations[..self.year_end[year as usize]],
        }
    }

    pub fn scenarios(&self) -> impl Iterator<Item = ScenarioView<'_>> + '_ {
        (1..=self.horizon).map(|y| self.scenario(y))
    }

    pub fn installations(&self) -> &[DerInstallation] {
        &self.installations
    }

    /// Cumulative installed kW of `technology` at the end of years `1..=n`.
    pub fn cumulative_capacity(&self, technology: Technology) -> Vec<f64> {
        self.scenarios()
            .map(|s| {
                s.installations
                    .iter()
                    .filter(|i| i.technology == technology)
                    .map(|i| i.capacity_kw)
                    .sum()
            })
            .collect()
    }
}

/// Runs one trial of the adoption process over `horizon` years.
pub fn generate_trial(
    model: &FeederModel,
    horizon: u32,
    trial: u32,
    master_seed: u64,
    config: &AdoptionConfig,
) -> Result<TrialAdoption> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least one year".into()));
    }
    let mut customers: Vec<_> = model.customers.iter().collect();
    customers.sort_unstable_by(|a, b| a.id.cmp(&b.id));

    let mut rng = seed::trial_rng(master_seed, trial);
    let mut installations = Vec::new();
    // (state, transition) per customer and technology
    let mut chains: Vec<[(AdoptionState, TransitionSpec); 2]> = Vec::with_capacity(customers.len());
    for c in &customers {
        let mut pair = [
            (AdoptionState::NotAdopted, TransitionSpec::new(c.adoption_prob_pv)?),
            (AdoptionState::NotAdopted, TransitionSpec::new(c.adoption_prob_ev)?),
        ];
        for (slot, (tech, existing)) in pair
            .iter_mut()
            .zip([(Technology::Pv, c.existing_pv_kw), (Technology::Ev, c.existing_ev_kw)])
        {
            if existing > 0.0 {
                slot.0 = AdoptionState::Adopted;
                installations.push(DerInstallation {
                    customer_id: c.id.clone(),
                    technology: tech,
                    capacity_kw: existing,
                    adoption_year: 0,
                });
            }
        }
        chains.push(pair);
    }

    let mut year_end = vec![installations.len()];
    for year in 1..=horizon {
        for (c, pair) in customers.iter().zip(chains.iter_mut()) {
            for (tech, (state, spec)) in Technology::ALL.into_iter().zip(pair.iter_mut()) {
                if *state == AdoptionState::Adopted {
                    continue;
                }
                *state = step_customer(*state, *spec, &mut rng);
                if *state == AdoptionState::Adopted {
                    installations.push(DerInstallation {
                        customer_id: c.id.clone(),
                        technology: tech,
                        capacity_kw: sample_capacity(config, tech, &mut rng),
                        adoption_year: year,
                    });
                }
            }
        }
        year_end.push(installations.len());
    }
    Ok(TrialAdoption {
        trial,
        horizon,
        installations,
        year_end,
    })
}

/// `n x m` scenarios: trials `1..=m`, each with years `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub years: u32,
    pub trials: Vec<TrialAdoption>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.years as usize * self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trial(&self, trial: u32) -> Option<&TrialAdoption> {
        self.trials.get(trial.checked_sub(1)? as usize)
    }

    pub fn scenarios(&self) -> impl Iterator<Item = ScenarioView<'_>> + '_ {
        self.trials.iter().flat_map(|t| t.scenarios())
    }
}

/// Generates trials `1..=m` on up to `workers` threads. Output does not
/// depend on `workers`.
pub fn generate_scenarios(
    model: &FeederModel,
    years: u32,
    trials: u32,
    master_seed: u64,
    config: &AdoptionConfig,
    workers: usize,
) -> Result<ScenarioSet> {
    if years == 0 || trials == 0 {
        return Err(Error::Domain(format!(
            "need at least one year and one trial, got n={years} m={trials}"
        )));
    }
    let workers = workers.clamp(1, trials as usize);
    let ids: Vec<u32> = (1..=trials).collect();
    let chunk = ids.len().div_ceil(workers);
    let results: Vec<Result<Vec<TrialAdoption>>> = thread::scope(|s| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&t| generate_trial(model, years, t, master_seed, config))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(trials as usize);
    for r in results {
        out.extend(r?);
    }
    Ok(ScenarioSet { years, trials: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{BusNode, CustomerSite, FeederModel, LineSegment, ServiceTransformer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn feeder_with(probs: &[(f64, f64)]) -> FeederModel {
        let customers: Vec<CustomerSite> = probs
            .iter()
            .enumerate()
            .map(|(i, &(pv, ev))| CustomerSite {
                id: format!("c{i:04}"),
                transformer_id: "T".into(),
                base_load_scale: 3.0,
                adoption_prob_pv: pv,
                adoption_prob_ev: ev,
                existing_pv_kw: 0.0,
                existing_ev_kw: 0.0,
            })
            .collect();
        FeederModel {
            source_bus: "S".into(),
            buses: vec![
                BusNode { id: "S".into(), base_voltage: 2400.0, x: 0.0, y: 0.0 },
                BusNode { id: "L".into(), base_voltage: 2400.0, x: 1.0, y: 0.0 },
            ],
            lines: vec![LineSegment {
                from_bus: "S".into(),
                to_bus: "L".into(),
                resistance: 0.01,
                reactance: 0.01,
            }],
            transformers: vec![ServiceTransformer {
                id: "T".into(),
                bus: "L".into(),
                rating: 100.0,
                lumped_load_kw: 0.0,
                p_pv: 0.0,
                p_ev: 0.0,
                customer_ids: vec![],
            }],
            customers,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn closed_form_endpoints() {
        assert_eq!(adoption_probability_by_year(0.0, 100).unwrap(), 0.0);
        assert_eq!(adoption_probability_by_year(1.0, 1).unwrap(), 1.0);
        assert_eq!(adoption_probability_by_year(0.3, 0).unwrap(), 0.0);
        assert!(adoption_probability_by_year(1.1, 1).is_err());
        assert!(adoption_probability_by_year(-0.1, 1).is_err());
        assert!(adoption_probability_by_year(0.5, -1).is_err());
    }

    #[test]
    fn closed_form_matches_chain_monte_carlo() {
        // Monte Carlo of the raw two-state chain, independent of step_customer.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = 1_000_000;
        let mut adopted = 0u32;
        for _ in 0..samples {
            let mut s = 0u8;
            for _ in 0..5 {
                if s == 0 && rng.gen::<f64>() < 0.1 {
                    s = 1;
                }
            }
            adopted += u32::from(s);
        }
        let mc = f64::from(adopted) / samples as f64;
        let closed = adoption_probability_by_year(0.1, 5).unwrap();
        assert!((closed - 0.40951).abs() < 1e-12, "{closed}");
        assert!((mc - closed).abs() < 0.002, "mc {mc} vs {closed}");
    }

    #[test]
    fn absorbing_state_consumes_no_draws() {
        let spec = TransitionSpec::new(0.7).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let b = a.clone();
        assert_eq!(step_customer(AdoptionState::Adopted, spec, &mut a), AdoptionState::Adopted);
        assert_eq!(a, b);
        let zero = TransitionSpec::new(0.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(
                step_customer(AdoptionState::NotAdopted, zero, &mut a),
                AdoptionState::NotAdopted
            );
        }
    }

    #[test]
    fn step_adoption_fraction() {
        let spec = TransitionSpec::new(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| step_customer(AdoptionState::NotAdopted, spec, &mut rng) == AdoptionState::Adopted)
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.3).abs() <= 0.0015, "{frac}");
    }

    #[test]
    fn transition_rows_sum_to_one() {
        for p in [0.0, 0.25, 1.0] {
            let m = TransitionSpec::new(p).unwrap().matrix();
            assert_eq!(m[0][0] + m[0][1], 1.0);
            assert_eq!(m[1], [0.0, 1.0]);
        }
    }

    #[test]
    fn single_point_capacity() {
        let cfg = AdoptionConfig {
            pv_capacity: CapacityDistribution::uniform(&[5.0]).unwrap(),
            ..AdoptionConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_capacity(&cfg, Technology::Pv, &mut rng), 5.0);
    }

    #[test]
    fn default_capacity_support_and_frequencies() {
        let cfg = AdoptionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pv_support = [3.0, 5.0, 7.0, 10.0];
        for _ in 0..10_000 {
            assert!(pv_support.contains(&sample_capacity(&cfg, Technology::Pv, &mut rng)));
        }
        let draws = 100_000usize;
        let support = [3.3, 7.2, 11.5];
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let kw = sample_capacity(&cfg, Technology::Ev, &mut rng);
            counts[support.iter().position(|s| *s == kw).unwrap()] += 1;
        }
        let w = 1.0 / 3.0;
        let sigma = (draws as f64 * w * (1.0 - w)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * w).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(CapacityDistribution::uniform(&[]).is_err());
        assert!(CapacityDistribution::uniform(&[0.0]).is_err());
        assert!(CapacityDistribution::new(vec![CapacityPoint { kw: 1.0, weight: 0.0 }]).is_err());
    }

    #[test]
    fn never_adopting_feeder_has_empty_years() {
        let m = feeder_with(&[(0.0, 0.0); 10]);
        let t = generate_trial(&m, 5, 1, 42, &AdoptionConfig::default()).unwrap();
        assert!(t.scenarios().all(|s| s.installations.is_empty()));
    }

    #[test]
    fn certain_adoption_happens_in_year_one() {
        let m = feeder_with(&[(1.0, 1.0); 7]);
        let t = generate_trial(&m, 3, 1, 42, &AdoptionConfig::default()).unwrap();
        let y1 = t.scenario(1);
        assert_eq!(y1.installations.len(), 14);
        assert!(y1.installations.iter().all(|i| i.adoption_year == 1));
        assert_eq!(t.scenario(3).installations.len(), 14);
    }

    #[test]
    fn existing_der_starts_adopted() {
        let mut m = feeder_with(&[(1.0, 0.0); 2]);
        m.customers[0].existing_pv_kw = 4.0;
        let t = generate_trial(&m, 2, 1, 1, &AdoptionConfig::default()).unwrap();
        let s = t.scenario(2);
        let pv: Vec<_> = s
            .installations
            .iter()
            .filter(|i| i.technology == Technology::Pv)
            .collect();
        assert_eq!(pv.len(), 2);
        assert_eq!(pv[0].adoption_year, 0);
        assert_eq!(pv[0].capacity_kw, 4.0);
    }

    #[test]
    fn scenario_counts() {
        let m = feeder_with(&[(0.1, 0.1); 4]);
        let set = generate_scenarios(&m, 1, 1, 0, &AdoptionConfig::default(), 4).unwrap();
        assert_eq!(set.len(), 1);
        let set = generate_scenarios(&m, 30, 7, 0, &AdoptionConfig::default(), 3).unwrap();
        assert_eq!(set.len(), 210);
        assert_eq!(set.scenarios().count(), 210);
        assert!(generate_scenarios(&m, 0, 1, 0, &AdoptionConfig::default(), 1).is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let m = feeder_with(&[(0.5, 0.5); 6]);
        let t = generate_trial(&m, 4, 2, 9, &AdoptionConfig::default()).unwrap();
        let view = t.scenario(3);
        let parsed = AdoptionScenario::from_json(&view.to_json()).unwrap();
        assert_eq!(parsed, view.to_owned_scenario());
    }
}
