#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gridplan::feeder::{BusNode, CustomerSite, FeederModel, LineSegment, ServiceTransformer};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bus(id: &str, x: f64, y: f64) -> BusNode {
    BusNode {
        id: id.into(),
        base_voltage: 2401.777,
        x,
        y,
    }
}

fn line(from: &str, to: &str, r: f64, x: f64) -> LineSegment {
    LineSegment {
        from_bus: from.into(),
        to_bus: to.into(),
        resistance: r,
        reactance: x,
    }
}

/// Random radial feeder with `n` buses: bus `k` hangs off a uniformly chosen earlier bus.
pub fn random_radial(n: usize, rng: &mut ChaCha8Rng) -> FeederModel {
    let buses: Vec<BusNode> = (0..n).map(|k| bus(&format!("b{k:02}"), k as f64, 0.0)).collect();
    let lines = (1..n)
        .map(|k| {
            let p = rng.gen_range(0..k);
            line(
                &format!("b{p:02}"),
                &format!("b{k:02}"),
                rng.gen_range(0.001..0.03),
                rng.gen_range(0.001..0.05),
            )
        })
        .collect();
    FeederModel {
        source_bus: "b00".into(),
        buses,
        lines,
        transformers: Vec::new(),
        customers: Vec::new(),
    }
}

/// Random bus loads in pu; some buses export (negative P).
pub fn random_loads(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut loads = vec![Complex64::new(0.0, 0.0); n];
    for s in loads.iter_mut().skip(1) {
        *s = Complex64::new(rng.gen_range(-0.03..0.08), rng.gen_range(-0.01..0.04));
    }
    loads
}

/// Gauss-Seidel on the bus admittance matrix, source at 1.0 pu.
pub fn gauss_seidel(feeder: &FeederModel, loads: &[Complex64], tol: f64, max_iter: usize) -> Vec<Complex64> {
    let n = feeder.buses.len();
    let idx = |id: &str| feeder.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for l in &feeder.lines {
        let (a, b) = (idx(&l.from_bus), idx(&l.to_bus));
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.resistance, l.reactance);
        y[a][a] += ys;
        y[b][b] += ys;
        y[a][b] -= ys;
        y[b][a] -= ys;
    }
    let src = idx(&feeder.source_bus);
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..max_iter {
        let mut delta = 0.0f64;
        for i in 0..n {
            if i == src {
                continue;
            }
            let inj = -loads[i];
            let mut acc = (inj / v[i]).conj();
            for j in 0..n {
                if j != i {
                    acc -= y[i][j] * v[j];
                }
            }
            let nv = acc / y[i][i];
            delta = delta.max((nv - v[i]).norm());
            v[i] = nv;
        }
        if delta < tol {
            return v;
        }
    }
    panic!("Gauss-Seidel oracle did not converge");
}

/// Source - a - b chain with one 25 kVA transformer of `houses` customers at `b`.
pub fn tiny_feeder(houses: usize, p_pv: f64, p_ev: f64, base_kw: f64) -> FeederModel {
    let customers: Vec<CustomerSite> = (0..houses)
        .map(|k| CustomerSite {
            id: format!("c{k:02}"),
            transformer_id: "t1".into(),
            base_load_scale: base_kw,
            adoption_prob_pv: p_pv,
            adoption_prob_ev: p_ev,
            existing_pv_kw: 0.0,
            existing_ev_kw: 0.0,
        })
        .collect();
    FeederModel {
        source_bus: "s".into(),
        buses: vec![bus("s", 0.0, 0.0), bus("a", 1.0, 0.0), bus("b", 2.0, 1.0)],
        lines: vec![line("s", "a", 0.002, 0.004), line("a", "b", 0.003, 0.005)],
        transformers: vec![
            ServiceTransformer {
                id: "t1".into(),
                bus: "b".into(),
                rating: 25.0,
                lumped_load_kw: 0.0,
                p_pv: 0.0,
                p_ev: 0.0,
                customer_ids: Vec::new(),
            },
            ServiceTransformer {
                id: "t2".into(),
                bus: "a".into(),
                rating: 50.0,
                lumped_load_kw: 20.0,
                p_pv,
                p_ev,
                customer_ids: Vec::new(),
            },
        ],
        customers,
    }
}

/// `count` customers with uniform probabilities on a single transformer.
pub fn flat_feeder(count: usize, p_pv: f64, p_ev: f64) -> FeederModel {
    let mut f = tiny_feeder(count, p_pv, p_ev, 1.0);
    f.transformers.truncate(1);
    f.transformers[0].rating = 10_000.0;
    f.validate().unwrap()
}

/// Planted overload pattern: `hours[tx][trial][year]` overloaded hours.
pub struct PlantedCase {
    pub transformers: Vec<String>,
    pub ratings: Vec<f64>,
    pub years: u32,
    pub trials: u32,
    pub hours: Vec<Vec<Vec<u32>>>,
}

impl PlantedCase {
    pub fn new() -> Self {
        // rows are trials, columns years 1..=6
        let hours = vec![
            // never overloads
            vec![vec![0; 6]; 4],
            // first years 3, 5, none, 1
            vec![
                vec![0, 0, 4, 0, 2, 9],
                vec![0, 0, 0, 0, 1, 0],
                vec![0; 6],
                vec![7, 0, 0, 0, 0, 0],
            ],
            // every trial from year 2, trial 3 skips year 4
            vec![
                vec![0, 1, 1, 1, 1, 1],
                vec![0, 3, 3, 3, 3, 3],
                vec![0, 2, 2, 0, 2, 2],
                vec![0, 8760, 8760, 8760, 8760, 8760],
            ],
        ];
        Self {
            transformers: vec!["ta".into(), "tb".into(), "tc".into()],
            ratings: vec![25.0, 37.5, 50.0],
            years: 6,
            trials: 4,
            hours,
        }
    }

    /// A loading series with exactly `count` isolated hours above rating.
    pub fn series(rating: f64, count: u32) -> Vec<f64> {
        let mut s = vec![0.5 * rating; gridplan::HOURS_PER_YEAR];
        if count as usize == gridplan::HOURS_PER_YEAR {
            return vec![1.3 * rating; gridplan::HOURS_PER_YEAR];
        }
        for k in 0..count as usize {
            s[(k * 2) % gridplan::HOURS_PER_YEAR] = 1.01 * rating + k as f64 * 1e-3;
        }
        s
    }

    /// Expected (first year per trial, violating-trial count per year, earliest overall).
    pub fn expected(&self, tx: usize) -> (Vec<Option<u32>>, Vec<u32>, Option<u32>) {
        let h = &self.hours[tx];
        let first: Vec<Option<u32>> = h
            .iter()
            .map(|row| {
                let mut f = None;
                for (i, c) in row.iter().enumerate() {
                    if *c > 0 {
                        f = Some(i as u32 + 1);
                        break;
                    }
                }
                f
            })
            .collect();
        let mut counts = vec![0u32; self.years as usize];
        for row in h {
            for (i, c) in row.iter().enumerate() {
                if *c > 0 {
                    counts[i] += 1;
                }
            }
        }
        let earliest = first.iter().filter_map(|x| *x).min();
        (first, counts, earliest)
    }
}

/// Writes `feeder` under `dir` and returns a config pointing at it.
pub fn config_for(dir: &Path, feeder: &FeederModel, years: u32, trials: u32) -> gridplan::config::RunConfig {
    let path = dir.join("feeder.json");
    gridplan::feeder::save_feeder(feeder, &path).unwrap();
    gridplan::config::RunConfig {
        feeder: path,
        years,
        trials,
        seed: 42,
        workers: 2,
        out: dir.join("store"),
        ..Default::default()
    }
}

/// Bytes of every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// (customer, technology) pairs present in one year but missing the next year of the same trial.
pub fn count_reversals(scenarios: &[gridplan::adoption::AdoptionScenario]) -> usize {
    use std::collections::{BTreeMap, BTreeSet};
    let mut by_trial: BTreeMap<u32, BTreeMap<u32, BTreeSet<(String, String)>>> = BTreeMap::new();
    for s in scenarios {
        let set = s
            .installations
            .iter()
            .map(|i| (i.customer_id.clone(), i.technology.to_string()))
            .collect();
        by_trial.entry(s.trial).or_default().insert(s.year, set);
    }
    let mut reversals = 0;
    for years in by_trial.values() {
        let ordered: Vec<_> = years.values().collect();
        // set inclusion is transitive, so consecutive years suffice
        for w in ordered.windows(2) {
            reversals += w[0].difference(w[1]).count();
        }
    }
    reversals
}
