//! Radial feeder model: loading, validation and lumped-load disaggregation.
//!
//! The on-disk format is a JSON document with the keys `source_bus`,
//! `buses`, `lines`, `transformers` and `customers`. Models are immutable once
//! validated and can be shared read-only between any number of jobs.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default number of houses created per kVA of transformer rating.
pub const DEFAULT_HOUSES_PER_KVA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusNode {
    pub id: String,
    /// Line-to-neutral base voltage in volts.
    #[serde(rename = "base_voltage_v")]
    pub base_voltage: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    #[serde(rename = "from")]
    pub from_bus: String,
    #[serde(rename = "to")]
    pub to_bus: String,
    #[serde(rename = "r_pu")]
    pub resistance: f64,
    #[serde(rename = "x_pu")]
    pub reactance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceTransformer {
    pub id: String,
    pub bus: String,
    #[serde(rename = "rating_kva")]
    pub rating: f64,
    #[serde(default)]
    pub lumped_load_kw: f64,
    /// Adoption probabilities inherited by houses created on disaggregation.
    #[serde(default)]
    pub p_pv: f64,
    #[serde(default)]
    pub p_ev: f64,
    /// Customers served, in feeder-file order. Rebuilt on validation.
    #[serde(skip)]
    pub customer_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerSite {
    pub id: String,
    #[serde(rename = "transformer")]
    pub transformer_id: String,
    /// Annual peak of the customer's base load shape, kW.
    #[serde(rename = "base_load_kw")]
    pub base_load_scale: f64,
    #[serde(rename = "p_pv")]
    pub adoption_prob_pv: f64,
    #[serde(rename = "p_ev")]
    pub adoption_prob_ev: f64,
    /// DER already installed before year 1 (kW, 0 = none).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub existing_pv_kw: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub existing_ev_kw: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederModel {
    pub source_bus: String,
    pub buses: Vec<BusNode>,
    pub lines: Vec<LineSegment>,
    pub transformers: Vec<ServiceTransformer>,
    #[serde(default)]
    pub customers: Vec<CustomerSite>,
}

/// Parent-pointer tree rooted at the source bus.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyReport {
    /// Bus indices in breadth-first order from the source.
    pub order: Vec<usize>,
    /// Parent bus index per bus (`None` for the source).
    pub parent: Vec<Option<usize>>,
    /// Index into `lines` of the segment connecting a bus to its parent.
    pub parent_line: Vec<Option<usize>>,
    pub depth: Vec<usize>,
}

impl TopologyReport {
    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn depth_by_id<'a>(&self, model: &'a FeederModel) -> BTreeMap<&'a str, usize> {
        model
            .buses
            .iter()
            .zip(&self.depth)
            .map(|(b, d)| (b.id.as_str(), *d))
            .collect()
    }
}

impl FeederModel {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn transformer(&self, id: &str) -> Option<&ServiceTransformer> {
        self.transformers.iter().find(|t| t.id == id)
    }

    pub fn transformer_index(&self, id: &str) -> Option<usize> {
        self.transformers.iter().position(|t| t.id == id)
    }

    /// Sum of customer base loads plus any remaining lumped loads, kW.
    pub fn total_base_load(&self) -> f64 {
        self.transformers.iter().map(|t| t.lumped_load_kw).sum::<f64>()
            + self.customers.iter().map(|c| c.base_load_scale).sum::<f64>()
    }

    /// Customer ids in lexicographic order.
    pub fn sorted_customer_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.customers.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    /// Checks every model invariant and rebuilds the transformer customer lists.
    pub fn validate(mut self) -> Result<Self> {
        let mut bus_ids = HashSet::new();
        for b in &self.buses {
            if !bus_ids.insert(b.id.as_str()) {
                return Err(Error::Validation(format!("duplicate bus id `{}`", b.id)));
            }
            if !(b.base_voltage > 0.0) || !b.base_voltage.is_finite() {
                return Err(Error::Validation(format!(
                    "bus `{}` has nonpositive base voltage {}",
                    b.id, b.base_voltage
                )));
            }
        }
        if !bus_ids.contains(self.source_bus.as_str()) {
            return Err(Error::Validation(format!(
                "source bus `{}` is not a bus",
                self.source_bus
            )));
        }
        for l in &self.lines {
            if l.from_bus == l.to_bus {
                return Err(Error::Validation(format!(
                    "line {} -> {} connects a bus to itself",
                    l.from_bus, l.to_bus
                )));
            }
            for end in [&l.from_bus, &l.to_bus] {
                if !bus_ids.contains(end.as_str()) {
                    return Err(Error::Validation(format!(
                        "line {} -> {} references unknown bus `{end}`",
                        l.from_bus, l.to_bus
                    )));
                }
            }
            let z = l.resistance.hypot(l.reactance);
            if !(z > 0.0) || !z.is_finite() || l.resistance < 0.0 {
                return Err(Error::Validation(format!(
                    "line {} -> {} has invalid impedance {} + j{}",
                    l.from_bus, l.to_bus, l.resistance, l.reactance
                )));
            }
        }

        let mut tx_index = HashMap::new();
        for (i, t) in self.transformers.iter().enumerate() {
            if tx_index.insert(t.id.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate transformer id `{}`",
                    t.id
                )));
            }
            if !bus_ids.contains(t.bus.as_str()) {
                return Err(Error::Validation(format!(
                    "transformer `{}` references unknown bus `{}`",
                    t.id, t.bus
                )));
            }
            if !(t.rating > 0.0) || !t.rating.is_finite() {
                return Err(Error::Validation(format!(
                    "transformer `{}` has nonpositive rating {}",
                    t.id, t.rating
                )));
            }
            if !(t.lumped_load_kw >= 0.0) {
                return Err(Error::Validation(format!(
                    "transformer `{}` has negative lumped load",
                    t.id
                )));
            }
            check_probability(&t.id, "p_pv", t.p_pv)?;
            check_probability(&t.id, "p_ev", t.p_ev)?;
        }

        for t in &mut self.transformers {
            t.customer_ids.clear();
        }
        let mut customer_ids = HashSet::new();
        for c in &self.customers {
            if !customer_ids.insert(c.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate customer id `{}`",
                    c.id
                )));
            }
            let Some(&ti) = tx_index.get(&c.transformer_id) else {
                return Err(Error::Validation(format!(
                    "customer `{}` references unknown transformer `{}`",
                    c.id, c.transformer_id
                )));
            };
            if !(c.base_load_scale >= 0.0) || !c.base_load_scale.is_finite() {
                return Err(Error::Validation(format!(
                    "customer `{}` has negative base load",
                    c.id
                )));
            }
            if !(c.existing_pv_kw >= 0.0) || !(c.existing_ev_kw >= 0.0) {
                return Err(Error::Validation(format!(
                    "customer `{}` has negative existing DER capacity",
                    c.id
                )));
            }
            check_probability(&c.id, "p_pv", c.adoption_prob_pv)?;
            check_probability(&c.id, "p_ev", c.adoption_prob_ev)?;
            self.transformers[ti].customer_ids.push(c.id.clone());
        }
        for t in &self.transformers {
            match (t.customer_ids.is_empty(), t.lumped_load_kw > 0.0) {
                (true, false) => {
                    return Err(Error::Validation(format!(
                        "transformer `{}` serves no customers and has no lumped load",
                        t.id
                    )))
                }
                (false, true) => {
                    return Err(Error::Validation(format!(
                        "transformer `{}` has both customers and a lumped load",
                        t.id
                    )))
                }
                _ => {}
            }
        }

        validate_radial(&self)?;
        Ok(self)
    }

    /// True once every transformer serves explicit customers.
    pub fn is_disaggregated(&self) -> bool {
        self.transformers.iter().all(|t| !t.customer_ids.is_empty())
    }
}

fn check_probability(owner: &str, field: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "`{owner}` has {field} = {p} outside [0, 1]"
        )))
    }
}

pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feeder(&text)
}

pub fn parse_feeder(text: &str) -> Result<FeederModel> {
    let model: FeederModel =
        serde_json::from_str(text).map_err(|e| Error::parse("feeder file", e))?;
    model.validate()
}

pub fn feeder_to_json(model: &FeederModel) -> String {
    let mut s = serde_json::to_string_pretty(model).expect("feeder serializes");
    s.push('\n');
    s
}

pub fn save_feeder(model: &FeederModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, feeder_to_json(model)).map_err(|e| Error::io(path, e))
}

/// Builds the parent-pointer tree rooted at the source bus.
///
/// Fails with [`Error::Cycle`] on the first line that closes a loop and with
/// [`Error::Unreachable`] on the first bus not connected to the source.
pub fn validate_radial(model: &FeederModel) -> Result<TopologyReport> {
    let n = model.buses.len();
    let index: HashMap<&str, usize> = model
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let source = *index
        .get(model.source_bus.as_str())
        .ok_or_else(|| Error::Validation(format!("unknown source bus `{}`", model.source_bus)))?;

    let mut uf = UnionFind::new(n);
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (li, l) in model.lines.iter().enumerate() {
        let (Some(&a), Some(&b)) = (index.get(l.from_bus.as_str()), index.get(l.to_bus.as_str()))
        else {
            return Err(Error::Validation(format!(
                "line {} -> {} references an unknown bus",
                l.from_bus, l.to_bus
            )));
        };
        if !uf.union(a, b) {
            return Err(Error::Cycle {
                from: l.from_bus.clone(),
                to: l.to_bus.clone(),
            });
        }
        adj[a].push((b, li));
        adj[b].push((a, li));
    }

    let mut parent = vec![None; n];
    let mut parent_line = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([source]);
    depth[source] = 0;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, li) in &adj[u] {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                parent[v] = Some(u);
                parent_line[v] = Some(li);
                queue.push_back(v);
            }
        }
    }
    if let Some(i) = depth.iter().position(|d| *d == usize::MAX) {
        return Err(Error::Unreachable(model.buses[i].id.clone()));
    }
    Ok(TopologyReport {
        order,
        parent,
        parent_line,
        depth,
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Replaces each lumped transformer load by `round(rating * houses_per_kva)`
/// houses (at least one) sharing the lumped kW equally.
///
/// Transformers that already serve customers are left untouched, so the
/// operation is idempotent.
pub fn disaggregate_loads(model: &FeederModel, houses_per_kva: f64) -> Result<FeederModel> {
    if !(houses_per_kva > 0.0) || !houses_per_kva.is_finite() {
        return Err(Error::Domain(format!(
            "houses_per_kva must be positive, got {houses_per_kva}"
        )));
    }
    let mut out = model.clone();
    let existing: HashSet<&str> = model.customers.iter().map(|c| c.id.as_str()).collect();
    for t in &mut out.transformers {
        if !t.customer_ids.is_empty() || t.lumped_load_kw <= 0.0 {
            continue;
        }
        let houses = ((t.rating * houses_per_kva).round() as usize).max(1);
        let share = t.lumped_load_kw / houses as f64;
        for k in 1..=houses {
            let id = format!("{}_h{:02}", t.id, k);
            if existing.contains(id.as_str()) {
                return Err(Error::Validation(format!(
                    "disaggregated customer id `{id}` collides with an existing customer"
                )));
            }
            out.customers.push(CustomerSite {
                id: id.clone(),
                transformer_id: t.id.clone(),
                base_load_scale: share,
                adoption_prob_pv: t.p_pv,
                adoption_prob_ev: t.p_ev,
                existing_pv_kw: 0.0,
                existing_ev_kw: 0.0,
            });
            t.customer_ids.push(id);
        }
        t.lumped_load_kw = 0.0;
    }
    out.validate()
}
