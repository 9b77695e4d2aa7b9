mod support;

use gridplan::feeder::{disaggregate_loads, load_feeder, validate_radial};
use serde_json::Value;

fn manifest() -> Value {
    serde_json::from_str(&std::fs::read_to_string(support::fixture("feeder123.manifest.json")).unwrap()).unwrap()
}

#[test]
fn fixture_counts_match_manifest() {
    let m = manifest();
    let f = load_feeder(support::fixture("feeder123.json")).unwrap();
    assert_eq!(f.buses.len() as u64, m["buses"].as_u64().unwrap());
    assert_eq!(f.lines.len() as u64, m["lines"].as_u64().unwrap());
    assert_eq!(f.transformers.len() as u64, m["transformers"].as_u64().unwrap());
    assert_eq!(f.customers.len() as u64, m["customers"].as_u64().unwrap());
    let lumped = f.transformers.iter().filter(|t| t.lumped_load_kw > 0.0).count();
    assert_eq!(lumped as u64, m["lumped_transformers"].as_u64().unwrap());

    let topo = validate_radial(&f).unwrap();
    assert_eq!(topo.order.len() as u64, m["reachable_buses"].as_u64().unwrap());
    assert_eq!(topo.max_depth() as u64, m["max_depth"].as_u64().unwrap());
}

#[test]
fn fixture_disaggregation_matches_manifest() {
    let m = manifest();
    let f = load_feeder(support::fixture("feeder123.json")).unwrap();
    let d = disaggregate_loads(&f, m["houses_per_kva"].as_f64().unwrap()).unwrap();
    assert_eq!(d.customers.len() as u64, m["customers_after_disaggregation"].as_u64().unwrap());
    assert!(d.transformers.iter().all(|t| t.lumped_load_kw == 0.0));
    assert!((d.total_base_load() - m["total_base_load_kw"].as_f64().unwrap()).abs() < 1e-3);
    // every transformer serves at least one customer afterwards
    assert!(d.transformers.iter().all(|t| !t.customer_ids.is_empty()));
}
