//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rearrange_core::stategraph::{build_graph, DirectedStateGraph, GraphObject};
use rearrange_core::{generate_scenario, Navigator, QModel, RlConfig, Scenario, ScenarioConfig};

/// A 10-object scene with four objects out of view and one swap pair.
pub fn scenario() -> Scenario {
    let cfg = ScenarioConfig { n_visible: 6, n_partially_occluded: 4, n_swap: 2, ..ScenarioConfig::default() };
    generate_scenario(&cfg, 42).expect("fixture scenario")
}

/// The state graph of every object in `s`, seen from the start pose.
pub fn graph(s: &Scenario) -> DirectedStateGraph {
    let nav = Navigator::new(&s.grid);
    let objects: Vec<GraphObject> = s
        .objects
        .iter()
        .map(|o| GraphObject { id: o.id, label: o.label.clone(), source: o.current.origin, goal: o.goal.origin })
        .collect();
    build_graph(&nav, s.agent_start, &objects)
}

pub fn model() -> QModel {
    QModel::new(&RlConfig::default(), &mut ChaCha8Rng::seed_from_u64(0))
}
