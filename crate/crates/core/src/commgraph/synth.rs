//! Seeded random communication graphs for experiments and oracle checks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AppSlice, CommGraph, EventPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomGraphParams {
    pub slices: usize,
    /// Chance of each extra edge beyond the random spanning tree.
    pub edge_probability: f64,
    /// Slice CPU demand drawn uniformly from `[cpu_min, cpu_max)`.
    pub cpu_min: f64,
    pub cpu_max: f64,
    /// Slice memory drawn uniformly from `[1, mem_max_bytes]`.
    pub mem_max_bytes: u64,
    pub cost_min_ms: f64,
    pub cost_max_ms: f64,
    pub events: usize,
    /// Edges per event path, at most this many.
    pub max_path_edges: usize,
    /// Chance that an event carries a deadline.
    pub deadline_probability: f64,
}

impl Default for RandomGraphParams {
    fn default() -> Self {
        Self {
            slices: 8,
            edge_probability: 0.3,
            cpu_min: 0.05,
            cpu_max: 0.6,
            mem_max_bytes: 4 << 30,
            cost_min_ms: 0.1,
            cost_max_ms: 5.0,
            events: 4,
            max_path_edges: 3,
            deadline_probability: 0.0,
        }
    }
}

/// A connected graph: a random spanning tree plus independent extra edges.
/// Event paths are random walks along existing edges. Deadlines, when drawn,
/// lie between the path's cheapest and full cross-server cost so that some
/// placements meet them and some do not.
pub fn random_graph<R: Rng>(rng: &mut R, params: &RandomGraphParams) -> CommGraph {
    let mut g = CommGraph::new();
    for i in 0..params.slices {
        let cpu = rng.random_range(params.cpu_min..params.cpu_max);
        let mem = rng.random_range(1..=params.mem_max_bytes.max(1));
        g.add_slice(AppSlice::new(format!("a{i}"), 0, cpu, mem)).expect("names are unique");
    }
    let cost = |rng: &mut R| rng.random_range(params.cost_min_ms..params.cost_max_ms);
    for v in 1..params.slices {
        let u = rng.random_range(0..v);
        let c = cost(rng);
        g.add_edge(u, v, c).expect("tree edges are fresh");
    }
    for u in 0..params.slices {
        for v in u + 1..params.slices {
            if g.edge_between(u, v).is_none() && rng.random_bool(params.edge_probability) {
                let c = cost(rng);
                g.add_edge(u, v, c).expect("checked fresh");
            }
        }
    }
    if g.edges().is_empty() {
        return g;
    }
    for k in 0..params.events {
        let len = rng.random_range(1..=params.max_path_edges.max(1));
        let mut at = rng.random_range(0..params.slices);
        let mut path = Vec::with_capacity(len);
        for _ in 0..len {
            let incident: Vec<usize> = (0..g.edges().len()).filter(|&e| g.edges()[e].touches(at)).collect();
            let e = incident[rng.random_range(0..incident.len())];
            path.push(e);
            at = g.edges()[e].other(at);
        }
        let weight = rng.random_range(0.1..3.0);
        let mut event = EventPath::new(format!("e{k}"), path, weight);
        if rng.random_bool(params.deadline_probability) {
            let full: f64 = event.edges.iter().map(|&e| g.edges()[e].cost_ms).sum();
            event = event.with_deadline(rng.random_range(0.0..full).max(1e-3));
        }
        g.add_event(event).expect("ids are unique");
    }
    g
}
