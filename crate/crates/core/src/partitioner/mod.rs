//! Multi-constraint S-way graph partitioning.
//!
//! Every vertex carries a `[cpu, mem]` weight vector and every part has a hard
//! capacity per component (optionally relaxed by a multiplicative slack). The
//! goal is to minimize the edge-cut weight. The scheme is the usual multilevel
//! one:
//!
//! 1. coarsen by heavy-edge matching until the graph is small,
//! 2. build an initial partition on the coarsest graph,
//! 3. project back level by level, repairing capacity violations and running
//!    boundary hill-climbing refinement at each level.
//!
//! Several independent trials with seed-derived randomization are run and the
//! best feasible result is kept.

mod coarsen;
mod initial;
mod refine;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coarsen::{coarsen, project, CoarseLevel, CoarsenOptions};
pub use initial::{greedy_initial, grow_initial};
pub use refine::{rebalance, refine};

/// Number of balance constraints per vertex (CPU and memory).
pub const NCON: usize = 2;

pub type Weights = [f64; NCON];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("edge ({0}, {1}) references a vertex outside the graph")]
    VertexOutOfRange(usize, usize),
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("negative or non-finite weight on {0}")]
    InvalidWeight(String),
    #[error("invalid balance spec: {0}")]
    InvalidSpec(String),
    #[error("malformed edge list: {0}")]
    Parse(String),
}

/// Undirected graph with vector vertex weights and scalar edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    weights: Vec<Weights>,
    edges: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    /// Parallel edges are kept in `edges()` but merged (weights summed) in the
    /// adjacency used by the algorithms.
    pub fn new(weights: Vec<Weights>, edges: Vec<(usize, usize, f64)>) -> Result<Self, PartitionError> {
        let n = weights.len();
        for (v, w) in weights.iter().enumerate() {
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(PartitionError::InvalidWeight(format!("vertex {v}")));
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(u, v, w) in &edges {
            if u >= n || v >= n {
                return Err(PartitionError::VertexOutOfRange(u, v));
            }
            if u == v {
                return Err(PartitionError::SelfLoop(u));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(PartitionError::InvalidWeight(format!("edge ({u}, {v})")));
            }
            for (a, b) in [(u, v), (v, u)] {
                match adj[a].iter_mut().find(|(x, _)| *x == b) {
                    Some(slot) => slot.1 += w,
                    None => adj[a].push((b, w)),
                }
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(x, _)| x);
        }
        Ok(Self {
            weights,
            edges,
            adj,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Weights] {
        &self.weights
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Merged neighbors of `v`, sorted by vertex index.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn total_weight(&self) -> Weights {
        let mut t = [0.0; NCON];
        for w in &self.weights {
            for c in 0..NCON {
                t[c] += w[c];
            }
        }
        t
    }

    /// Subgraph induced by `vertices` (in the given order). Returns the
    /// subgraph; vertex `i` of the result is `vertices[i]` of `self`.
    pub fn induced(&self, vertices: &[usize]) -> WeightedGraph {
        let mut local = vec![usize::MAX; self.vertex_count()];
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i;
        }
        let weights = vertices.iter().map(|&v| self.weights[v]).collect();
        let edges = self
            .edges
            .iter()
            .filter(|(u, v, _)| local[*u] != usize::MAX && local[*v] != usize::MAX)
            .map(|&(u, v, w)| (local[u], local[v], w))
            .collect();
        WeightedGraph::new(weights, edges).expect("subgraph of a valid graph is valid")
    }

    /// Reads the standalone edge-list format:
    ///
    /// ```text
    /// # comment
    /// vertices 4
    /// w 0 0.5 1024        (vertex id, cpu, mem; omitted vertices weigh 0)
    /// 0 1 2.5             (u v weight)
    /// ```
    pub fn from_edge_list(text: &str) -> Result<Self, PartitionError> {
        let mut n = None;
        let mut weights = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || PartitionError::Parse(format!("line {}: {raw:?}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["vertices", count] => {
                    let count: usize = count.parse().map_err(|_| bad())?;
                    n = Some(count);
                    weights = vec![[0.0; NCON]; count];
                }
                ["w", v, cpu, mem] => {
                    let v: usize = v.parse().map_err(|_| bad())?;
                    let slot = weights.get_mut(v).ok_or_else(bad)?;
                    *slot = [cpu.parse().map_err(|_| bad())?, mem.parse().map_err(|_| bad())?];
                }
                [u, v, w] => {
                    n.ok_or_else(bad)?;
                    edges.push((
                        u.parse().map_err(|_| bad())?,
                        v.parse().map_err(|_| bad())?,
                        w.parse().map_err(|_| bad())?,
                    ));
                }
                _ => return Err(bad()),
            }
        }
        if n.is_none() {
            return Err(PartitionError::Parse("missing `vertices N` header".into()));
        }
        WeightedGraph::new(weights, edges)
    }
}

/// Part count plus absolute per-constraint capacities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub parts: usize,
    pub capacity: Weights,
    /// Multiplicative tolerance per constraint; 1.0 is a hard capacity.
    pub slack: Weights,
}

impl BalanceSpec {
    pub fn hard(parts: usize, capacity: Weights) -> Self {
        Self {
            parts,
            capacity,
            slack: [1.0; NCON],
        }
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        if self.parts == 0 {
            return Err(PartitionError::InvalidSpec("parts must be >= 1".into()));
        }
        if self.capacity.iter().any(|&c| !(c > 0.0)) {
            return Err(PartitionError::InvalidSpec("capacities must be > 0".into()));
        }
        if self.slack.iter().any(|&s| !(s >= 1.0)) {
            return Err(PartitionError::InvalidSpec("slack must be >= 1.0".into()));
        }
        Ok(())
    }

    /// Effective per-part limit: capacity times slack.
    pub fn limit(&self) -> Weights {
        let mut l = [0.0; NCON];
        for c in 0..NCON {
            l[c] = self.capacity[c] * self.slack[c];
        }
        l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub assignment: Vec<usize>,
    pub cut_weight: f64,
    pub per_part_loads: Vec<Weights>,
    pub feasible: bool,
    /// Why the result is infeasible, when it is.
    pub explanation: Option<String>,
}

/// Tunables. All defaults are deliberately small; the graphs this crate
/// produces have at most a few hundred vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub trials: usize,
    pub max_passes: usize,
    /// Coarsening stops once the graph has at most `max(coarsen_per_part * parts, coarsen_floor)` vertices.
    pub coarsen_per_part: usize,
    pub coarsen_floor: usize,
    pub min_reduction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            trials: 8,
            max_passes: 8,
            coarsen_per_part: 4,
            coarsen_floor: 32,
            min_reduction: 0.1,
        }
    }
}

pub fn cut_weight(graph: &WeightedGraph, assignment: &[usize]) -> f64 {
    graph
        .edges()
        .iter()
        .filter(|(u, v, _)| assignment[*u] != assignment[*v])
        .map(|(_, _, w)| w)
        .sum()
}

/// Loads per part, summed in vertex index order.
pub fn part_loads(graph: &WeightedGraph, assignment: &[usize], parts: usize) -> Vec<Weights> {
    let mut loads = vec![[0.0; NCON]; parts];
    for (v, w) in graph.weights().iter().enumerate() {
        for c in 0..NCON {
            loads[assignment[v]][c] += w[c];
        }
    }
    loads
}

pub fn loads_fit(loads: &[Weights], spec: &BalanceSpec) -> bool {
    let limit = spec.limit();
    loads
        .iter()
        .all(|l| (0..NCON).all(|c| l[c] <= limit[c]))
}

/// Packs an assignment into a [`PartitionResult`], recomputing cut and loads
/// from scratch.
pub fn evaluate(graph: &WeightedGraph, assignment: Vec<usize>, spec: &BalanceSpec) -> PartitionResult {
    let per_part_loads = part_loads(graph, &assignment, spec.parts);
    let feasible = loads_fit(&per_part_loads, spec);
    let explanation = (!feasible).then(|| {
        let limit = spec.limit();
        let over: Vec<String> = per_part_loads
            .iter()
            .enumerate()
            .flat_map(|(p, l)| {
                (0..NCON)
                    .filter(move |&c| l[c] > limit[c])
                    .map(move |c| format!("part {p} constraint {c}: {} > {}", l[c], limit[c]))
            })
            .collect();
        format!("capacity exceeded: {}", over.join("; "))
    });
    PartitionResult {
        cut_weight: cut_weight(graph, &assignment),
        assignment,
        per_part_loads,
        feasible,
        explanation,
    }
}

/// Derives an independent per-trial seed.
fn trial_seed(seed: u64, trial: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn partition(graph: &WeightedGraph, spec: &BalanceSpec, seed: u64) -> Result<PartitionResult, PartitionError> {
    partition_with(graph, spec, seed, &PartitionConfig::default())
}

pub fn partition_with(
    graph: &WeightedGraph,
    spec: &BalanceSpec,
    seed: u64,
    config: &PartitionConfig,
) -> Result<PartitionResult, PartitionError> {
    spec.validate()?;
    let n = graph.vertex_count();
    if n == 0 {
        return Ok(evaluate(graph, Vec::new(), spec));
    }

    let total = graph.total_weight();
    let limit = spec.limit();
    let overflow: Vec<String> = (0..NCON)
        .filter(|&c| total[c] > spec.parts as f64 * limit[c])
        .map(|c| format!("constraint {c}: total {} exceeds {} parts x {}", total[c], spec.parts, limit[c]))
        .collect();
    if !overflow.is_empty() {
        let mut assignment = greedy_initial(graph, spec);
        rebalance(graph, &mut assignment, spec, config.max_passes);
        let mut result = evaluate(graph, assignment, spec);
        result.feasible = false;
        result.explanation = Some(format!("infeasible totals: {}", overflow.join("; ")));
        return Ok(result);
    }

    let mut best: Option<PartitionResult> = None;
    for trial in 0..config.trials.max(1) {
        let candidate = multilevel(graph, spec, trial_seed(seed, trial), trial, config);
        let better = match &best {
            None => true,
            Some(b) => match (candidate.feasible, b.feasible) {
                (true, false) => true,
                (false, true) => false,
                _ => candidate.cut_weight < b.cut_weight,
            },
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one trial runs"))
}

fn multilevel(
    graph: &WeightedGraph,
    spec: &BalanceSpec,
    seed: u64,
    trial: usize,
    config: &PartitionConfig,
) -> PartitionResult {
    let opts = CoarsenOptions {
        min_vertices: (config.coarsen_per_part * spec.parts).max(config.coarsen_floor),
        min_reduction: config.min_reduction,
        max_vertex_weight: Some(spec.limit()),
    };
    let levels = coarsen(graph, &opts, seed);
    let coarsest = levels.last().map_or(graph, |l| &l.graph);

    let mut assignment = if trial == 0 {
        greedy_initial(coarsest, spec)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        grow_initial(coarsest, spec, &mut rng)
    };
    rebalance(coarsest, &mut assignment, spec, config.max_passes);
    refine(coarsest, &mut assignment, spec, config.max_passes);

    for i in (0..levels.len()).rev() {
        let finer = if i == 0 { graph } else { &levels[i - 1].graph };
        assignment = project(&assignment, &levels[i].fine_to_coarse);
        rebalance(finer, &mut assignment, spec, config.max_passes);
        refine(finer, &mut assignment, spec, config.max_passes);
    }
    evaluate(graph, assignment, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique(offset: usize, k: usize, w: f64) -> Vec<(usize, usize, f64)> {
        let mut e = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                e.push((offset + i, offset + j, w));
            }
        }
        e
    }

    #[test]
    fn two_disconnected_cliques_split_cleanly() {
        let mut edges = clique(0, 4, 1.0);
        edges.extend(clique(4, 4, 1.0));
        let g = WeightedGraph::new(vec![[0.2, 1.0]; 8], edges).unwrap();
        let spec = BalanceSpec::hard(2, [0.8, 4.0]);
        let r = partition(&g, &spec, 7).unwrap();
        assert!(r.feasible);
        assert_eq!(r.cut_weight, 0.0);
    }

    #[test]
    fn single_vertex_single_part() {
        let g = WeightedGraph::new(vec![[0.5, 1.0]], vec![]).unwrap();
        let r = partition(&g, &BalanceSpec::hard(1, [1.0, 1.0]), 0).unwrap();
        assert_eq!(r.assignment, vec![0]);
        assert_eq!(r.cut_weight, 0.0);
        assert!(r.feasible);
    }

    #[test]
    fn infeasible_totals_are_reported_not_panicked() {
        let g = WeightedGraph::new(vec![[0.8, 0.0]; 3], vec![(0, 1, 1.0)]).unwrap();
        let r = partition(&g, &BalanceSpec::hard(2, [1.0, 1.0]), 0).unwrap();
        assert!(!r.feasible);
        assert!(r.explanation.unwrap().contains("infeasible totals"));
        assert_eq!(r.assignment.len(), 3);
    }

    #[test]
    fn rejects_invalid_balance() {
        let g = WeightedGraph::new(vec![[0.1, 0.0]], vec![]).unwrap();
        assert!(partition(&g, &BalanceSpec::hard(0, [1.0, 1.0]), 0).is_err());
        let mut s = BalanceSpec::hard(1, [1.0, 1.0]);
        s.slack = [0.5, 1.0];
        assert!(partition(&g, &s, 0).is_err());
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(
            WeightedGraph::new(vec![[0.0; 2]; 2], vec![(1, 1, 1.0)]),
            Err(PartitionError::SelfLoop(1))
        );
        assert!(WeightedGraph::new(vec![[0.0; 2]; 2], vec![(0, 2, 1.0)]).is_err());
        assert!(WeightedGraph::new(vec![[-1.0, 0.0]], vec![]).is_err());
    }

    #[test]
    fn seed_determinism() {
        let mut edges = clique(0, 5, 2.0);
        edges.extend(clique(5, 5, 1.0));
        edges.push((0, 9, 0.5));
        let g = WeightedGraph::new(vec![[0.15, 3.0]; 10], edges).unwrap();
        let spec = BalanceSpec::hard(3, [0.5, 12.0]);
        assert_eq!(partition(&g, &spec, 11).unwrap(), partition(&g, &spec, 11).unwrap());
    }

    #[test]
    fn edge_list_format() {
        let text = "# tiny\nvertices 3\nw 0 0.5 10\nw 2 0.25 0\n0 1 2.0\n1 2 0.5\n";
        let g = WeightedGraph::from_edge_list(text).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.weights()[1], [0.0, 0.0]);
        assert_eq!(g.edges().len(), 2);
        assert!(WeightedGraph::from_edge_list("0 1 2\n").is_err());
        assert!(WeightedGraph::from_edge_list("vertices 2\n0 1\n").is_err());
    }

    #[test]
    fn large_graph_goes_through_coarsening() {
        // 8 cliques of 12 vertices, loosely chained; 8 parts each fitting one clique.
        let mut edges = Vec::new();
        for c in 0..8 {
            edges.extend(clique(c * 12, 12, 1.0));
            if c > 0 {
                edges.push((c * 12 - 1, c * 12, 0.1));
            }
        }
        let g = WeightedGraph::new(vec![[0.08, 1.0]; 96], edges).unwrap();
        let spec = BalanceSpec::hard(8, [1.0, 12.0]);
        let r = partition(&g, &spec, 3).unwrap();
        assert!(r.feasible);
        assert!(r.cut_weight <= 0.7 + 1e-9, "cut {}", r.cut_weight);
    }
}
