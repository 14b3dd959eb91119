//! Placements of application slices onto servers, constraint checking, an
//! exact branch-and-bound solver for small instances, and the heuristic
//! placement built on the graph partitioner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commgraph::{CommGraph, GraphError};
use crate::partitioner::{self, BalanceSpec, PartitionConfig, PartitionError, WeightedGraph};

/// Default largest slice count the exact solver accepts.
pub const DEFAULT_EXACT_CEILING: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("placement covers {got} slices but the graph has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("slice {slice} is assigned to server {server}, but only {count} servers exist")]
    ServerOutOfRange { slice: usize, server: usize, count: usize },
    #[error("instance has {slices} slices, above the exact-solve ceiling of {ceiling}")]
    TooLarge { slices: usize, ceiling: usize },
    #[error("invalid server spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("malformed placement document: {0}")]
    Parse(String),
}

pub type Result<T, E = PlacementError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub count: usize,
    /// CPU capacity per server, as a fraction of one server (1.0 by default).
    #[serde(default = "one")]
    pub cpu_capacity: f64,
    pub mem_capacity: u64,
}

fn one() -> f64 {
    1.0
}

impl ServerSpec {
    pub fn new(count: usize, cpu_capacity: f64, mem_capacity: u64) -> Self {
        Self {
            count,
            cpu_capacity,
            mem_capacity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(PlacementError::InvalidSpec("count must be >= 1".into()));
        }
        if !(self.cpu_capacity > 0.0 && self.cpu_capacity.is_finite()) || self.mem_capacity == 0 {
            return Err(PlacementError::InvalidSpec("capacities must be > 0".into()));
        }
        Ok(())
    }

    fn balance(&self, parts: usize) -> BalanceSpec {
        BalanceSpec::hard(parts, [self.cpu_capacity, self.mem_capacity as f64])
    }
}

/// Assignment vector: slice index to server index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Placement {
    assignment: Vec<usize>,
}

impl Placement {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self { assignment }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn server_of(&self, slice: usize) -> Option<usize> {
        self.assignment.get(slice).copied()
    }

    /// Relabels servers in order of first use, so that equivalent placements
    /// compare equal.
    pub fn canonical(&self) -> Placement {
        let mut relabel = std::collections::HashMap::new();
        let assignment = self
            .assignment
            .iter()
            .map(|&s| {
                let next = relabel.len();
                *relabel.entry(s).or_insert(next)
            })
            .collect();
        Placement { assignment }
    }

    pub fn validate(&self, graph: &CommGraph, spec: &ServerSpec) -> Result<()> {
        if self.len() != graph.slice_count() {
            return Err(PlacementError::LengthMismatch {
                expected: graph.slice_count(),
                got: self.len(),
            });
        }
        if let Some((slice, &server)) = self.assignment.iter().enumerate().find(|(_, &s)| s >= spec.count) {
            return Err(PlacementError::ServerOutOfRange {
                slice,
                server,
                count: spec.count,
            });
        }
        Ok(())
    }

    /// `(app, partition, server)` triples in slice order.
    pub fn to_document(&self, graph: &CommGraph) -> PlacementDocument {
        PlacementDocument {
            assignment: graph
                .slices()
                .iter()
                .zip(&self.assignment)
                .map(|(s, &server)| PlacementRecord {
                    app: s.app.clone(),
                    partition: s.partition,
                    server,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &PlacementDocument, graph: &CommGraph) -> Result<Self> {
        let mut assignment = vec![None; graph.slice_count()];
        for r in &doc.assignment {
            let i = graph.slice_index(&r.app, r.partition).ok_or_else(|| GraphError::UnknownSlice {
                app: r.app.clone(),
                partition: r.partition,
            })?;
            if assignment[i].replace(r.server).is_some() {
                return Err(PlacementError::Parse(format!("slice {} assigned twice", graph.slices()[i].label())));
            }
        }
        let assignment = assignment
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| GraphError::UnplacedSlice(graph.slices()[i].label())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Placement { assignment })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementRecord {
    pub app: String,
    pub partition: usize,
    pub server: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementDocument {
    pub assignment: Vec<PlacementRecord>,
}

impl PlacementDocument {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PlacementError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("placement document is always representable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub cpu_ok: bool,
    pub mem_ok: bool,
    pub deadlines_ok: bool,
    /// False when a server mixes `dedicated` slices with other slices.
    pub isolation_ok: bool,
    pub per_server_cpu: Vec<f64>,
    pub per_server_mem: Vec<u64>,
    pub violated_events: Vec<String>,
}

impl FeasibilityReport {
    /// Capacity, isolation, and (when `with_deadlines`) deadline checks all pass.
    pub fn is_feasible(&self, with_deadlines: bool) -> bool {
        self.cpu_ok && self.mem_ok && self.isolation_ok && (self.deadlines_ok || !with_deadlines)
    }
}

pub fn check_feasibility(graph: &CommGraph, spec: &ServerSpec, placement: &Placement) -> Result<FeasibilityReport> {
    placement.validate(graph, spec)?;
    let mut per_server_cpu = vec![0.0; spec.count];
    let mut per_server_mem = vec![0u64; spec.count];
    let mut dedicated = vec![false; spec.count];
    let mut shared = vec![false; spec.count];
    for (slice, &server) in graph.slices().iter().zip(placement.assignment()) {
        per_server_cpu[server] += slice.cpu;
        per_server_mem[server] += slice.mem_bytes;
        if slice.dedicated {
            dedicated[server] = true;
        } else {
            shared[server] = true;
        }
    }
    let mut violated_events = Vec::new();
    for ev in graph.events() {
        if let Some(deadline) = ev.deadline_ms {
            if graph.event_cost(placement, ev)? > deadline {
                violated_events.push(ev.id.clone());
            }
        }
    }
    Ok(FeasibilityReport {
        cpu_ok: per_server_cpu.iter().all(|&c| c <= spec.cpu_capacity),
        mem_ok: per_server_mem.iter().all(|&m| m <= spec.mem_capacity),
        deadlines_ok: violated_events.is_empty(),
        isolation_ok: (0..spec.count).all(|s| !(dedicated[s] && shared[s])),
        per_server_cpu,
        per_server_mem,
        violated_events,
    })
}

/// Weighted event latency of a placement, in milliseconds.
pub fn objective(graph: &CommGraph, placement: &Placement) -> Result<f64> {
    Ok(graph.weighted_latency(placement)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExactOutcome {
    Optimal { placement: Placement, objective: f64 },
    Infeasible,
}

impl ExactOutcome {
    pub fn placement(&self) -> Option<&Placement> {
        match self {
            ExactOutcome::Optimal { placement, .. } => Some(placement),
            ExactOutcome::Infeasible => None,
        }
    }

    pub fn objective(&self) -> Option<f64> {
        match self {
            ExactOutcome::Optimal { objective, .. } => Some(*objective),
            ExactOutcome::Infeasible => None,
        }
    }
}

/// Branch and bound over assignment prefixes in slice order.
///
/// Slice `i` may only open the next unused server, which enumerates each
/// server-relabeling class once in its canonical form. The bound is the cut
/// weight of the prefix. Among equal optima the lexicographically smallest
/// canonical assignment wins because it is reached first and only strict
/// improvements replace the incumbent.
pub fn solve_exact(graph: &CommGraph, spec: &ServerSpec, enforce_deadlines: bool, ceiling: usize) -> Result<ExactOutcome> {
    spec.validate()?;
    let n = graph.slice_count();
    if n > ceiling {
        return Err(PlacementError::TooLarge { slices: n, ceiling });
    }
    let mut search = Search::new(graph, spec, enforce_deadlines);
    search.descend(0, 0, 0.0);
    Ok(match search.best {
        None => ExactOutcome::Infeasible,
        Some(assignment) => {
            let placement = Placement::new(assignment);
            let objective = objective(graph, &placement)?;
            ExactOutcome::Optimal { placement, objective }
        }
    })
}

struct Search<'a> {
    graph: &'a CommGraph,
    spec: &'a ServerSpec,
    /// For each slice, earlier slices it shares an edge with and the edge weight.
    back_edges: Vec<Vec<(usize, f64)>>,
    /// For each slice, `(deadline event, earlier endpoint, cost x traversals)`
    /// for deadline path edges whose later endpoint is this slice.
    deadline_terms: Vec<Vec<(usize, usize, f64)>>,
    deadlines: Vec<f64>,
    event_cost: Vec<f64>,
    assignment: Vec<usize>,
    cpu: Vec<f64>,
    mem: Vec<u64>,
    dedicated: Vec<usize>,
    shared: Vec<usize>,
    best: Option<Vec<usize>>,
    best_cost: f64,
}

impl<'a> Search<'a> {
    fn new(graph: &'a CommGraph, spec: &'a ServerSpec, enforce_deadlines: bool) -> Self {
        let n = graph.slice_count();
        let alpha = graph.edge_coefficients();
        let mut back_edges = vec![Vec::new(); n];
        for (e, edge) in graph.edges().iter().enumerate() {
            let w = alpha[e] * edge.cost_ms;
            if w > 0.0 {
                let (lo, hi) = (edge.from.min(edge.to), edge.from.max(edge.to));
                back_edges[hi].push((lo, w));
            }
        }
        let mut deadline_terms = vec![Vec::new(); n];
        let mut deadlines = Vec::new();
        if enforce_deadlines {
            for ev in graph.events() {
                let Some(deadline) = ev.deadline_ms else { continue };
                let k = deadlines.len();
                deadlines.push(deadline);
                let mut counts = std::collections::BTreeMap::<usize, f64>::new();
                for &e in &ev.edges {
                    *counts.entry(e).or_default() += 1.0;
                }
                for (e, mult) in counts {
                    let edge = graph.edges()[e];
                    let (lo, hi) = (edge.from.min(edge.to), edge.from.max(edge.to));
                    deadline_terms[hi].push((k, lo, edge.cost_ms * mult));
                }
            }
        }
        Self {
            graph,
            spec,
            back_edges,
            deadline_terms,
            event_cost: vec![0.0; deadlines.len()],
            deadlines,
            assignment: vec![0; n],
            cpu: vec![0.0; spec.count],
            mem: vec![0; spec.count],
            dedicated: vec![0; spec.count],
            shared: vec![0; spec.count],
            best: None,
            best_cost: f64::INFINITY,
        }
    }

    fn tolerance(&self) -> f64 {
        if self.best_cost.is_finite() {
            1e-9 * self.best_cost.abs().max(1.0)
        } else {
            0.0
        }
    }

    /// The incremental deadline sums may differ from the path-order sum in the
    /// last bit; confirm with the canonical evaluation before accepting.
    fn leaf_deadlines_hold(&self) -> bool {
        if self.deadlines.is_empty() {
            return true;
        }
        let placement = Placement::new(self.assignment.clone());
        self.graph.events().iter().all(|ev| match ev.deadline_ms {
            Some(d) => self.graph.event_cost(&placement, ev).is_ok_and(|c| c <= d),
            None => true,
        })
    }

    fn descend(&mut self, i: usize, used: usize, cut: f64) {
        let n = self.assignment.len();
        if i == n {
            if cut < self.best_cost - self.tolerance() && self.leaf_deadlines_hold() {
                self.best_cost = cut;
                self.best = Some(self.assignment.clone());
            }
            return;
        }
        let graph = self.graph;
        let slice = &graph.slices()[i];
        let open = (used + 1).min(self.spec.count);
        for server in 0..open {
            if self.cpu[server] + slice.cpu > self.spec.cpu_capacity
                || self.mem[server] + slice.mem_bytes > self.spec.mem_capacity
            {
                continue;
            }
            if (slice.dedicated && self.shared[server] > 0) || (!slice.dedicated && self.dedicated[server] > 0) {
                continue;
            }
            let mut added = 0.0;
            for &(j, w) in &self.back_edges[i] {
                if self.assignment[j] != server {
                    added += w;
                }
            }
            let new_cut = cut + added;
            if new_cut > self.best_cost + self.tolerance() {
                continue;
            }
            self.assignment[i] = server;
            let saved_costs: Vec<f64> = self.deadline_terms[i].iter().map(|&(k, _, _)| self.event_cost[k]).collect();
            let mut deadline_ok = true;
            for t in 0..self.deadline_terms[i].len() {
                let (k, j, cost) = self.deadline_terms[i][t];
                if self.assignment[j] != server {
                    self.event_cost[k] += cost;
                }
                deadline_ok &= self.event_cost[k] <= self.deadlines[k];
            }
            if deadline_ok {
                // restore by saved value, not subtraction, so sums stay bit-identical
                // to a fresh recomputation in slice order
                let (old_cpu, old_mem) = (self.cpu[server], self.mem[server]);
                self.cpu[server] += slice.cpu;
                self.mem[server] += slice.mem_bytes;
                let pool = if slice.dedicated { &mut self.dedicated } else { &mut self.shared };
                pool[server] += 1;
                self.descend(i + 1, used.max(server + 1), new_cut);
                let pool = if slice.dedicated { &mut self.dedicated } else { &mut self.shared };
                pool[server] -= 1;
                self.cpu[server] = old_cpu;
                self.mem[server] = old_mem;
            }
            for (t, saved) in saved_costs.into_iter().enumerate() {
                self.event_cost[self.deadline_terms[i][t].0] = saved;
            }
        }
    }
}

/// Options for [`place`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaceOptions {
    pub seed: u64,
    pub partition: PartitionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicPlacement {
    pub placement: Placement,
    pub objective: f64,
    pub report: FeasibilityReport,
    /// Servers reserved for `dedicated` slices (0 when there are none).
    pub dedicated_servers: usize,
    /// Set when the partitioner could not meet capacities.
    pub explanation: Option<String>,
}

/// Heuristic placement through multi-constraint graph partitioning.
///
/// Slices marked `dedicated` never share a server with unmarked slices: each
/// pool size `k` for the dedicated group is tried and the two groups are
/// partitioned separately onto `k` and `count - k` servers. The best result
/// is the feasible one with the lowest cut (smaller `k` on ties). Deadlines
/// are not considered here; they are checked afterwards and reported.
pub fn place(graph: &CommGraph, spec: &ServerSpec, opts: &PlaceOptions) -> Result<HeuristicPlacement> {
    spec.validate()?;
    let pg = graph.to_partition_graph();
    let n = graph.slice_count();
    let (dedicated, shared): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| graph.slices()[i].dedicated);

    let mut assignment = vec![0; n];
    let (dedicated_servers, explanation) = if dedicated.is_empty() || shared.is_empty() {
        let r = partitioner::partition_with(&pg, &spec.balance(spec.count), opts.seed, &opts.partition)?;
        assignment.copy_from_slice(&r.assignment);
        let pool = if shared.is_empty() { spec.count } else { 0 };
        (pool, r.explanation)
    } else if spec.count < 2 {
        (0, Some("dedicated slices need at least two servers".to_string()))
    } else {
        let dg = pg.induced(&dedicated);
        let sg = pg.induced(&shared);
        let mut best: Option<(bool, f64, usize, Vec<usize>, Vec<usize>, Option<String>)> = None;
        for k in 1..spec.count {
            let rd = partitioner::partition_with(&dg, &spec.balance(k), opts.seed, &opts.partition)?;
            let rs = partitioner::partition_with(&sg, &spec.balance(spec.count - k), opts.seed, &opts.partition)?;
            let feasible = rd.feasible && rs.feasible;
            let cut = rd.cut_weight + rs.cut_weight;
            let better = match &best {
                None => true,
                Some((bf, bc, ..)) => (feasible && !bf) || (feasible == *bf && cut < *bc),
            };
            if better {
                let why = rd.explanation.or(rs.explanation);
                best = Some((feasible, cut, k, rd.assignment, rs.assignment, why));
            }
        }
        let (_, _, k, da, sa, why) = best.expect("count >= 2 gives at least one pool size");
        for (local, &v) in dedicated.iter().enumerate() {
            assignment[v] = da[local];
        }
        for (local, &v) in shared.iter().enumerate() {
            assignment[v] = k + sa[local];
        }
        (k, why)
    };

    let placement = Placement::new(assignment);
    let report = check_feasibility(graph, spec, &placement)?;
    Ok(HeuristicPlacement {
        objective: objective(graph, &placement)?,
        placement,
        report,
        dedicated_servers,
        explanation,
    })
}

/// Cut weight of `placement` in the partition graph; equals [`objective`].
pub fn partition_cut(pg: &WeightedGraph, placement: &Placement) -> f64 {
    partitioner::cut_weight(pg, placement.assignment())
}
