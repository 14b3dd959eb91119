//! Communication graph between application slices.
//!
//! A slice is one application scoped to one topological partition. Edges carry
//! the extra latency paid when their two endpoints run on different servers,
//! and event paths name the sequences of edges that latency-sensitive events
//! traverse. Given a [`Placement`], the graph evaluates per-event cut latency
//! and the weighted sum over all events.

mod file;
mod synth;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partitioner::WeightedGraph;
use crate::placement::Placement;

pub use file::{EdgeRecord, EdgeRef, EventRecord, GraphDocument, SliceRecord};
pub use synth::{random_graph, RandomGraphParams};

/// Cross-server hop latency used when an edge does not state its own cost.
pub const DEFAULT_HOP_MS: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("slice {app}/{partition} is defined twice")]
    DuplicateSlice { app: String, partition: usize },
    #[error("slice {0} has a negative or non-finite demand")]
    InvalidDemand(String),
    #[error("edge {0} -> {0} is a self-loop")]
    SelfLoop(String),
    #[error("slices {0} and {1} are already joined by an edge")]
    DuplicateEdge(String, String),
    #[error("edge index {0} does not exist")]
    UnknownEdge(usize),
    #[error("slice index {0} does not exist")]
    UnknownSliceIndex(usize),
    #[error("no slice named {app}/{partition}")]
    UnknownSlice { app: String, partition: usize },
    #[error("no edge between {0} and {1}")]
    MissingEdge(String, String),
    #[error("edge {0} -- {1} has a negative or non-finite cost")]
    InvalidCost(String, String),
    #[error("event {0}: weight must be finite and >= 0")]
    InvalidWeight(String),
    #[error("event {0}: deadline must be > 0")]
    InvalidDeadline(String),
    #[error("event {0} is defined twice")]
    DuplicateEvent(String),
    #[error("placement does not assign slice {0}")]
    UnplacedSlice(String),
    #[error("malformed graph document: {0}")]
    Parse(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// One application instance scoped to one topological partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSlice {
    pub app: String,
    pub partition: usize,
    /// Fraction of one server's CPU.
    pub cpu: f64,
    pub mem_bytes: u64,
    /// A dedicated slice may only share a server with other dedicated slices.
    /// Used to keep compute-intensive applications on their own machines.
    #[serde(default)]
    pub dedicated: bool,
}

impl AppSlice {
    pub fn new(app: impl Into<String>, partition: usize, cpu: f64, mem_bytes: u64) -> Self {
        Self {
            app: app.into(),
            partition,
            cpu,
            mem_bytes,
            dedicated: false,
        }
    }

    pub fn dedicated(mut self) -> Self {
        self.dedicated = true;
        self
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.app, self.partition)
    }
}

/// Undirected communication edge; `cost_ms` is paid only when the endpoints
/// are placed on different servers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommEdge {
    pub from: usize,
    pub to: usize,
    pub cost_ms: f64,
}

impl CommEdge {
    pub fn other(&self, v: usize) -> usize {
        if v == self.from {
            self.to
        } else {
            self.from
        }
    }

    pub fn touches(&self, v: usize) -> bool {
        self.from == v || self.to == v
    }
}

/// A latency-sensitive event and the ordered edges it crosses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPath {
    pub id: String,
    /// Indices into the graph's edge list. Repeats count once per traversal.
    pub edges: Vec<usize>,
    pub weight: f64,
    pub deadline_ms: Option<f64>,
}

impl EventPath {
    pub fn new(id: impl Into<String>, edges: Vec<usize>, weight: f64) -> Self {
        Self {
            id: id.into(),
            edges,
            weight,
            deadline_ms: None,
        }
    }

    pub fn with_deadline(mut self, deadline_ms: f64) -> Self {
        self.deadline_ms = Some(deadline_ms);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommGraph {
    slices: Vec<AppSlice>,
    edges: Vec<CommEdge>,
    events: Vec<EventPath>,
    by_name: HashMap<(String, usize), usize>,
    by_pair: HashMap<(usize, usize), usize>,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl CommGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_slice(&mut self, slice: AppSlice) -> Result<usize> {
        if !(slice.cpu.is_finite() && slice.cpu >= 0.0) {
            return Err(GraphError::InvalidDemand(slice.label()));
        }
        let key = (slice.app.clone(), slice.partition);
        if self.by_name.contains_key(&key) {
            return Err(GraphError::DuplicateSlice {
                app: slice.app,
                partition: slice.partition,
            });
        }
        let idx = self.slices.len();
        self.by_name.insert(key, idx);
        self.slices.push(slice);
        Ok(idx)
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cost_ms: f64) -> Result<usize> {
        for v in [from, to] {
            if v >= self.slices.len() {
                return Err(GraphError::UnknownSliceIndex(v));
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(self.slices[from].label()));
        }
        if !(cost_ms.is_finite() && cost_ms >= 0.0) {
            return Err(GraphError::InvalidCost(
                self.slices[from].label(),
                self.slices[to].label(),
            ));
        }
        let key = pair_key(from, to);
        if self.by_pair.contains_key(&key) {
            return Err(GraphError::DuplicateEdge(
                self.slices[from].label(),
                self.slices[to].label(),
            ));
        }
        let idx = self.edges.len();
        self.by_pair.insert(key, idx);
        self.edges.push(CommEdge { from, to, cost_ms });
        Ok(idx)
    }

    pub fn add_event(&mut self, event: EventPath) -> Result<()> {
        if !(event.weight.is_finite() && event.weight >= 0.0) {
            return Err(GraphError::InvalidWeight(event.id));
        }
        if let Some(d) = event.deadline_ms {
            if !(d > 0.0) {
                return Err(GraphError::InvalidDeadline(event.id));
            }
        }
        if let Some(&bad) = event.edges.iter().find(|&&e| e >= self.edges.len()) {
            return Err(GraphError::UnknownEdge(bad));
        }
        if self.events.iter().any(|e| e.id == event.id) {
            return Err(GraphError::DuplicateEvent(event.id));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn slices(&self) -> &[AppSlice] {
        &self.slices
    }

    pub fn edges(&self) -> &[CommEdge] {
        &self.edges
    }

    pub fn events(&self) -> &[EventPath] {
        &self.events
    }

    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }

    pub fn slice_index(&self, app: &str, partition: usize) -> Option<usize> {
        self.by_name.get(&(app.to_string(), partition)).copied()
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.by_pair.get(&pair_key(a, b)).copied()
    }

    /// Number of distinct partition ids among the slices.
    pub fn partition_count(&self) -> usize {
        self.slices
            .iter()
            .map(|s| s.partition)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Number of distinct application ids among the slices.
    pub fn app_count(&self) -> usize {
        self.slices
            .iter()
            .map(|s| s.app.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// True when every app appears in every partition.
    pub fn is_complete(&self) -> bool {
        self.slices.len() == self.partition_count() * self.app_count()
    }

    fn server_of(&self, placement: &Placement, slice: usize) -> Result<usize> {
        placement
            .server_of(slice)
            .ok_or_else(|| GraphError::UnplacedSlice(self.slices[slice].label()))
    }

    /// Latency of one event under `placement`: the sum of edge costs along the
    /// path whose endpoints sit on different servers.
    pub fn event_cost(&self, placement: &Placement, event: &EventPath) -> Result<f64> {
        let mut total = 0.0;
        for &e in &event.edges {
            let edge = self.edges.get(e).ok_or(GraphError::UnknownEdge(e))?;
            if self.server_of(placement, edge.from)? != self.server_of(placement, edge.to)? {
                total += edge.cost_ms;
            }
        }
        Ok(total)
    }

    /// Weighted latency over every event in the graph.
    pub fn weighted_latency(&self, placement: &Placement) -> Result<f64> {
        let mut total = 0.0;
        for event in &self.events {
            total += event.weight * self.event_cost(placement, event)?;
        }
        Ok(total)
    }

    /// Per-edge coefficient: the sum over events of event weight times the
    /// number of times the event path crosses that edge.
    pub fn edge_coefficients(&self) -> Vec<f64> {
        let mut alpha = vec![0.0; self.edges.len()];
        for event in &self.events {
            for &e in &event.edges {
                alpha[e] += event.weight;
            }
        }
        alpha
    }

    /// Multi-constraint partitioning input: vertex weights `[cpu, mem]`,
    /// edge weights `alpha * cost`. Edges no event uses are dropped.
    pub fn to_partition_graph(&self) -> WeightedGraph {
        let alpha = self.edge_coefficients();
        let weights = self
            .slices
            .iter()
            .map(|s| [s.cpu, s.mem_bytes as f64])
            .collect();
        let edges = self
            .edges
            .iter()
            .zip(&alpha)
            .filter(|(_, &a)| a > 0.0)
            .map(|(e, &a)| (e.from, e.to, a * e.cost_ms))
            .collect();
        WeightedGraph::new(weights, edges).expect("comm graph edges are validated on insert")
    }

    /// Ordered slice sequence visited by an event path. Edges are undirected,
    /// so orientation is recovered by chaining consecutive edges; a lone edge
    /// runs `from -> to`.
    pub fn path_slices(&self, event: &EventPath) -> Vec<usize> {
        let mut seq = Vec::with_capacity(event.edges.len() + 1);
        let Some(&first) = event.edges.first() else {
            return seq;
        };
        let e0 = self.edges[first];
        let start = match event.edges.get(1).map(|&e| self.edges[e]) {
            Some(next) if next.touches(e0.from) && !next.touches(e0.to) => e0.to,
            _ => e0.from,
        };
        seq.push(start);
        let mut at = start;
        for &e in &event.edges {
            let edge = self.edges[e];
            at = if edge.touches(at) { edge.other(at) } else { edge.to };
            seq.push(at);
        }
        seq
    }

    /// Slices of the graph that belong to partition `p`, in index order.
    pub fn slices_in_partition(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        self.slices
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.partition == p)
            .map(|(i, _)| i)
    }
}
