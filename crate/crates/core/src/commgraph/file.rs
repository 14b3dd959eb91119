//! Hand-writable TOML form of a [`CommGraph`].
//!
//! ```toml
//! [[slices]]
//! app = "FW"
//! partition = 0
//! cpu = 0.07
//! mem_bytes = 1342177280
//!
//! [[edges]]
//! from_app = "FW"
//! from_partition = 0
//! to_app = "RL"
//! to_partition = 0
//! cost_ms = 0.5        # optional, defaults to the hop latency
//!
//! [[events]]
//! id = "packet_in/0"
//! weight = 1.0
//! path = [{ from_app = "FW", from_partition = 0, to_app = "RL", to_partition = 0 }]
//! ```

use serde::{Deserialize, Serialize};

use super::{AppSlice, CommGraph, EventPath, GraphError, Result, DEFAULT_HOP_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceRecord {
    pub app: String,
    pub partition: usize,
    pub cpu: f64,
    pub mem_bytes: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dedicated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRef {
    pub from_app: String,
    pub from_partition: usize,
    pub to_app: String,
    pub to_partition: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub from_app: String,
    pub from_partition: usize,
    pub to_app: String,
    pub to_partition: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_ms: Option<f64>,
}

impl EdgeRecord {
    fn endpoints(&self) -> EdgeRef {
        EdgeRef {
            from_app: self.from_app.clone(),
            from_partition: self.from_partition,
            to_app: self.to_app.clone(),
            to_partition: self.to_partition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub id: String,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_ms: Option<f64>,
    pub path: Vec<EdgeRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    #[serde(default)]
    pub slices: Vec<SliceRecord>,
    #[serde(default)]
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub events: Vec<EventRecord>,
}

impl GraphDocument {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("graph document is always representable")
    }

    /// Builds the graph; edges without a cost get `default_cost_ms`.
    pub fn into_graph(self, default_cost_ms: f64) -> Result<CommGraph> {
        let mut g = CommGraph::new();
        for s in self.slices {
            g.add_slice(AppSlice {
                app: s.app,
                partition: s.partition,
                cpu: s.cpu,
                mem_bytes: s.mem_bytes,
                dedicated: s.dedicated,
            })?;
        }
        for e in self.edges {
            let (a, b) = resolve_pair(&g, &e.endpoints())?;
            g.add_edge(a, b, e.cost_ms.unwrap_or(default_cost_ms))?;
        }
        for ev in self.events {
            let mut edges = Vec::with_capacity(ev.path.len());
            for r in &ev.path {
                let (a, b) = resolve_pair(&g, r)?;
                let e = g.edge_between(a, b).ok_or_else(|| {
                    GraphError::MissingEdge(g.slices[a].label(), g.slices[b].label())
                })?;
                edges.push(e);
            }
            g.add_event(EventPath {
                id: ev.id,
                edges,
                weight: ev.weight,
                deadline_ms: ev.deadline_ms,
            })?;
        }
        Ok(g)
    }

    pub fn from_graph(g: &CommGraph) -> Self {
        let edge_ref = |i: usize| {
            let e = g.edges()[i];
            let (a, b) = (&g.slices()[e.from], &g.slices()[e.to]);
            EdgeRef {
                from_app: a.app.clone(),
                from_partition: a.partition,
                to_app: b.app.clone(),
                to_partition: b.partition,
            }
        };
        Self {
            slices: g
                .slices()
                .iter()
                .map(|s| SliceRecord {
                    app: s.app.clone(),
                    partition: s.partition,
                    cpu: s.cpu,
                    mem_bytes: s.mem_bytes,
                    dedicated: s.dedicated,
                })
                .collect(),
            edges: (0..g.edges().len())
                .map(|i| {
                    let r = edge_ref(i);
                    EdgeRecord {
                        from_app: r.from_app,
                        from_partition: r.from_partition,
                        to_app: r.to_app,
                        to_partition: r.to_partition,
                        cost_ms: Some(g.edges()[i].cost_ms),
                    }
                })
                .collect(),
            events: g
                .events()
                .iter()
                .map(|ev| EventRecord {
                    id: ev.id.clone(),
                    weight: ev.weight,
                    deadline_ms: ev.deadline_ms,
                    path: ev.edges.iter().map(|&e| edge_ref(e)).collect(),
                })
                .collect(),
        }
    }
}

fn resolve_pair(g: &CommGraph, r: &EdgeRef) -> Result<(usize, usize)> {
    let find = |app: &str, partition: usize| {
        g.slice_index(app, partition).ok_or_else(|| GraphError::UnknownSlice {
            app: app.to_string(),
            partition,
        })
    };
    Ok((
        find(&r.from_app, r.from_partition)?,
        find(&r.to_app, r.to_partition)?,
    ))
}

impl CommGraph {
    pub fn from_toml(text: &str) -> Result<Self> {
        GraphDocument::from_toml(text)?.into_graph(DEFAULT_HOP_MS)
    }

    pub fn to_toml(&self) -> String {
        GraphDocument::from_graph(self).to_toml()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[[slices]]
app = "FW"
partition = 0
cpu = 0.07
mem_bytes = 100

[[slices]]
app = "RL"
partition = 0
cpu = 0.45
mem_bytes = 200

[[slices]]
app = "DJ"
partition = 0
cpu = 0.25
mem_bytes = 300
dedicated = true

[[edges]]
from_app = "FW"
from_partition = 0
to_app = "RL"
to_partition = 0

[[events]]
id = "packet_in/0"
weight = 1.0
deadline_ms = 4.0
path = [{ from_app = "RL", from_partition = 0, to_app = "FW", to_partition = 0 }]
"#;

    #[test]
    fn parses_and_defaults_edge_cost() {
        let g = CommGraph::from_toml(SAMPLE).unwrap();
        assert_eq!(g.slice_count(), 3);
        assert_eq!(g.edges()[0].cost_ms, DEFAULT_HOP_MS);
        assert_eq!(g.events()[0].edges, vec![0]);
        assert_eq!(g.events()[0].deadline_ms, Some(4.0));
        assert!(g.slices()[2].dedicated);
    }

    #[test]
    fn toml_round_trip() {
        let g = CommGraph::from_toml(SAMPLE).unwrap();
        let back = CommGraph::from_toml(&g.to_toml()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = SAMPLE.replace("mem_bytes = 100", "mem_bytes = 100\ncolour = \"red\"");
        assert!(matches!(
            CommGraph::from_toml(&bad),
            Err(GraphError::Parse(_))
        ));
    }

    #[test]
    fn rejects_path_over_missing_edge() {
        let bad = SAMPLE.replace(
            "to_app = \"FW\", to_partition = 0 }]",
            "to_app = \"DJ\", to_partition = 0 }]",
        );
        assert!(matches!(
            CommGraph::from_toml(&bad),
            Err(GraphError::MissingEdge(..))
        ));
    }

    #[test]
    fn rejects_unknown_slice() {
        let bad = SAMPLE.replace("to_app = \"RL\"\nto_partition = 0", "to_app = \"LB\"\nto_partition = 0");
        assert!(matches!(
            CommGraph::from_toml(&bad),
            Err(GraphError::UnknownSlice { .. })
        ));
    }
}
