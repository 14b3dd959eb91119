//! Calibrated resource demands and the two reference per-partition layouts.
//!
//! Demands are fractions of one server's CPU and bytes of memory, measured at
//! the reference load of 50,000 packet-ins per second. Packet-in apps scale
//! linearly with load, heart-beats with their rate, and route recomputation
//! with the convergence model's compute time divided by the failure interval.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AppModel, PriorityClass, Result, ServiceTime, SimScenario, WorkloadRoles};
use crate::commgraph::{AppSlice, CommGraph, EventPath};
use crate::placement::{Placement, ServerSpec};

pub const GIB: u64 = 1 << 30;
pub const IDLE_CPU: f64 = 0.15;
pub const IDLE_MEM_BYTES: u64 = 512 << 20;
/// Load at which one controller server saturates.
pub const REFERENCE_RATE: f64 = 50_000.0;
pub const RL_CPU_AT_REFERENCE: f64 = 0.45;
pub const FW_CPU_AT_REFERENCE: f64 = 0.07;
/// Heart-beat CPU at 10 per second.
pub const HB_CPU_AT_REFERENCE: f64 = 0.03;
pub const HB_SERVICE_MS: f64 = 3.0;
pub const RL_MEM_BYTES: u64 = 3 * GIB + 3 * GIB / 4;
pub const FW_MEM_BYTES: u64 = GIB + GIB / 4;
pub const DJ_MEM_BYTES: u64 = 6 * GIB + GIB / 4;
pub const SERVER_MEM_BYTES: u64 = 64 * GIB;
/// Combined firewall plus route-lookup service time per packet-in.
pub const PACKET_IN_SERVICE_US: f64 = 1e6 / REFERENCE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    /// Packet-ins per second per partition the demands are profiled at.
    pub packet_in_rate: f64,
    pub heartbeat_rate: f64,
    pub heartbeat_service_ms: f64,
    /// Duration of one route recomputation at the chosen partition count.
    pub recompute_s: f64,
    pub failure_interval_s: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            packet_in_rate: REFERENCE_RATE,
            heartbeat_rate: 10.0,
            heartbeat_service_ms: HB_SERVICE_MS,
            recompute_s: 2.5,
            failure_interval_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub cpu: f64,
    pub mem_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub idle: Demand,
    pub apps: BTreeMap<String, Demand>,
}

impl ProfileTable {
    pub fn get(&self, app: &str) -> Demand {
        self.apps[app]
    }

    /// Idle plus every app.
    pub fn total_cpu(&self) -> f64 {
        self.idle.cpu + self.apps.values().map(|d| d.cpu).sum::<f64>()
    }
}

pub fn profile_demands(params: &ProfileParams) -> ProfileTable {
    let load = params.packet_in_rate / REFERENCE_RATE;
    let mut apps = BTreeMap::new();
    apps.insert(
        "RL".to_string(),
        Demand {
            cpu: RL_CPU_AT_REFERENCE * load,
            mem_bytes: RL_MEM_BYTES,
        },
    );
    apps.insert(
        "FW".to_string(),
        Demand {
            cpu: FW_CPU_AT_REFERENCE * load,
            mem_bytes: FW_MEM_BYTES,
        },
    );
    apps.insert(
        "HB".to_string(),
        Demand {
            cpu: params.heartbeat_rate * params.heartbeat_service_ms / 1e3,
            mem_bytes: 0,
        },
    );
    apps.insert(
        "DJ".to_string(),
        Demand {
            cpu: params.recompute_s / params.failure_interval_s,
            mem_bytes: DJ_MEM_BYTES,
        },
    );
    ProfileTable {
        idle: Demand {
            cpu: IDLE_CPU,
            mem_bytes: IDLE_MEM_BYTES,
        },
        apps,
    }
}

/// App models for FW, RL, HB, and DJ. The packet-in service time is split
/// between FW and RL in proportion to their CPU demands.
pub fn default_apps(table: &ProfileTable, params: &ProfileParams) -> Vec<AppModel> {
    let (rl, fw) = (RL_CPU_AT_REFERENCE, FW_CPU_AT_REFERENCE);
    let per_packet_ms = PACKET_IN_SERVICE_US / 1e3;
    let app = |name: &str, ms: f64, class| AppModel {
        app: name.to_string(),
        service: ServiceTime::Fixed { ms },
        class,
        cpu: table.get(name).cpu,
        mem_bytes: table.get(name).mem_bytes,
    };
    vec![
        app("FW", per_packet_ms * fw / (rl + fw), PriorityClass::LatencySensitive),
        app("RL", per_packet_ms * rl / (rl + fw), PriorityClass::LatencySensitive),
        app("HB", params.heartbeat_service_ms, PriorityClass::RealTime),
        app("DJ", params.recompute_s * 1e3, PriorityClass::ComputeIntensive),
    ]
}

/// One slice of each app per partition. DJ slices are `dedicated`, so they
/// never share a server with the others. The only edge is FW to RL, on the
/// packet-in path, whose event weight is `1 / partitions`.
pub fn reference_graph(table: &ProfileTable, partitions: usize, hop_ms: f64) -> CommGraph {
    let mut g = CommGraph::new();
    for p in 0..partitions {
        let slice = |app: &str| AppSlice::new(app, p, table.get(app).cpu, table.get(app).mem_bytes);
        let rl = g.add_slice(slice("RL")).expect("fresh slice");
        let fw = g.add_slice(slice("FW")).expect("fresh slice");
        g.add_slice(slice("HB")).expect("fresh slice");
        g.add_slice(slice("DJ").dedicated()).expect("fresh slice");
        let e = g.add_edge(fw, rl, hop_ms).expect("fresh edge");
        g.add_event(EventPath::new(format!("packet_in/{p}"), vec![e], 1.0 / partitions as f64))
            .expect("fresh event");
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// DJ on its own server; FW, RL, HB together; prioritization on.
    Hybrid,
    /// All four apps on one server; prioritization off.
    Topological,
}

impl Layout {
    pub fn default_prioritization(self) -> bool {
        matches!(self, Layout::Hybrid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub packet_in_rate: f64,
    pub heartbeat_rate: f64,
    pub heartbeat_deadline_ms: f64,
    pub heartbeat_service_ms: f64,
    pub link_failure_interval_s: f64,
    pub cross_server_hop_ms: f64,
    /// Overrides the layout's default when set.
    pub prioritization: Option<bool>,
    pub duration_s: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Route recomputation time at this layout's partition count.
    pub recompute_s: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            packet_in_rate: 40_000.0,
            heartbeat_rate: 10.0,
            heartbeat_deadline_ms: 100.0,
            heartbeat_service_ms: HB_SERVICE_MS,
            link_failure_interval_s: 10.0,
            cross_server_hop_ms: crate::commgraph::DEFAULT_HOP_MS,
            prioritization: None,
            duration_s: 30.0,
            warmup_fraction: 0.1,
            seed: 1,
            recompute_s: 0.5,
        }
    }
}

/// A single network partition under `layout`. Slice demands are profiled at
/// the reference load so the placement stays fixed as the offered rate
/// varies. Servers have the idle overhead reserved.
pub fn partition_scenario(layout: Layout, params: &ScenarioParams) -> Result<SimScenario> {
    let profile = ProfileParams {
        packet_in_rate: REFERENCE_RATE,
        heartbeat_rate: params.heartbeat_rate,
        heartbeat_service_ms: params.heartbeat_service_ms,
        recompute_s: params.recompute_s,
        failure_interval_s: params.link_failure_interval_s,
    };
    let table = profile_demands(&profile);
    let mut graph = reference_graph(&table, 1, params.cross_server_hop_ms);
    // slice order per partition: RL, FW, HB, DJ
    let (servers, assignment) = match layout {
        Layout::Hybrid => (2, vec![0, 0, 0, 1]),
        Layout::Topological => (1, vec![0, 0, 0, 0]),
    };
    if layout == Layout::Topological {
        graph = undedicate(&graph);
    }
    let scenario = SimScenario {
        servers: ServerSpec::new(servers, 1.0 - IDLE_CPU, SERVER_MEM_BYTES),
        placement: Placement::new(assignment),
        apps: default_apps(&table, &profile),
        roles: WorkloadRoles::default(),
        packet_in_rate: params.packet_in_rate,
        heartbeat_rate: params.heartbeat_rate,
        heartbeat_deadline_ms: params.heartbeat_deadline_ms,
        link_failure_interval_s: params.link_failure_interval_s,
        cross_server_hop_ms: params.cross_server_hop_ms,
        prioritization: params.prioritization.unwrap_or(layout.default_prioritization()),
        duration_s: params.duration_s,
        warmup_fraction: params.warmup_fraction,
        seed: params.seed,
        trace: false,
        graph,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Same graph with the isolation marks cleared; co-located layouts
/// deliberately put DJ next to the other apps.
fn undedicate(g: &CommGraph) -> CommGraph {
    let mut doc = crate::commgraph::GraphDocument::from_graph(g);
    for s in &mut doc.slices {
        s.dedicated = false;
    }
    doc.into_graph(crate::commgraph::DEFAULT_HOP_MS).expect("same structure as a valid graph")
}
