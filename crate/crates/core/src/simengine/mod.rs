//! Discrete-event simulation of controller servers.
//!
//! Each server is a single-threaded queueing station. Slices of a
//! [`CommGraph`] are pinned to servers by a [`Placement`]; three workloads
//! drive them per network partition:
//!
//! * packet-ins arrive as a Poisson stream and traverse the pipeline apps in
//!   order (firewall then route lookup by default), paying the cross-server
//!   hop whenever consecutive stages sit on different servers,
//! * heart-beats arrive periodically and must finish within a deadline,
//! * route recomputations arrive once per link-failure interval and hold
//!   their server for the whole recompute time.
//!
//! With prioritization on, each server serves the highest waiting class
//! first (real-time, then latency-sensitive, then compute-intensive), FIFO
//! within a class. Service is never interrupted once started. With
//! prioritization off, each server is a single FIFO.

mod engine;
mod profile;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commgraph::CommGraph;
use crate::placement::{FeasibilityReport, Placement, PlacementError, ServerSpec};

pub use engine::run;
pub use profile::{
    default_apps, partition_scenario, profile_demands, reference_graph, Demand, Layout, ProfileParams, ProfileTable,
    ScenarioParams, DJ_MEM_BYTES, FW_CPU_AT_REFERENCE, FW_MEM_BYTES, GIB, HB_CPU_AT_REFERENCE, HB_SERVICE_MS,
    IDLE_CPU, IDLE_MEM_BYTES, PACKET_IN_SERVICE_US, REFERENCE_RATE, RL_CPU_AT_REFERENCE, RL_MEM_BYTES, SERVER_MEM_BYTES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("placement is infeasible for the scenario's servers: {0:?}")]
    Infeasible(Box<FeasibilityReport>),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("no app model named {0}")]
    MissingApp(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityClass {
    RealTime,
    LatencySensitive,
    ComputeIntensive,
}

impl PriorityClass {
    /// Queue index; lower is served first.
    pub fn rank(self) -> usize {
        match self {
            PriorityClass::RealTime => 0,
            PriorityClass::LatencySensitive => 1,
            PriorityClass::ComputeIntensive => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceTime {
    Fixed { ms: f64 },
    Exponential { mean_ms: f64 },
}

impl ServiceTime {
    pub fn mean_ms(&self) -> f64 {
        match *self {
            ServiceTime::Fixed { ms } => ms,
            ServiceTime::Exponential { mean_ms } => mean_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppModel {
    pub app: String,
    pub service: ServiceTime,
    pub class: PriorityClass,
    pub cpu: f64,
    pub mem_bytes: u64,
}

/// Which apps play which workload role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadRoles {
    /// Apps a packet-in visits, in order.
    pub pipeline: Vec<String>,
    pub heartbeat: String,
    pub recompute: String,
}

impl Default for WorkloadRoles {
    fn default() -> Self {
        Self {
            pipeline: vec!["FW".into(), "RL".into()],
            heartbeat: "HB".into(),
            recompute: "DJ".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub servers: ServerSpec,
    pub graph: CommGraph,
    pub placement: Placement,
    pub apps: Vec<AppModel>,
    pub roles: WorkloadRoles,
    /// Packet-ins per second per partition.
    pub packet_in_rate: f64,
    /// Heart-beats per second per partition.
    pub heartbeat_rate: f64,
    pub heartbeat_deadline_ms: f64,
    pub link_failure_interval_s: f64,
    pub cross_server_hop_ms: f64,
    pub prioritization: bool,
    pub duration_s: f64,
    /// Fraction of the run discarded before measuring.
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Record every service start, for debugging and invariant checks.
    pub trace: bool,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.packet_in_rate) || !nonneg(self.heartbeat_rate) {
            return bad("rates must be >= 0");
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration must be > 0");
        }
        if !(self.heartbeat_deadline_ms > 0.0) || !nonneg(self.cross_server_hop_ms) {
            return bad("deadline must be > 0 and hop >= 0");
        }
        if !(self.link_failure_interval_s > 0.0) {
            return bad("link failure interval must be > 0");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warm-up fraction must be in [0, 1)");
        }
        for app in &self.apps {
            if !(app.service.mean_ms() > 0.0 && app.service.mean_ms().is_finite()) {
                return bad(&format!("service time of {} must be > 0", app.app));
            }
        }
        for slice in self.graph.slices() {
            if !self.apps.iter().any(|a| a.app == slice.app) {
                return Err(SimError::MissingApp(slice.app.clone()));
            }
        }
        Ok(())
    }

    pub fn app(&self, name: &str) -> Option<&AppModel> {
        self.apps.iter().find(|a| a.app == name)
    }
}

/// Nearest-rank quantiles of a latency sample, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: at(0.50),
            p95: at(0.95),
            p99: at(0.99),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeadlineStats {
    /// Heart-beats counted: finished ones plus unfinished ones already late.
    pub total: u64,
    pub missed: u64,
    /// Unfinished at the end of the run and not yet late; excluded.
    pub censored: u64,
    pub miss_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationStats {
    pub server: usize,
    /// Jobs arriving per second during the measurement window.
    pub arrival_rate: f64,
    /// Mean time in station of those jobs, seconds.
    pub mean_sojourn_s: f64,
    /// Time-average number of jobs at the station.
    pub mean_in_system: f64,
}

impl StationStats {
    /// Relative gap between `L` and `lambda * W`.
    pub fn littles_law_error(&self) -> f64 {
        let predicted = self.arrival_rate * self.mean_sojourn_s;
        let scale = self.mean_in_system.max(predicted);
        if scale == 0.0 {
            0.0
        } else {
            (self.mean_in_system - predicted).abs() / scale
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_ns: u64,
    pub server: usize,
    pub class: PriorityClass,
    /// Highest-priority class still waiting at the server when service began.
    pub best_waiting: Option<PriorityClass>,
}

/// Event class names used as keys in [`SimMetrics::latency_ms`].
pub const PACKET_IN: &str = "packet_in";
pub const HEARTBEAT: &str = "heartbeat";
pub const RECOMPUTE: &str = "recompute";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub offered_rate: f64,
    /// Completed packet-in pipelines per second per partition.
    pub throughput: f64,
    /// Packet-ins generated over the whole run, all partitions.
    pub packets_generated: u64,
    /// Packet-in pipelines completed over the whole run, all partitions.
    pub packets_completed: u64,
    pub window_s: f64,
    /// End-to-end latency per event class.
    pub latency_ms: BTreeMap<String, Quantiles>,
    /// Time in station per app, one sample per job.
    pub app_latency_ms: BTreeMap<String, Quantiles>,
    pub heartbeat: DeadlineStats,
    pub cpu_utilization: Vec<f64>,
    pub stations: Vec<StationStats>,
    /// Service starts that bypassed a higher-priority waiting job.
    pub priority_inversions: u64,
    /// Moments a server sat idle with work queued.
    pub idle_with_work: u64,
    /// Raw latency samples per event class, for CDF export.
    #[serde(skip)]
    pub samples: BTreeMap<String, Vec<f64>>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub offered_rate: f64,
    pub throughput: f64,
}

/// One run per offered rate, all with the base scenario's seed. Runs are
/// independent and execute in parallel.
pub fn saturation_sweep(base: &SimScenario, rates: &[f64]) -> Result<Vec<SaturationPoint>> {
    if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) || rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::InvalidScenario("rates must be positive and strictly ascending".into()));
    }
    rates
        .par_iter()
        .map(|&rate| {
            let mut s = base.clone();
            s.packet_in_rate = rate;
            s.trace = false;
            let m = run(&s)?;
            Ok(SaturationPoint {
                offered_rate: rate,
                throughput: m.throughput,
            })
        })
        .collect()
}

/// The highest throughput reached over a sweep.
pub fn saturation_throughput(points: &[SaturationPoint]) -> f64 {
    points.iter().map(|p| p.throughput).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hybrid(rate: f64) -> SimScenario {
        let params = ScenarioParams {
            packet_in_rate: rate,
            duration_s: 4.0,
            recompute_s: 0.5,
            ..Default::default()
        };
        partition_scenario(Layout::Hybrid, &params).unwrap()
    }

    fn failure_heavy(layout: Layout, rate: f64) -> SimScenario {
        let params = ScenarioParams {
            packet_in_rate: rate,
            duration_s: 20.0,
            recompute_s: 0.5,
            link_failure_interval_s: 2.0,
            ..Default::default()
        };
        partition_scenario(layout, &params).unwrap()
    }

    #[test]
    fn quantiles_use_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let q = Quantiles::from_samples(&v).unwrap();
        assert_eq!((q.p50, q.p95, q.p99, q.max), (50.0, 95.0, 99.0, 100.0));
        assert_eq!(q.mean, 50.5);
        assert!(Quantiles::from_samples(&[]).is_none());
    }

    #[test]
    fn lone_heartbeats_take_exactly_their_service_time() {
        let mut s = hybrid(0.0);
        s.link_failure_interval_s = 1e6;
        let m = run(&s).unwrap();
        let hb = m.latency_ms[HEARTBEAT];
        assert!(hb.count > 0);
        assert!((hb.max - HB_SERVICE_MS).abs() < 1e-9 && (hb.p50 - HB_SERVICE_MS).abs() < 1e-9);
        assert_eq!(m.heartbeat.missed, 0);
        assert_eq!(m.packets_generated, 0);
    }

    #[test]
    fn same_seed_same_metrics() {
        let s = hybrid(30_000.0);
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a, b);
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(run(&other).unwrap().packets_generated, a.packets_generated);
    }

    #[test]
    fn infeasible_placement_is_refused() {
        let mut s = hybrid(1000.0);
        s.placement = Placement::new(vec![0, 0, 0, 0]);
        assert!(matches!(run(&s), Err(SimError::Infeasible(r)) if !r.isolation_ok));
        let mut s = hybrid(1000.0);
        s.servers.cpu_capacity = 0.1;
        assert!(matches!(run(&s), Err(SimError::Infeasible(r)) if !r.cpu_ok));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut s = hybrid(1000.0);
        s.warmup_fraction = 1.0;
        assert!(matches!(run(&s), Err(SimError::InvalidScenario(_))));
        let mut s = hybrid(1000.0);
        s.packet_in_rate = -1.0;
        assert!(matches!(run(&s), Err(SimError::InvalidScenario(_))));
        let s = hybrid(1000.0);
        assert!(saturation_sweep(&s, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn throughput_tracks_offered_rate_below_saturation() {
        let m = run(&hybrid(20_000.0)).unwrap();
        assert!((m.throughput / 20_000.0 - 1.0).abs() < 0.02, "{}", m.throughput);
        assert!(m.packets_completed <= m.packets_generated);
    }

    #[test]
    fn littles_law_holds_per_station() {
        let m = run(&hybrid(35_000.0)).unwrap();
        for st in m.stations.iter().filter(|st| st.arrival_rate > 1.0) {
            assert!(st.littles_law_error() < 0.1, "{st:?}");
        }
    }

    #[test]
    fn prioritized_servers_never_invert_or_idle_with_work() {
        let mut s = hybrid(45_000.0);
        s.trace = true;
        let m = run(&s).unwrap();
        assert_eq!(m.priority_inversions, 0);
        assert_eq!(m.idle_with_work, 0);
        assert!(!m.trace.is_empty());
        assert!(m.trace.iter().all(|r| r.best_waiting.is_none_or(|c| c.rank() >= r.class.rank())));
    }

    #[test]
    fn isolating_recompute_protects_heartbeats() {
        let topo = run(&failure_heavy(Layout::Topological, 30_000.0)).unwrap();
        let hyb = run(&failure_heavy(Layout::Hybrid, 30_000.0)).unwrap();
        assert!(topo.heartbeat.missed > 0, "{:?}", topo.heartbeat);
        assert_eq!(hyb.heartbeat.missed, 0);
        assert!(hyb.latency_ms[PACKET_IN].p95 < topo.latency_ms[PACKET_IN].p95);
    }

    #[test]
    fn saturation_sweep_is_monotone_below_capacity() {
        let pts = saturation_sweep(&hybrid(1.0), &[5_000.0, 15_000.0, 25_000.0]).unwrap();
        assert!(pts.windows(2).all(|w| w[0].throughput < w[1].throughput));
        assert_eq!(saturation_throughput(&pts), pts[2].throughput);
    }
}
