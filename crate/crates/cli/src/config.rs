//! One TOML dialect shared by every subcommand. Every section is optional and
//! defaults to the reference data-center setup.

use std::path::{Path, PathBuf};

use ctrlplace::convergence::RoundsRule;
use ctrlplace::partitioner::PartitionConfig;
use ctrlplace::placement::DEFAULT_EXACT_CEILING;
use ctrlplace::simengine::{Layout, HB_SERVICE_MS, REFERENCE_RATE};
use ctrlplace::topology::{valid_partition_counts, FatTreeConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Network partition count. Chosen by the convergence sweep when absent.
    #[serde(default)]
    pub partitions: Option<usize>,
    #[serde(default)]
    pub topology: FatTreeConfig,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub placement: PlacementSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

fn default_seed() -> u64 {
    1
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            partitions: None,
            topology: FatTreeConfig::default(),
            convergence: ConvergenceSection::default(),
            profile: ProfileSection::default(),
            placement: PlacementSection::default(),
            simulation: SimulationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub partition_counts: Vec<usize>,
    pub failures_per_count: usize,
    pub rounds: RoundsRule,
    /// Explicit model parameters; both must be given to skip calibration.
    pub compute_coeff: Option<f64>,
    pub advert_latency: Option<f64>,
    pub calibration: CalibrationSection,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            partition_counts: vec![1, 2, 4, 8, 16, 32],
            failures_per_count: 100,
            rounds: RoundsRule::default(),
            compute_coeff: None,
            advert_latency: None,
            calibration: CalibrationSection::default(),
        }
    }
}

/// The compute coefficient is fixed by a measured recompute CPU share at a
/// reference partition count; the advertisement latency is then chosen so
/// the expected convergence curve bottoms out at `target_partitions`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub reference_partitions: usize,
    pub recompute_cpu: f64,
    pub target_partitions: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            reference_partitions: 4,
            recompute_cpu: 0.25,
            target_partitions: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    /// Packet-ins per second per partition the demands are measured at.
    pub packet_in_rate: f64,
    pub heartbeat_rate: f64,
    pub heartbeat_service_ms: f64,
    pub failure_interval_s: f64,
    /// Overrides the recompute time derived from the convergence model.
    pub recompute_s: Option<f64>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            packet_in_rate: REFERENCE_RATE,
            heartbeat_rate: 10.0,
            heartbeat_service_ms: HB_SERVICE_MS,
            failure_interval_s: 10.0,
            recompute_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSection {
    /// Two per partition when absent.
    pub servers: Option<usize>,
    pub cpu_capacity: f64,
    pub mem_capacity_gib: f64,
    pub hop_ms: f64,
    /// Hold the exact oracle to event deadlines too.
    pub enforce_deadlines: bool,
    pub exact_ceiling: usize,
    /// Communication graph file to place instead of the profiled reference
    /// graph. Relative paths resolve against the config file's directory.
    pub graph: Option<PathBuf>,
    pub partitioner: PartitionConfig,
}

impl Default for PlacementSection {
    fn default() -> Self {
        Self {
            servers: None,
            cpu_capacity: 1.0,
            mem_capacity_gib: 64.0,
            hop_ms: ctrlplace::commgraph::DEFAULT_HOP_MS,
            enforce_deadlines: true,
            exact_ceiling: DEFAULT_EXACT_CEILING,
            graph: None,
            partitioner: PartitionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub layout: Layout,
    /// Packet-ins per second per partition.
    pub packet_in_rate: f64,
    pub heartbeat_deadline_ms: f64,
    /// Overrides the layout's default policy.
    pub prioritization: Option<bool>,
    pub duration_s: f64,
    pub warmup_fraction: f64,
    /// Offered rates for a saturation sweep, ascending; none when empty.
    pub saturation_rates: Vec<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            layout: Layout::Hybrid,
            packet_in_rate: 40_000.0,
            heartbeat_deadline_ms: 100.0,
            prioritization: None,
            duration_s: 30.0,
            warmup_fraction: 0.1,
            saturation_rates: Vec::new(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(graph) = &cfg.placement.graph {
            if graph.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.placement.graph = Some(base.join(graph));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let valid = valid_partition_counts(self.topology.pods);
        let conv = &self.convergence;
        if conv.partition_counts.is_empty() {
            return bad("convergence.partition_counts is empty".into());
        }
        if let Some(p) = conv.partition_counts.iter().find(|p| !valid.contains(p)) {
            return bad(format!("partition count {p} does not divide {} pods", self.topology.pods));
        }
        if let Some(p) = self.partitions.filter(|p| !valid.contains(p)) {
            return bad(format!("partitions = {p} does not divide {} pods", self.topology.pods));
        }
        if conv.failures_per_count == 0 {
            return bad("convergence.failures_per_count must be >= 1".into());
        }
        if conv.compute_coeff.is_some() != conv.advert_latency.is_some() {
            return bad("convergence.compute_coeff and advert_latency must be given together".into());
        }
        let cal = &conv.calibration;
        if conv.compute_coeff.is_none() {
            if !valid.contains(&cal.reference_partitions) {
                return bad(format!("calibration.reference_partitions = {} is invalid", cal.reference_partitions));
            }
            if !conv.partition_counts.contains(&cal.target_partitions) {
                return bad("calibration.target_partitions must be one of the partition counts".into());
            }
            if !(cal.recompute_cpu > 0.0) {
                return bad("calibration.recompute_cpu must be > 0".into());
            }
        }
        let prof = &self.profile;
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(prof.packet_in_rate) || !positive(prof.heartbeat_service_ms) || !positive(prof.failure_interval_s) {
            return bad("profile rates and times must be > 0".into());
        }
        if !(prof.heartbeat_rate >= 0.0) || prof.recompute_s.is_some_and(|r| !positive(r)) {
            return bad("profile.heartbeat_rate must be >= 0 and recompute_s > 0".into());
        }
        let pl = &self.placement;
        if pl.servers == Some(0) || !positive(pl.cpu_capacity) || !positive(pl.mem_capacity_gib) || !(pl.hop_ms >= 0.0) {
            return bad("placement servers and capacities must be > 0, hop_ms >= 0".into());
        }
        let sim = &self.simulation;
        if !(sim.packet_in_rate >= 0.0) || !positive(sim.duration_s) || !positive(sim.heartbeat_deadline_ms) {
            return bad("simulation rate must be >= 0, duration and deadline > 0".into());
        }
        if !(0.0..1.0).contains(&sim.warmup_fraction) {
            return bad("simulation.warmup_fraction must be in [0, 1)".into());
        }
        let rates = &sim.saturation_rates;
        if rates.iter().any(|&r| !positive(r)) || rates.windows(2).any(|w| w[0] >= w[1]) {
            return bad("simulation.saturation_rates must be positive and strictly ascending".into());
        }
        Ok(())
    }

    pub fn mem_capacity_bytes(&self) -> u64 {
        (self.placement.mem_capacity_gib * (1u64 << 30) as f64).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_reference_defaults() {
        let cfg = Config::parse("schema_version = 1\n").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.topology, FatTreeConfig::REFERENCE);
        assert_eq!(cfg.mem_capacity_bytes(), 64 << 30);
    }

    #[test]
    fn unknown_fields_and_versions_are_config_errors() {
        for text in [
            "schema_version = 2\n",
            "schema_version = 1\nbogus = 3\n",
            "schema_version = 1\n[simulation]\nrate = 3\n",
            "seed = 1\n",
        ] {
            assert!(matches!(Config::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn semantic_errors_are_caught() {
        for text in [
            "schema_version = 1\n[convergence]\npartition_counts = [3]\n",
            "schema_version = 1\npartitions = 5\n",
            "schema_version = 1\n[convergence]\ncompute_coeff = 0.1\n",
            "schema_version = 1\n[simulation]\nsaturation_rates = [2.0, 1.0]\n",
            "schema_version = 1\n[simulation]\nwarmup_fraction = 1.0\n",
            "schema_version = 1\n[placement]\nservers = 0\n",
        ] {
            assert!(matches!(Config::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn defaults_serialize_and_parse_back() {
        let cfg = Config::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn relative_graph_path_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "schema_version = 1\n[placement]\ngraph = \"g.toml\"\n").unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.placement.graph.unwrap(), dir.path().join("g.toml"));
    }
}
