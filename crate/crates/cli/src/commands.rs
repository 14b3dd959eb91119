//! The five subcommands. Each builds its inputs from a [`Config`], runs the
//! library, and writes machine-readable reports that embed the manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ctrlplace::commgraph::{CommGraph, GraphDocument};
use ctrlplace::convergence::{
    calibrate, pick_partition_count, sweep_partitions, ConvergenceModel, SampleRow, SweepAggregate, SweepResult,
};
use ctrlplace::placement::{place, solve_exact, FeasibilityReport, PlaceOptions, ServerSpec};
use ctrlplace::simengine::{
    partition_scenario, profile_demands, reference_graph, run, saturation_sweep, saturation_throughput, Layout,
    ProfileParams, ProfileTable, SaturationPoint, ScenarioParams, SimError, SimMetrics, HEARTBEAT, PACKET_IN,
};
use ctrlplace::topology::{build_fat_tree, FatTreeTopology, PodPartitioning};
use serde::Serialize;

use crate::config::Config;
use crate::error::{internal, CliError};
use crate::report::{ReportWriter, RunManifest};

/// What a subcommand produced.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Shared setup: topology, convergence model, and the partition count.
pub struct Pipeline<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
    pub topology: FatTreeTopology,
    pub model: ConvergenceModel,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a Config, seed: u64) -> Result<Self, CliError> {
        let topology = build_fat_tree(&cfg.topology).map_err(|e| CliError::Config(e.to_string()))?;
        let conv = &cfg.convergence;
        let model = match (conv.compute_coeff, conv.advert_latency) {
            (Some(compute_coeff), Some(advert_latency)) => ConvergenceModel {
                compute_coeff,
                advert_latency,
                rounds: conv.rounds,
            },
            _ => {
                let cal = &conv.calibration;
                let coeff = ConvergenceModel::coeff_from_cpu(
                    &topology,
                    cal.reference_partitions,
                    cal.recompute_cpu,
                    cfg.profile.failure_interval_s,
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                calibrate(&topology, &conv.partition_counts, cal.target_partitions, coeff, conv.rounds)
                    .map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            cfg,
            seed,
            topology,
            model,
        })
    }

    pub fn sweep(&self) -> Result<SweepResult, CliError> {
        let conv = &self.cfg.convergence;
        sweep_partitions(&self.topology, &conv.partition_counts, conv.failures_per_count, &self.model, self.seed)
            .map_err(internal)
    }

    /// The configured partition count, or the sweep's choice.
    pub fn partitions(&self) -> Result<usize, CliError> {
        match self.cfg.partitions {
            Some(p) => Ok(p),
            None => Ok(choose(&self.sweep()?.aggregates)?),
        }
    }

    /// Duration of one route recomputation inside a partition.
    pub fn recompute_s(&self, partitions: usize) -> Result<f64, CliError> {
        if let Some(r) = self.cfg.profile.recompute_s {
            return Ok(r);
        }
        let part = PodPartitioning::new(&self.topology, partitions).map_err(internal)?;
        Ok(self.model.compute_time(part.switch_count(0)))
    }

    pub fn profile(&self, partitions: usize) -> Result<(ProfileParams, ProfileTable), CliError> {
        let prof = &self.cfg.profile;
        let params = ProfileParams {
            packet_in_rate: prof.packet_in_rate,
            heartbeat_rate: prof.heartbeat_rate,
            heartbeat_service_ms: prof.heartbeat_service_ms,
            recompute_s: self.recompute_s(partitions)?,
            failure_interval_s: prof.failure_interval_s,
        };
        Ok((params, profile_demands(&params)))
    }
}

fn choose(aggregates: &[SweepAggregate]) -> Result<usize, CliError> {
    pick_partition_count(aggregates).ok_or_else(|| CliError::Config("no partition counts to choose from".into()))
}

#[derive(Serialize)]
struct SweepReport<'a> {
    manifest: &'a RunManifest,
    model: ConvergenceModel,
    chosen_partitions: usize,
    aggregates: &'a [SweepAggregate],
}

pub fn sweep_convergence(pipe: &Pipeline, manifest: &RunManifest, out: &mut ReportWriter) -> Result<String, CliError> {
    let sweep = pipe.sweep()?;
    let chosen = choose(&sweep.aggregates)?;
    out.json(
        "convergence.json",
        &SweepReport {
            manifest,
            model: pipe.model,
            chosen_partitions: chosen,
            aggregates: &sweep.aggregates,
        },
    )?;
    out.csv("convergence_aggregate.csv", &sweep.aggregates)?;
    out.csv("convergence_samples.csv", sweep.samples.iter().map(SampleRow::from))?;
    Ok(format!("chosen partition count: {chosen}"))
}

#[derive(Serialize)]
struct ProfileReport<'a> {
    manifest: &'a RunManifest,
    partitions: usize,
    params: ProfileParams,
    demands: ProfileTable,
    total_cpu: f64,
}

#[derive(Serialize)]
struct DemandRow<'a> {
    app: &'a str,
    cpu: f64,
    mem_bytes: u64,
}

pub fn profile(pipe: &Pipeline, manifest: &RunManifest, out: &mut ReportWriter) -> Result<String, CliError> {
    let partitions = pipe.partitions()?;
    let (params, table) = pipe.profile(partitions)?;
    let rows: Vec<DemandRow> = std::iter::once(DemandRow {
        app: "idle",
        cpu: table.idle.cpu,
        mem_bytes: table.idle.mem_bytes,
    })
    .chain(table.apps.iter().map(|(app, d)| DemandRow {
        app,
        cpu: d.cpu,
        mem_bytes: d.mem_bytes,
    }))
    .collect();
    out.csv("profile.csv", &rows)?;
    let total_cpu = table.total_cpu();
    out.json(
        "profile.json",
        &ProfileReport {
            manifest,
            partitions,
            params,
            demands: table,
            total_cpu,
        },
    )?;
    Ok(format!("P={partitions}: idle plus all apps use {total_cpu:.3} of one server"))
}

#[derive(Serialize)]
struct SliceRow {
    app: String,
    partition: usize,
    server: usize,
    cpu: f64,
    mem_bytes: u64,
    dedicated: bool,
}

#[derive(Serialize)]
struct OracleReport {
    enforce_deadlines: bool,
    /// None when no placement satisfies the constraints.
    objective: Option<f64>,
    /// Heuristic minus exact objective.
    gap: Option<f64>,
    /// `gap / exact`, when the exact optimum is positive.
    relative_gap: Option<f64>,
}

#[derive(Serialize)]
struct PlaceReport<'a> {
    manifest: &'a RunManifest,
    /// Network partitions of the profiled graph; absent for a graph file.
    partitions: Option<usize>,
    servers: ServerSpec,
    objective: f64,
    feasibility: FeasibilityReport,
    dedicated_servers: usize,
    explanation: Option<String>,
    slices: Vec<SliceRow>,
    oracle: Option<OracleReport>,
    oracle_skipped: Option<String>,
}

pub fn place_graph(pipe: &Pipeline) -> Result<(CommGraph, Option<usize>), CliError> {
    let cfg = pipe.cfg;
    if let Some(path) = &cfg.placement.graph {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let graph = GraphDocument::from_toml(&text)
            .and_then(|d| d.into_graph(cfg.placement.hop_ms))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok((graph, None));
    }
    let partitions = pipe.partitions()?;
    let (_, table) = pipe.profile(partitions)?;
    Ok((reference_graph(&table, partitions, cfg.placement.hop_ms), Some(partitions)))
}

pub fn place_cmd(
    pipe: &Pipeline,
    manifest: &RunManifest,
    exact_ceiling: usize,
    out: &mut ReportWriter,
) -> Result<String, CliError> {
    let cfg = &pipe.cfg.placement;
    let (graph, partitions) = place_graph(pipe)?;
    let servers = ServerSpec::new(
        cfg.servers.unwrap_or(2 * partitions.unwrap_or(1)),
        cfg.cpu_capacity,
        pipe.cfg.mem_capacity_bytes(),
    );
    let opts = PlaceOptions {
        seed: pipe.seed,
        partition: cfg.partitioner,
    };
    let placed = place(&graph, &servers, &opts).map_err(internal)?;
    let (oracle, oracle_skipped) = if graph.slice_count() <= exact_ceiling {
        let exact = solve_exact(&graph, &servers, cfg.enforce_deadlines, exact_ceiling).map_err(internal)?;
        let objective = exact.objective();
        let gap = objective.map(|o| placed.objective - o);
        let relative_gap = objective.zip(gap).and_then(|(o, g)| (o > 0.0).then(|| g / o));
        let report = OracleReport {
            enforce_deadlines: cfg.enforce_deadlines,
            objective,
            gap,
            relative_gap,
        };
        (Some(report), None)
    } else {
        let why = format!("{} slices exceed the exact ceiling of {exact_ceiling}", graph.slice_count());
        (None, Some(why))
    };
    let slices = graph
        .slices()
        .iter()
        .zip(placed.placement.assignment())
        .map(|(s, &server)| SliceRow {
            app: s.app.clone(),
            partition: s.partition,
            server,
            cpu: s.cpu,
            mem_bytes: s.mem_bytes,
            dedicated: s.dedicated,
        })
        .collect();
    let feasible = placed.report.is_feasible(cfg.enforce_deadlines);
    out.json(
        "placement.json",
        &PlaceReport {
            manifest,
            partitions,
            servers,
            objective: placed.objective,
            feasibility: placed.report.clone(),
            dedicated_servers: placed.dedicated_servers,
            explanation: placed.explanation.clone(),
            slices,
            oracle,
            oracle_skipped,
        },
    )?;
    if !feasible {
        let why = placed.explanation.unwrap_or_else(|| describe(&placed.report));
        return Err(CliError::Infeasible(why));
    }
    Ok(format!(
        "placed {} slices on {} servers, objective {:.6} ms",
        graph.slice_count(),
        servers.count,
        placed.objective
    ))
}

fn describe(r: &FeasibilityReport) -> String {
    let mut parts = Vec::new();
    for (ok, what) in [(r.cpu_ok, "cpu"), (r.mem_ok, "memory"), (r.isolation_ok, "isolation")] {
        if !ok {
            parts.push(format!("{what} limit violated"));
        }
    }
    if !r.deadlines_ok {
        parts.push(format!("deadlines missed by {}", r.violated_events.join(", ")));
    }
    parts.join("; ")
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRun {
    pub layout: Layout,
    pub partitions: usize,
    pub recompute_s: f64,
    pub prioritization: bool,
    pub metrics: SimMetrics,
    pub saturation: Vec<SaturationPoint>,
    pub saturation_throughput: Option<f64>,
}

pub fn simulation(pipe: &Pipeline) -> Result<SimulationRun, CliError> {
    let cfg = pipe.cfg;
    let sim = &cfg.simulation;
    let partitions = pipe.partitions()?;
    let recompute_s = pipe.recompute_s(partitions)?;
    let params = ScenarioParams {
        packet_in_rate: sim.packet_in_rate,
        heartbeat_rate: cfg.profile.heartbeat_rate,
        heartbeat_deadline_ms: sim.heartbeat_deadline_ms,
        heartbeat_service_ms: cfg.profile.heartbeat_service_ms,
        link_failure_interval_s: cfg.profile.failure_interval_s,
        cross_server_hop_ms: cfg.placement.hop_ms,
        prioritization: sim.prioritization,
        duration_s: sim.duration_s,
        warmup_fraction: sim.warmup_fraction,
        seed: pipe.seed,
        recompute_s,
    };
    let scenario = partition_scenario(sim.layout, &params).map_err(sim_error)?;
    let metrics = run(&scenario).map_err(sim_error)?;
    let saturation = if sim.saturation_rates.is_empty() {
        Vec::new()
    } else {
        saturation_sweep(&scenario, &sim.saturation_rates).map_err(sim_error)?
    };
    Ok(SimulationRun {
        layout: sim.layout,
        partitions,
        recompute_s,
        prioritization: scenario.prioritization,
        saturation_throughput: (!saturation.is_empty()).then(|| saturation_throughput(&saturation)),
        metrics,
        saturation,
    })
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Infeasible(r) => CliError::Infeasible(describe(&r)),
        SimError::InvalidScenario(m) => CliError::Config(m),
        other => internal(other),
    }
}

#[derive(Serialize)]
struct SimReport<'a> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    run: &'a SimulationRun,
}

#[derive(Serialize)]
struct SampleCsvRow<'a> {
    class: &'a str,
    latency_ms: f64,
}

pub fn simulate_cmd(pipe: &Pipeline, manifest: &RunManifest, out: &mut ReportWriter) -> Result<String, CliError> {
    let result = simulation(pipe)?;
    out.json(
        "metrics.json",
        &SimReport {
            manifest,
            run: &result,
        },
    )?;
    let rows = result
        .metrics
        .samples
        .iter()
        .flat_map(|(class, v)| v.iter().map(move |&latency_ms| SampleCsvRow { class, latency_ms }));
    out.csv("latency_samples.csv", rows)?;
    if !result.saturation.is_empty() {
        out.csv("saturation.csv", &result.saturation)?;
    }
    let m = &result.metrics;
    Ok(format!(
        "{:?} P={}: throughput {:.1}/s, heart-beat misses {}/{}",
        result.layout, result.partitions, m.throughput, m.heartbeat.missed, m.heartbeat.total
    ))
}

/// Which side a lower or higher value favours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Better {
    Higher,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b - a`.
    pub delta: Option<f64>,
    pub better: Better,
    /// "a", "b", or "tie"; empty when a side lacks the metric.
    pub winner: String,
}

/// Headline metrics of two runs side by side.
pub fn delta_table(a: &SimulationRun, b: &SimulationRun) -> Vec<DeltaRow> {
    let headline = |r: &SimulationRun| -> BTreeMap<&'static str, (Option<f64>, Better)> {
        let q = |class: &str, f: fn(&ctrlplace::simengine::Quantiles) -> f64| r.metrics.latency_ms.get(class).map(f);
        BTreeMap::from([
            ("throughput", (Some(r.metrics.throughput), Better::Higher)),
            ("saturation_throughput", (r.saturation_throughput, Better::Higher)),
            ("heartbeat_p95_ms", (q(HEARTBEAT, |x| x.p95), Better::Lower)),
            ("heartbeat_p99_ms", (q(HEARTBEAT, |x| x.p99), Better::Lower)),
            ("heartbeat_miss_rate", (Some(r.metrics.heartbeat.miss_fraction), Better::Lower)),
            ("packet_in_p95_ms", (q(PACKET_IN, |x| x.p95), Better::Lower)),
        ])
    };
    let (ha, hb) = (headline(a), headline(b));
    ha.into_iter()
        .map(|(metric, (va, better))| {
            let vb = hb[metric].0;
            let delta = va.zip(vb).map(|(x, y)| y - x);
            let winner = match (va, vb) {
                (Some(x), Some(y)) if x == y => "tie",
                (Some(x), Some(y)) if (y > x) == (better == Better::Higher) => "b",
                (Some(_), Some(_)) => "a",
                _ => "",
            };
            DeltaRow {
                metric: metric.to_string(),
                a: va,
                b: vb,
                delta,
                better,
                winner: winner.to_string(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CompareReport<'a> {
    manifest: &'a RunManifest,
    a: &'a SimulationRun,
    b: &'a SimulationRun,
    deltas: &'a [DeltaRow],
}

pub fn compare_cmd(
    a: &Pipeline,
    b: &Pipeline,
    manifest: &RunManifest,
    out: &mut ReportWriter,
) -> Result<String, CliError> {
    let (ra, rb) = rayon::join(|| simulation(a), || simulation(b));
    let (ra, rb) = (ra?, rb?);
    let deltas = delta_table(&ra, &rb);
    out.json(
        "compare.json",
        &CompareReport {
            manifest,
            a: &ra,
            b: &rb,
            deltas: &deltas,
        },
    )?;
    out.csv("compare.csv", &deltas)?;
    let wins = |side: &str| deltas.iter().filter(|d| d.winner == side).count();
    Ok(format!("a wins {} metrics, b wins {}", wins("a"), wins("b")))
}
