//! Analytic model of shortest-path reconvergence across network partitions.
//!
//! After a link failure the partition owning the link recomputes its routes
//! with a local Dijkstra run. Its cost grows as `n log2 n` in the partition's
//! switch count, so more partitions mean cheaper recomputation. The owner then
//! advertises the change to the other `P - 1` partitions, serialized at
//! `advert_latency` each, so more partitions mean more communication. A border
//! failure additionally forces every other partition to recompute once the
//! advertisement arrives.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{FailureKind, FatTreeTopology, LinkFailureEvent, PodPartitioning, TopologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvergenceError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("link {0} is down; only up links can fail")]
    FailureOnDownLink(usize),
    #[error("model coefficients must be positive and finite")]
    InvalidModel,
    #[error("no advertisement latency puts the minimum at P={target}: need {lower} < latency < {upper}")]
    Uncalibratable { target: usize, lower: f64, upper: f64 },
    #[error("calibration needs the target P={0} among the partition counts")]
    TargetMissing(usize),
}

pub type Result<T, E = ConvergenceError> = std::result::Result<T, E>;

/// Number of advertisement rounds a failure triggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundsRule {
    /// One round to all other partitions for either failure kind.
    #[default]
    Broadcast,
    /// Border failures take two rounds (announce, then confirm), local ones one.
    BorderTwice,
}

impl RoundsRule {
    pub fn rounds(&self, kind: FailureKind, partition_count: usize) -> usize {
        if partition_count <= 1 {
            return 0;
        }
        match (self, kind) {
            (RoundsRule::Broadcast, _) => 1,
            (RoundsRule::BorderTwice, FailureKind::Border) => 2,
            (RoundsRule::BorderTwice, FailureKind::Local) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceModel {
    /// Seconds per `n log2 n` unit of Dijkstra work.
    pub compute_coeff: f64,
    /// Seconds per advertisement to one partition.
    pub advert_latency: f64,
    #[serde(default)]
    pub rounds: RoundsRule,
}

/// `n log2 n`, the work unit of one Dijkstra run over `n` switches.
pub fn dijkstra_work(n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        let n = n as f64;
        n * n.log2()
    }
}

impl ConvergenceModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if ok(self.compute_coeff) && ok(self.advert_latency) {
            Ok(())
        } else {
            Err(ConvergenceError::InvalidModel)
        }
    }

    /// Local recompute time for a partition of `n` switches.
    pub fn compute_time(&self, n: usize) -> f64 {
        self.compute_coeff * dijkstra_work(n)
    }

    /// The coefficient under which one recomputation per `interval_s` at
    /// `reference_p` partitions consumes `cpu_fraction` of a server.
    pub fn coeff_from_cpu(topology: &FatTreeTopology, reference_p: usize, cpu_fraction: f64, interval_s: f64) -> Result<f64> {
        let part = PodPartitioning::new(topology, reference_p)?;
        Ok(cpu_fraction * interval_s / dijkstra_work(part.switch_count(0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSample {
    pub partition_count: usize,
    pub failure: LinkFailureEvent,
    pub total_time_s: f64,
    pub compute_time_s: f64,
    pub comm_time_s: f64,
}

pub fn measure_convergence(
    topology: &FatTreeTopology,
    partitioning: &PodPartitioning,
    failure: &LinkFailureEvent,
    model: &ConvergenceModel,
) -> Result<ConvergenceSample> {
    if !topology.links().get(failure.link).ok_or(TopologyError::UnknownLink(failure.link))?.up {
        return Err(ConvergenceError::FailureOnDownLink(failure.link));
    }
    let p = partitioning.partition_count;
    let origin = partitioning.origin_of(topology, failure);
    let mut compute = model.compute_time(partitioning.switch_count(origin));
    let comm = model.advert_latency * (p.saturating_sub(1) * model.rounds.rounds(failure.kind, p)) as f64;
    if failure.kind == FailureKind::Border {
        // the others recompute in parallel after the advertisement lands
        compute += (0..p)
            .filter(|&k| k != origin)
            .map(|k| model.compute_time(partitioning.switch_count(k)))
            .fold(0.0, f64::max);
    }
    Ok(ConvergenceSample {
        partition_count: p,
        failure: *failure,
        total_time_s: compute + comm,
        compute_time_s: compute,
        comm_time_s: comm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    #[serde(rename = "P")]
    pub partition_count: usize,
    pub mean: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub aggregates: Vec<SweepAggregate>,
    pub samples: Vec<ConvergenceSample>,
}

/// Flat row of the raw sample CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    #[serde(rename = "P")]
    pub partition_count: usize,
    pub failure_kind: FailureKind,
    pub total_time_s: f64,
    pub compute_time_s: f64,
    pub comm_time_s: f64,
}

impl From<&ConvergenceSample> for SampleRow {
    fn from(s: &ConvergenceSample) -> Self {
        Self {
            partition_count: s.partition_count,
            failure_kind: s.failure.kind,
            total_time_s: s.total_time_s,
            compute_time_s: s.compute_time_s,
            comm_time_s: s.comm_time_s,
        }
    }
}

/// Nearest-rank quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn count_seed(seed: u64, p: usize) -> u64 {
    seed ^ (p as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Samples `failures_per_count` independent single-link failures for each
/// partition count. Each count draws from its own seed-derived stream, so the
/// result is identical however the counts are scheduled across threads.
pub fn sweep_partitions(
    topology: &FatTreeTopology,
    partition_counts: &[usize],
    failures_per_count: usize,
    model: &ConvergenceModel,
    seed: u64,
) -> Result<SweepResult> {
    model.validate()?;
    let partitionings = partition_counts
        .iter()
        .map(|&p| PodPartitioning::new(topology, p))
        .collect::<Result<Vec<_>, _>>()?;
    let per_count: Vec<Vec<ConvergenceSample>> = partitionings
        .par_iter()
        .map(|part| {
            let mut rng = ChaCha8Rng::seed_from_u64(count_seed(seed, part.partition_count));
            (0..failures_per_count)
                .map(|i| {
                    let failure = topology.sample_link_failure(&mut rng, i as f64)?;
                    measure_convergence(topology, part, &failure, model)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = per_count
        .iter()
        .zip(partition_counts)
        .map(|(samples, &p)| {
            let totals: Vec<f64> = samples.iter().map(|s| s.total_time_s).collect();
            SweepAggregate {
                partition_count: p,
                mean: totals.iter().sum::<f64>() / totals.len().max(1) as f64,
                p95: quantile(&totals, 0.95),
            }
        })
        .collect();
    Ok(SweepResult {
        aggregates,
        samples: per_count.into_iter().flatten().collect(),
    })
}

/// Partition count with the lowest mean; the smaller count wins ties.
pub fn pick_partition_count(sweep: &[SweepAggregate]) -> Option<usize> {
    sweep
        .iter()
        .min_by(|a, b| a.mean.total_cmp(&b.mean).then(a.partition_count.cmp(&b.partition_count)))
        .map(|a| a.partition_count)
}

/// Expected convergence time at `p` partitions as `fixed + advert_latency * slope`,
/// averaging exactly over the topology's up links.
fn expected_terms(topology: &FatTreeTopology, p: usize, compute_coeff: f64, rounds: RoundsRule) -> Result<(f64, f64)> {
    let part = PodPartitioning::new(topology, p)?;
    let probe = ConvergenceModel {
        compute_coeff,
        advert_latency: 1.0,
        rounds,
    };
    let up: Vec<usize> = topology.up_links().collect();
    let (mut fixed, mut slope) = (0.0, 0.0);
    for &link in &up {
        let l = topology.links()[link];
        let failure = LinkFailureEvent {
            link,
            endpoints: (l.a, l.b),
            kind: topology.link_kind(link),
            time_s: 0.0,
        };
        let s = measure_convergence(topology, &part, &failure, &probe)?;
        fixed += s.compute_time_s;
        slope += s.comm_time_s;
    }
    let n = up.len().max(1) as f64;
    Ok((fixed / n, slope / n))
}

/// Chooses `advert_latency` so that the expected convergence time strictly
/// falls from the smallest count down to `target` and strictly rises after
/// it. The feasible latencies form an open interval; its geometric mean is
/// returned (half the upper bound when the interval starts at zero).
pub fn calibrate(
    topology: &FatTreeTopology,
    partition_counts: &[usize],
    target: usize,
    compute_coeff: f64,
    rounds: RoundsRule,
) -> Result<ConvergenceModel> {
    let mut counts = partition_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    if !counts.contains(&target) {
        return Err(ConvergenceError::TargetMissing(target));
    }
    let terms = counts
        .iter()
        .map(|&p| expected_terms(topology, p, compute_coeff, rounds))
        .collect::<Result<Vec<_>>>()?;
    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    for i in 0..counts.len() - 1 {
        let (f0, s0) = terms[i];
        let (f1, s1) = terms[i + 1];
        let (df, ds) = (f0 - f1, s1 - s0);
        // mean(p_i) - mean(p_{i+1}) = df - a * ds
        let falling = counts[i + 1] <= target;
        match (falling, ds > 0.0) {
            (true, true) => upper = upper.min(df / ds),
            (false, true) => lower = lower.max(df / ds),
            (true, false) if df <= 0.0 => upper = 0.0,
            (false, false) if df >= 0.0 => upper = 0.0,
            _ => {}
        }
    }
    if !(lower < upper) || upper <= 0.0 {
        return Err(ConvergenceError::Uncalibratable { target, lower, upper });
    }
    let advert_latency = if lower > 0.0 && upper.is_finite() {
        (lower * upper).sqrt()
    } else if upper.is_finite() {
        upper / 2.0
    } else {
        lower * 2.0
    };
    let model = ConvergenceModel {
        compute_coeff,
        advert_latency,
        rounds,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_fat_tree, FatTreeConfig};

    fn reference() -> FatTreeTopology {
        build_fat_tree(&FatTreeConfig::REFERENCE).unwrap()
    }

    fn model() -> ConvergenceModel {
        ConvergenceModel {
            compute_coeff: 1e-3,
            advert_latency: 0.1,
            rounds: RoundsRule::Broadcast,
        }
    }

    fn failure(t: &FatTreeTopology, kind: FailureKind) -> LinkFailureEvent {
        let link = (0..t.links().len()).find(|&i| t.link_kind(i) == kind).unwrap();
        let l = t.links()[link];
        LinkFailureEvent {
            link,
            endpoints: (l.a, l.b),
            kind,
            time_s: 0.0,
        }
    }

    #[test]
    fn single_partition_has_no_communication() {
        let t = reference();
        let part = PodPartitioning::new(&t, 1).unwrap();
        for kind in [FailureKind::Border, FailureKind::Local] {
            let s = measure_convergence(&t, &part, &failure(&t, kind), &model()).unwrap();
            assert_eq!(s.comm_time_s, 0.0);
            assert_eq!(s.total_time_s, 1e-3 * 2560.0 * 2560f64.log2());
        }
    }

    #[test]
    fn border_failure_at_32_partitions() {
        let t = reference();
        let part = PodPartitioning::new(&t, 32).unwrap();
        let s = measure_convergence(&t, &part, &failure(&t, FailureKind::Border), &model()).unwrap();
        let one = 1e-3 * 80.0 * 80f64.log2();
        assert!((s.comm_time_s - 0.1 * 31.0).abs() < 1e-12);
        assert!((s.compute_time_s - 2.0 * one).abs() < 1e-12);
        let local = measure_convergence(&t, &part, &failure(&t, FailureKind::Local), &model()).unwrap();
        assert!((local.compute_time_s - one).abs() < 1e-12);
    }

    #[test]
    fn down_link_is_rejected() {
        let mut t = reference();
        let part = PodPartitioning::new(&t, 4).unwrap();
        let f = failure(&t, FailureKind::Local);
        t.fail_link(f.link).unwrap();
        assert_eq!(
            measure_convergence(&t, &part, &f, &model()),
            Err(ConvergenceError::FailureOnDownLink(f.link))
        );
    }

    #[test]
    fn sweep_passthrough_and_determinism() {
        let t = reference();
        let r = sweep_partitions(&t, &[1], 1, &model(), 5).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.aggregates[0].mean, r.samples[0].total_time_s);
        assert_eq!(r.aggregates[0].p95, r.samples[0].total_time_s);
        let a = sweep_partitions(&t, &[1, 4, 32], 20, &model(), 9).unwrap();
        let b = sweep_partitions(&t, &[1, 4, 32], 20, &model(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_rejects_bad_counts() {
        let t = reference();
        assert!(matches!(
            sweep_partitions(&t, &[1, 3], 1, &model(), 0),
            Err(ConvergenceError::Topology(TopologyError::InvalidPartitionCount { count: 3, .. }))
        ));
    }

    fn agg(points: &[(usize, f64)]) -> Vec<SweepAggregate> {
        points
            .iter()
            .map(|&(p, mean)| SweepAggregate {
                partition_count: p,
                mean,
                p95: mean,
            })
            .collect()
    }

    #[test]
    fn pick_rules() {
        assert_eq!(pick_partition_count(&agg(&[(1, 9.0), (4, 3.0), (8, 2.0), (16, 4.0)])), Some(8));
        assert_eq!(pick_partition_count(&agg(&[(1, 9.0), (4, 3.0), (8, 2.0)])), Some(8));
        assert_eq!(pick_partition_count(&agg(&[(1, 1.0), (4, 1.0), (8, 1.0)])), Some(1));
        assert_eq!(pick_partition_count(&[]), None);
    }

    #[test]
    fn rounds_rule() {
        assert_eq!(RoundsRule::Broadcast.rounds(FailureKind::Border, 1), 0);
        assert_eq!(RoundsRule::Broadcast.rounds(FailureKind::Border, 8), 1);
        assert_eq!(RoundsRule::BorderTwice.rounds(FailureKind::Border, 8), 2);
        assert_eq!(RoundsRule::BorderTwice.rounds(FailureKind::Local, 8), 1);
    }

    #[test]
    fn calibration_interval_on_reference() {
        let t = reference();
        let coeff = ConvergenceModel::coeff_from_cpu(&t, 4, 0.25, 10.0).unwrap();
        // 640 switches per partition at P=4
        assert!((coeff * 640.0 * 640f64.log2() - 2.5).abs() < 1e-12);
        let m = calibrate(&t, &[1, 2, 4, 8, 16, 32], 8, coeff, RoundsRule::Broadcast).unwrap();
        // closed-form bounds from the expected costs with a one third border share
        let c = |p: usize| m.compute_time(2560 / p);
        let e = |p: usize| if p == 1 { c(1) } else { c(p) * 4.0 / 3.0 };
        let upper = (e(4) - e(8)) / 4.0;
        let lower = (e(8) - e(16)) / 8.0;
        assert!((m.advert_latency - (lower * upper).sqrt()).abs() < 1e-9);
        assert!(calibrate(&t, &[1, 2], 8, coeff, RoundsRule::Broadcast).is_err());
    }
}
