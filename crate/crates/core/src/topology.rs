//! Three-layer fat-tree switch topologies, pod-grouped network partitions,
//! unit-cost shortest paths, and random link failures.
//!
//! Switch ids are dense: core switches first, then for each pod its
//! aggregation switches followed by its ToR switches.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("fat-tree parameters must be positive")]
    ZeroParameter,
    #[error("core_count {core_count} is not divisible by aggs_per_pod {aggs_per_pod}")]
    Indivisible { core_count: usize, aggs_per_pod: usize },
    #[error("partition count {count} does not divide the {pods} pods; valid counts: {valid:?}")]
    InvalidPartitionCount { count: usize, pods: usize, valid: Vec<usize> },
    #[error("link {0} does not exist")]
    UnknownLink(usize),
    #[error("link {0} is already down")]
    LinkDown(usize),
    #[error("no link is up")]
    NoUpLinks,
    #[error("custom topology: {0}")]
    Custom(String),
}

pub type Result<T, E = TopologyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Core,
    Aggregation,
    Tor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FatTreeConfig {
    pub pods: usize,
    pub tors_per_pod: usize,
    pub aggs_per_pod: usize,
    pub core_count: usize,
}

impl FatTreeConfig {
    /// 512 core switches and 32 pods of 32 aggregation plus 32 ToR switches:
    /// 2560 switches in total.
    pub const REFERENCE: FatTreeConfig = FatTreeConfig {
        pods: 32,
        tors_per_pod: 32,
        aggs_per_pod: 32,
        core_count: 512,
    };
}

impl Default for FatTreeConfig {
    fn default() -> Self {
        Self::REFERENCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub up: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// A link touching a core switch.
    Border,
    /// A ToR to aggregation link inside a pod.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkFailureEvent {
    pub link: usize,
    pub endpoints: (usize, usize),
    pub kind: FailureKind,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FatTreeTopology {
    pods: usize,
    layers: Vec<Layer>,
    pod_of: Vec<Option<usize>>,
    links: Vec<Link>,
    adj: Vec<Vec<(usize, usize)>>,
}

pub fn build_fat_tree(config: &FatTreeConfig) -> Result<FatTreeTopology> {
    let FatTreeConfig {
        pods,
        tors_per_pod,
        aggs_per_pod,
        core_count,
    } = *config;
    if pods == 0 || tors_per_pod == 0 || aggs_per_pod == 0 || core_count == 0 {
        return Err(TopologyError::ZeroParameter);
    }
    if core_count % aggs_per_pod != 0 {
        return Err(TopologyError::Indivisible {
            core_count,
            aggs_per_pod,
        });
    }
    let stripe = core_count / aggs_per_pod;
    let mut layers = vec![Layer::Core; core_count];
    let mut pod_of = vec![None; core_count];
    let mut links = Vec::new();
    for pod in 0..pods {
        let agg_base = layers.len();
        layers.extend(std::iter::repeat_n(Layer::Aggregation, aggs_per_pod));
        layers.extend(std::iter::repeat_n(Layer::Tor, tors_per_pod));
        pod_of.extend(std::iter::repeat_n(Some(pod), aggs_per_pod + tors_per_pod));
        let tor_base = agg_base + aggs_per_pod;
        for t in 0..tors_per_pod {
            for j in 0..aggs_per_pod {
                links.push((tor_base + t, agg_base + j));
            }
        }
        for j in 0..aggs_per_pod {
            for c in j * stripe..(j + 1) * stripe {
                links.push((agg_base + j, c));
            }
        }
    }
    FatTreeTopology::assemble(pods, layers, pod_of, links)
}

impl FatTreeTopology {
    /// Arbitrary switch graph for experiments outside the fat-tree family.
    /// `switches` gives each switch's layer and pod (core switches have none).
    pub fn custom(pods: usize, switches: Vec<(Layer, Option<usize>)>, links: Vec<(usize, usize)>) -> Result<Self> {
        for (id, (layer, pod)) in switches.iter().enumerate() {
            match (layer, pod) {
                (Layer::Core, None) => {}
                (Layer::Core, Some(_)) => return Err(TopologyError::Custom(format!("core switch {id} has a pod"))),
                (_, Some(p)) if *p < pods => {}
                _ => return Err(TopologyError::Custom(format!("switch {id} needs a pod below {pods}"))),
            }
        }
        let (layers, pod_of) = switches.into_iter().unzip();
        FatTreeTopology::assemble(pods, layers, pod_of, links)
    }

    fn assemble(pods: usize, layers: Vec<Layer>, pod_of: Vec<Option<usize>>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let n = layers.len();
        let mut adj = vec![Vec::new(); n];
        let mut links = Vec::with_capacity(pairs.len());
        for (id, &(a, b)) in pairs.iter().enumerate() {
            if a >= n || b >= n || a == b {
                return Err(TopologyError::Custom(format!("bad link ({a}, {b})")));
            }
            adj[a].push((b, id));
            adj[b].push((a, id));
            links.push(Link { a, b, up: true });
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self {
            pods,
            layers,
            pod_of,
            links,
            adj,
        })
    }

    pub fn switch_count(&self) -> usize {
        self.layers.len()
    }

    pub fn pods(&self) -> usize {
        self.pods
    }

    pub fn layer(&self, switch: usize) -> Layer {
        self.layers[switch]
    }

    pub fn pod_of(&self, switch: usize) -> Option<usize> {
        self.pod_of[switch]
    }

    pub fn count_layer(&self, layer: Layer) -> usize {
        self.layers.iter().filter(|&&l| l == layer).count()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_kind(&self, link: usize) -> FailureKind {
        let l = self.links[link];
        if self.layers[l.a] == Layer::Core || self.layers[l.b] == Layer::Core {
            FailureKind::Border
        } else {
            FailureKind::Local
        }
    }

    pub fn link_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adj.get(a)?.iter().find(|(x, _)| *x == b).map(|&(_, id)| id)
    }

    pub fn is_up(&self, link: usize) -> bool {
        self.links[link].up
    }

    pub fn up_links(&self) -> impl Iterator<Item = usize> + '_ {
        self.links.iter().enumerate().filter(|(_, l)| l.up).map(|(i, _)| i)
    }

    pub fn fail_link(&mut self, link: usize) -> Result<()> {
        let l = self.links.get_mut(link).ok_or(TopologyError::UnknownLink(link))?;
        if !l.up {
            return Err(TopologyError::LinkDown(link));
        }
        l.up = false;
        Ok(())
    }

    pub fn restore_link(&mut self, link: usize) -> Result<()> {
        self.links.get_mut(link).ok_or(TopologyError::UnknownLink(link))?.up = true;
        Ok(())
    }

    /// Neighbors over up links, ascending by switch id.
    pub fn up_neighbors(&self, switch: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[switch]
            .iter()
            .filter(|(_, id)| self.links[*id].up)
            .map(|&(n, _)| n)
    }

    /// Dijkstra over up links with unit costs from each source.
    pub fn shortest_paths(&self, sources: &[usize]) -> Vec<ShortestPaths> {
        sources.iter().map(|&s| self.dijkstra(s)).collect()
    }

    fn dijkstra(&self, source: usize) -> ShortestPaths {
        let n = self.switch_count();
        let mut dist = vec![None; n];
        let mut parent = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = Some(0u32);
        heap.push(Reverse((0u32, source)));
        while let Some(Reverse((d, v))) = heap.pop() {
            if dist[v] != Some(d) {
                continue;
            }
            for u in self.up_neighbors(v) {
                let nd = d + 1;
                match dist[u] {
                    Some(old) if old < nd => {}
                    // equal distance: keep the lowest-id parent
                    Some(old) if old == nd => {
                        if parent[u].is_some_and(|p| v < p) {
                            parent[u] = Some(v);
                        }
                    }
                    _ => {
                        dist[u] = Some(nd);
                        parent[u] = Some(v);
                        heap.push(Reverse((nd, u)));
                    }
                }
            }
        }
        ShortestPaths { source, dist, parent }
    }

    /// Uniform choice among up links.
    pub fn sample_link_failure<R: Rng>(&self, rng: &mut R, time_s: f64) -> Result<LinkFailureEvent> {
        let up: Vec<usize> = self.up_links().collect();
        if up.is_empty() {
            return Err(TopologyError::NoUpLinks);
        }
        let link = up[rng.random_range(0..up.len())];
        let l = self.links[link];
        Ok(LinkFailureEvent {
            link,
            endpoints: (l.a, l.b),
            kind: self.link_kind(link),
            time_s,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPaths {
    pub source: usize,
    /// Hop count, `None` when unreachable.
    pub dist: Vec<Option<u32>>,
    pub parent: Vec<Option<usize>>,
}

/// Contiguous groups of pods, one group per network partition. Core switches
/// are split into contiguous equal blocks so every partition owns the same
/// number of switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodPartitioning {
    pub partition_count: usize,
    pub pod_to_partition: Vec<usize>,
    switch_partition: Vec<usize>,
    sizes: Vec<usize>,
}

/// Partition counts that evenly divide `pods`.
pub fn valid_partition_counts(pods: usize) -> Vec<usize> {
    (1..=pods).filter(|p| pods.is_multiple_of(*p)).collect()
}

impl PodPartitioning {
    pub fn new(topology: &FatTreeTopology, partition_count: usize) -> Result<Self> {
        let pods = topology.pods();
        if partition_count == 0 || !pods.is_multiple_of(partition_count) {
            return Err(TopologyError::InvalidPartitionCount {
                count: partition_count,
                pods,
                valid: valid_partition_counts(pods),
            });
        }
        let per = pods / partition_count;
        let pod_to_partition: Vec<usize> = (0..pods).map(|p| p / per).collect();
        let cores = topology.count_layer(Layer::Core);
        let mut core_seen = 0;
        let mut sizes = vec![0; partition_count];
        let switch_partition = (0..topology.switch_count())
            .map(|s| {
                let p = match topology.pod_of(s) {
                    Some(pod) => pod_to_partition[pod],
                    None => {
                        core_seen += 1;
                        (core_seen - 1) * partition_count / cores
                    }
                };
                sizes[p] += 1;
                p
            })
            .collect();
        Ok(Self {
            partition_count,
            pod_to_partition,
            switch_partition,
            sizes,
        })
    }

    pub fn partition_of(&self, switch: usize) -> usize {
        self.switch_partition[switch]
    }

    pub fn switch_count(&self, partition: usize) -> usize {
        self.sizes[partition]
    }

    /// Partition a failed link belongs to: that of its non-core endpoint.
    pub fn origin_of(&self, topology: &FatTreeTopology, failure: &LinkFailureEvent) -> usize {
        let (a, b) = failure.endpoints;
        let s = if topology.layer(a) == Layer::Core { b } else { a };
        self.partition_of(s)
    }
}
