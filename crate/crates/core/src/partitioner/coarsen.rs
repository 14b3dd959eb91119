use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{WeightedGraph, Weights, NCON};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarsenOptions {
    /// Stop once the graph has at most this many vertices.
    pub min_vertices: usize,
    /// Stop when a level removes less than this fraction of vertices.
    pub min_reduction: f64,
    /// Never merge two vertices whose summed weight exceeds this.
    pub max_vertex_weight: Option<Weights>,
}

/// One coarsening step: the coarser graph and, for every vertex of the
/// previous (finer) graph, the coarse vertex it was merged into.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseLevel {
    pub graph: WeightedGraph,
    pub fine_to_coarse: Vec<usize>,
}

/// Heavy-edge matching coarsening. Vertices are visited in a seed-shuffled
/// order; each unmatched vertex matches its unmatched neighbor with the
/// heaviest connecting edge (lowest index on ties).
pub fn coarsen(graph: &WeightedGraph, opts: &CoarsenOptions, seed: u64) -> Vec<CoarseLevel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<CoarseLevel> = Vec::new();
    loop {
        let current = levels.last().map_or(graph, |l| &l.graph);
        let n = current.vertex_count();
        if n <= opts.min_vertices.max(1) {
            break;
        }
        let level = match_once(current, opts, &mut rng);
        let reduced = n - level.graph.vertex_count();
        if reduced == 0 || (reduced as f64) < opts.min_reduction * n as f64 {
            break;
        }
        levels.push(level);
    }
    levels
}

fn fits(a: &Weights, b: &Weights, max: &Option<Weights>) -> bool {
    match max {
        None => true,
        Some(m) => (0..NCON).all(|c| a[c] + b[c] <= m[c]),
    }
}

fn match_once(g: &WeightedGraph, opts: &CoarsenOptions, rng: &mut ChaCha8Rng) -> CoarseLevel {
    let n = g.vertex_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut mate = vec![usize::MAX; n];
    for &v in &order {
        if mate[v] != usize::MAX {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for &(u, w) in g.neighbors(v) {
            if mate[u] != usize::MAX || !fits(&g.weights()[v], &g.weights()[u], &opts.max_vertex_weight) {
                continue;
            }
            // neighbors are sorted by index, so strict > keeps the lowest index on ties
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((u, w));
            }
        }
        match best {
            Some((u, _)) => {
                mate[v] = u;
                mate[u] = v;
            }
            None => mate[v] = v,
        }
    }

    let mut fine_to_coarse = vec![usize::MAX; n];
    let mut weights: Vec<Weights> = Vec::new();
    for v in 0..n {
        if fine_to_coarse[v] != usize::MAX {
            continue;
        }
        let id = weights.len();
        let mut w = g.weights()[v];
        fine_to_coarse[v] = id;
        let m = mate[v];
        if m != v {
            fine_to_coarse[m] = id;
            for c in 0..NCON {
                w[c] += g.weights()[m][c];
            }
        }
        weights.push(w);
    }

    let mut merged: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for v in 0..n {
        for &(u, w) in g.neighbors(v) {
            let (a, b) = (fine_to_coarse[v], fine_to_coarse[u]);
            if v < u && a != b {
                *merged.entry((a.min(b), a.max(b))).or_default() += w;
            }
        }
    }
    let edges = merged.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    CoarseLevel {
        graph: WeightedGraph::new(weights, edges).expect("coarse graph of a valid graph is valid"),
        fine_to_coarse,
    }
}

/// Carries a coarse assignment down to the finer graph.
pub fn project(coarse_assignment: &[usize], fine_to_coarse: &[usize]) -> Vec<usize> {
    fine_to_coarse.iter().map(|&c| coarse_assignment[c]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitioner::cut_weight;

    fn opts(min_vertices: usize) -> CoarsenOptions {
        CoarsenOptions {
            min_vertices,
            min_reduction: 0.1,
            max_vertex_weight: None,
        }
    }

    #[test]
    fn two_vertices_merge() {
        let g = WeightedGraph::new(vec![[0.2, 3.0], [0.3, 4.0]], vec![(0, 1, 1.0)]).unwrap();
        let levels = coarsen(&g, &opts(1), 0);
        assert_eq!(levels.len(), 1);
        let coarse = &levels[0].graph;
        assert_eq!(coarse.vertex_count(), 1);
        assert_eq!(coarse.weights()[0], [0.5, 7.0]);
        assert!(coarse.edges().is_empty());
    }

    #[test]
    fn edgeless_graph_stops_immediately() {
        let g = WeightedGraph::new(vec![[1.0, 1.0]; 6], vec![]).unwrap();
        assert!(coarsen(&g, &opts(1), 0).is_empty());
    }

    #[test]
    fn star_matches_one_leaf_per_level() {
        let g = WeightedGraph::new(
            vec![[1.0, 0.0]; 5],
            (1..5).map(|leaf| (0, leaf, 1.0)).collect(),
        )
        .unwrap();
        for seed in 0..5 {
            let levels = coarsen(&g, &opts(1), seed);
            let sizes: Vec<usize> = levels.iter().map(|l| l.graph.vertex_count()).collect();
            assert_eq!(sizes, vec![4, 3, 2, 1], "seed {seed}");
            // the merged center carries one more leaf each level
            for (depth, level) in levels.iter().enumerate() {
                let heaviest = level
                    .graph
                    .weights()
                    .iter()
                    .map(|w| w[0])
                    .fold(0.0, f64::max);
                assert_eq!(heaviest, (depth + 2) as f64);
            }
        }
    }

    #[test]
    fn parallel_edges_are_summed() {
        // 0-1 match (heaviest), then 0-2 and 1-2 collapse into one coarse edge.
        let g = WeightedGraph::new(
            vec![[1.0, 0.0]; 4],
            vec![(0, 1, 10.0), (0, 2, 1.0), (1, 2, 2.0), (2, 3, 5.0)],
        )
        .unwrap();
        let level = coarsen(&g, &opts(1), 0).remove(0);
        assert_eq!(level.graph.vertex_count(), 2);
        assert_eq!(level.graph.edges(), &[(0, 1, 3.0)]);
    }

    #[test]
    fn projection_preserves_cut() {
        let g = WeightedGraph::new(
            vec![[1.0, 0.0]; 6],
            vec![(0, 1, 4.0), (1, 2, 1.0), (2, 3, 4.0), (3, 4, 1.0), (4, 5, 4.0), (5, 0, 1.0)],
        )
        .unwrap();
        let level = coarsen(&g, &opts(1), 9).remove(0);
        let coarse_n = level.graph.vertex_count();
        for mask in 0..(1usize << coarse_n) {
            let coarse: Vec<usize> = (0..coarse_n).map(|i| (mask >> i) & 1).collect();
            let fine = project(&coarse, &level.fine_to_coarse);
            assert_eq!(cut_weight(&level.graph, &coarse), cut_weight(&g, &fine));
        }
    }

    #[test]
    fn respects_vertex_weight_cap() {
        let g = WeightedGraph::new(vec![[0.6, 0.0]; 2], vec![(0, 1, 1.0)]).unwrap();
        let mut o = opts(1);
        o.max_vertex_weight = Some([1.0, 1.0]);
        assert!(coarsen(&g, &o, 0).is_empty());
    }
}
