use super::{part_loads, BalanceSpec, WeightedGraph, Weights, NCON};

const GAIN_EPS: f64 = 1e-12;

/// Normalized amount by which `loads` exceed the limits.
fn violation(loads: &[Weights], spec: &BalanceSpec) -> f64 {
    let limit = spec.limit();
    loads
        .iter()
        .map(|l| {
            (0..NCON)
                .map(|c| (l[c] - limit[c]).max(0.0) / spec.capacity[c])
                .sum::<f64>()
        })
        .sum()
}

fn part_violation(load: &Weights, spec: &BalanceSpec) -> f64 {
    violation(std::slice::from_ref(load), spec)
}

fn shifted(load: &Weights, w: &Weights, sign: f64) -> Weights {
    let mut out = *load;
    for c in 0..NCON {
        out[c] += sign * w[c];
    }
    out
}

fn fits(load: &Weights, w: &Weights, spec: &BalanceSpec) -> bool {
    let limit = spec.limit();
    (0..NCON).all(|c| load[c] + w[c] <= limit[c])
}

/// Violation change caused by moving weight `w` from part `a` to part `b`.
fn violation_delta(loads: &[Weights], a: usize, b: usize, w: &Weights, spec: &BalanceSpec) -> f64 {
    let before = part_violation(&loads[a], spec) + part_violation(&loads[b], spec);
    let after = part_violation(&shifted(&loads[a], w, -1.0), spec)
        + part_violation(&shifted(&loads[b], w, 1.0), spec);
    after - before
}

fn connectivity(graph: &WeightedGraph, assignment: &[usize], v: usize, conn: &mut [f64]) {
    conn.iter_mut().for_each(|c| *c = 0.0);
    for &(u, w) in graph.neighbors(v) {
        conn[assignment[u]] += w;
    }
}

/// Boundary hill climbing. A boundary vertex moves to the neighboring part
/// with the largest cut reduction; when the assignment is feasible the move
/// must strictly reduce the cut and keep the target within capacity, when it
/// is infeasible the move must strictly reduce the violation without raising
/// the cut. Each pass visits each boundary vertex at most once; stops after
/// `max_passes` or a pass without moves. Never increases the cut weight.
pub fn refine(graph: &WeightedGraph, assignment: &mut [usize], spec: &BalanceSpec, max_passes: usize) {
    let n = graph.vertex_count();
    if n == 0 || spec.parts < 2 {
        return;
    }
    let mut loads = part_loads(graph, assignment, spec.parts);
    let mut conn = vec![0.0; spec.parts];
    for _ in 0..max_passes {
        let mut moved = false;
        for v in 0..n {
            let a = assignment[v];
            connectivity(graph, assignment, v, &mut conn);
            let internal = conn[a];
            let w = graph.weights()[v];
            let feasible = violation(&loads, spec) == 0.0;
            let mut best: Option<(usize, f64)> = None;
            for b in 0..spec.parts {
                if b == a || conn[b] <= 0.0 {
                    continue;
                }
                let gain = conn[b] - internal;
                let admissible = if feasible {
                    gain > GAIN_EPS && fits(&loads[b], &w, spec)
                } else {
                    gain >= 0.0 && violation_delta(&loads, a, b, &w, spec) < -GAIN_EPS
                };
                if admissible && best.is_none_or(|(_, g)| gain > g) {
                    best = Some((b, gain));
                }
            }
            if let Some((b, _)) = best {
                loads[a] = shifted(&loads[a], &w, -1.0);
                loads[b] = shifted(&loads[b], &w, 1.0);
                assignment[v] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Repairs capacity violations. Vertices of overloaded parts move to the part
/// that most reduces the violation (best cut gain on ties); when no single
/// move helps, one pairwise swap is tried. The cut may grow. Stops as soon as
/// the assignment is feasible.
pub fn rebalance(graph: &WeightedGraph, assignment: &mut [usize], spec: &BalanceSpec, max_passes: usize) {
    let n = graph.vertex_count();
    if n == 0 || spec.parts < 2 {
        return;
    }
    let mut loads = part_loads(graph, assignment, spec.parts);
    let mut conn = vec![0.0; spec.parts];
    for _ in 0..max_passes {
        if violation(&loads, spec) == 0.0 {
            return;
        }
        let mut moved = false;
        for v in 0..n {
            let a = assignment[v];
            if part_violation(&loads[a], spec) == 0.0 {
                continue;
            }
            connectivity(graph, assignment, v, &mut conn);
            let w = graph.weights()[v];
            let mut best: Option<(usize, f64, f64)> = None;
            for b in 0..spec.parts {
                if b == a {
                    continue;
                }
                let delta = violation_delta(&loads, a, b, &w, spec);
                if delta >= -GAIN_EPS {
                    continue;
                }
                let gain = conn[b] - conn[a];
                let better = match best {
                    None => true,
                    Some((_, bd, bg)) => delta < bd - GAIN_EPS || (delta <= bd + GAIN_EPS && gain > bg),
                };
                if better {
                    best = Some((b, delta, gain));
                }
            }
            if let Some((b, _, _)) = best {
                loads[a] = shifted(&loads[a], &w, -1.0);
                loads[b] = shifted(&loads[b], &w, 1.0);
                assignment[v] = b;
                moved = true;
            }
        }
        if !moved && !swap_once(graph, assignment, &mut loads, spec) {
            return;
        }
    }
}

/// Applies the vertex swap between an overloaded part and another part that
/// most reduces the violation (best cut gain on ties). Returns false when no
/// swap reduces it. Tight packings often need this: no single vertex fits
/// anywhere else, yet exchanging a large one for a small one does.
fn swap_once(graph: &WeightedGraph, assignment: &mut [usize], loads: &mut [Weights], spec: &BalanceSpec) -> bool {
    let n = graph.vertex_count();
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for u in 0..n {
        let a = assignment[u];
        if part_violation(&loads[a], spec) == 0.0 {
            continue;
        }
        let wu = graph.weights()[u];
        for v in 0..n {
            let b = assignment[v];
            if b == a {
                continue;
            }
            let wv = graph.weights()[v];
            let new_a = shifted(&shifted(&loads[a], &wu, -1.0), &wv, 1.0);
            let new_b = shifted(&shifted(&loads[b], &wv, -1.0), &wu, 1.0);
            let delta = part_violation(&new_a, spec) + part_violation(&new_b, spec)
                - part_violation(&loads[a], spec)
                - part_violation(&loads[b], spec);
            if delta >= -GAIN_EPS {
                continue;
            }
            let gain = swap_gain(graph, assignment, u, v);
            let better = match best {
                None => true,
                Some((_, _, bd, bg)) => delta < bd - GAIN_EPS || (delta <= bd + GAIN_EPS && gain > bg),
            };
            if better {
                best = Some((u, v, delta, gain));
            }
        }
    }
    let Some((u, v, _, _)) = best else {
        return false;
    };
    let (a, b) = (assignment[u], assignment[v]);
    let (wu, wv) = (graph.weights()[u], graph.weights()[v]);
    loads[a] = shifted(&shifted(&loads[a], &wu, -1.0), &wv, 1.0);
    loads[b] = shifted(&shifted(&loads[b], &wv, -1.0), &wu, 1.0);
    assignment.swap(u, v);
    true
}

/// Cut reduction from exchanging the parts of `u` and `v`.
fn swap_gain(graph: &WeightedGraph, assignment: &[usize], u: usize, v: usize) -> f64 {
    let (a, b) = (assignment[u], assignment[v]);
    let side = |x: usize, from: usize, to: usize| {
        graph
            .neighbors(x)
            .iter()
            .filter(|&&(y, _)| y != u && y != v)
            .map(|&(y, w)| {
                if assignment[y] == to {
                    w
                } else if assignment[y] == from {
                    -w
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    };
    // the u-v edge stays cut either way
    side(u, a, b) + side(v, b, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitioner::{cut_weight, loads_fit};
    use proptest::prelude::*;

    #[test]
    fn optimal_triangle_is_left_alone() {
        let g = WeightedGraph::new(
            vec![[0.3, 0.0]; 4],
            vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (2, 3, 0.1)],
        )
        .unwrap();
        let spec = BalanceSpec::hard(2, [1.0, 1.0]);
        let mut a = vec![0, 0, 0, 1];
        refine(&g, &mut a, &spec, 8);
        assert_eq!(a, vec![0, 0, 0, 1]);
    }

    #[test]
    fn misplaced_vertex_moves() {
        let g = WeightedGraph::new(
            vec![[0.2, 0.0]; 4],
            vec![(0, 1, 3.0), (1, 2, 1.0), (2, 3, 1.0)],
        )
        .unwrap();
        let spec = BalanceSpec::hard(2, [1.0, 1.0]);
        let mut a = vec![1, 0, 0, 0];
        refine(&g, &mut a, &spec, 8);
        assert_eq!(a[0], 0);
        assert_eq!(cut_weight(&g, &a), 0.0);
    }

    #[test]
    fn blocked_move_respects_capacity() {
        let g = WeightedGraph::new(vec![[0.6, 0.0], [0.6, 0.0]], vec![(0, 1, 5.0)]).unwrap();
        let spec = BalanceSpec::hard(2, [1.0, 1.0]);
        let mut a = vec![0, 1];
        refine(&g, &mut a, &spec, 8);
        assert_eq!(a, vec![0, 1]);
    }

    #[test]
    fn swap_repairs_tight_packing() {
        // only {0.30, 0.32, 0.38} + {0.43, 0.54} fits two parts of 1.0
        let cpus = [0.296, 0.426, 0.3215, 0.3813, 0.5442];
        let g = WeightedGraph::new(cpus.iter().map(|&c| [c, 0.0]).collect(), vec![]).unwrap();
        let spec = BalanceSpec::hard(2, [1.0, 1.0]);
        let mut a = vec![1, 1, 0, 1, 0];
        rebalance(&g, &mut a, &spec, 8);
        assert!(loads_fit(&part_loads(&g, &a, 2), &spec), "{a:?}");
    }

    #[test]
    fn swap_gain_matches_recomputed_cut() {
        let g = WeightedGraph::new(vec![[0.1, 0.0]; 4], vec![(0, 1, 2.0), (1, 2, 1.0), (2, 3, 4.0), (0, 3, 0.5)]).unwrap();
        let a = vec![0, 1, 0, 1];
        for (u, v) in [(0, 1), (0, 3), (2, 1), (2, 3)] {
            let mut b = a.clone();
            b.swap(u, v);
            let expected = cut_weight(&g, &a) - cut_weight(&g, &b);
            assert!((swap_gain(&g, &a, u, v) - expected).abs() < 1e-12, "{u} {v}");
        }
    }

    #[test]
    fn rebalance_repairs_overload() {
        let g = WeightedGraph::new(vec![[0.5, 0.0]; 4], vec![(0, 1, 1.0)]).unwrap();
        let spec = BalanceSpec::hard(2, [1.0, 1.0]);
        let mut a = vec![0, 0, 0, 0];
        rebalance(&g, &mut a, &spec, 8);
        assert!(loads_fit(&part_loads(&g, &a, 2), &spec));
    }

    fn instance() -> impl Strategy<Value = (WeightedGraph, BalanceSpec, Vec<usize>)> {
        (2usize..=12, 2usize..=4).prop_flat_map(|(n, parts)| {
            let weights = prop::collection::vec((0.0f64..0.5, 0.0f64..4.0), n);
            let edges = prop::collection::vec((0..n, 0..n, 0.0f64..10.0), 0..3 * n);
            let assignment = prop::collection::vec(0..parts, n);
            (weights, edges, assignment).prop_map(move |(w, e, a)| {
                let weights = w.into_iter().map(|(c, m)| [c, m]).collect();
                let edges = e.into_iter().filter(|(u, v, _)| u != v).collect();
                let g = WeightedGraph::new(weights, edges).unwrap();
                (g, BalanceSpec::hard(parts, [1.0, 8.0]), a)
            })
        })
    }

    proptest! {
        #[test]
        fn refine_never_increases_cut((g, spec, mut a) in instance()) {
            let before = cut_weight(&g, &a);
            let was_feasible = loads_fit(&part_loads(&g, &a, spec.parts), &spec);
            refine(&g, &mut a, &spec, 8);
            prop_assert!(cut_weight(&g, &a) <= before + 1e-9);
            if was_feasible {
                prop_assert!(loads_fit(&part_loads(&g, &a, spec.parts), &spec));
            }
        }

        #[test]
        fn rebalance_never_increases_violation((g, spec, mut a) in instance()) {
            let before = violation(&part_loads(&g, &a, spec.parts), &spec);
            rebalance(&g, &mut a, &spec, 8);
            prop_assert!(violation(&part_loads(&g, &a, spec.parts), &spec) <= before + 1e-9);
        }
    }
}
