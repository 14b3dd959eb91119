use rand::seq::SliceRandom;
use rand::Rng;

use super::{BalanceSpec, WeightedGraph, Weights, NCON};

/// Heaviness of a weight vector relative to the capacity: the largest
/// per-constraint fraction.
fn heaviness(w: &Weights, spec: &BalanceSpec) -> f64 {
    (0..NCON)
        .map(|c| w[c] / spec.capacity[c])
        .fold(0.0, f64::max)
}

/// Smallest remaining capacity fraction of a part after adding `w`.
fn slack_after(load: &Weights, w: &Weights, spec: &BalanceSpec) -> f64 {
    let limit = spec.limit();
    (0..NCON)
        .map(|c| (limit[c] - load[c] - w[c]) / spec.capacity[c])
        .fold(f64::INFINITY, f64::min)
}

fn add(load: &mut Weights, w: &Weights) {
    for c in 0..NCON {
        load[c] += w[c];
    }
}

/// Balance-only greedy: heaviest vertex first, onto the part that keeps the
/// most remaining capacity. Ignores edges; refinement handles the cut.
pub fn greedy_initial(graph: &WeightedGraph, spec: &BalanceSpec) -> Vec<usize> {
    let n = graph.vertex_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        heaviness(&graph.weights()[b], spec)
            .total_cmp(&heaviness(&graph.weights()[a], spec))
            .then(a.cmp(&b))
    });
    let mut loads = vec![[0.0; NCON]; spec.parts];
    let mut assignment = vec![0; n];
    for v in order {
        let w = graph.weights()[v];
        let mut best = 0;
        let mut best_slack = f64::NEG_INFINITY;
        for (p, load) in loads.iter().enumerate() {
            let s = slack_after(load, &w, spec);
            if s > best_slack {
                best = p;
                best_slack = s;
            }
        }
        assignment[v] = best;
        add(&mut loads[best], &w);
    }
    assignment
}

/// Randomized greedy graph growing. Each part in turn starts from a random
/// unassigned vertex and absorbs the unassigned vertex most strongly
/// connected to it, as long as that vertex fits. Vertices left over go to the
/// fitting part they are most connected to, or to the part with the most
/// remaining capacity when nothing fits.
pub fn grow_initial<R: Rng>(graph: &WeightedGraph, spec: &BalanceSpec, rng: &mut R) -> Vec<usize> {
    let n = graph.vertex_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut loads = vec![[0.0; NCON]; spec.parts];
    let mut assignment = vec![usize::MAX; n];
    let mut gain = vec![0.0; n];

    let mut next_seed = order.iter().copied();
    for p in 0..spec.parts {
        let Some(seed) = next_seed.find(|&v| assignment[v] == usize::MAX) else {
            break;
        };
        if slack_after(&loads[p], &graph.weights()[seed], spec) < 0.0 {
            continue;
        }
        gain.iter_mut().for_each(|g| *g = 0.0);
        let mut frontier: Vec<usize> = Vec::new();
        let mut current = seed;
        loop {
            assignment[current] = p;
            add(&mut loads[p], &graph.weights()[current]);
            for &(u, w) in graph.neighbors(current) {
                if assignment[u] == usize::MAX {
                    if gain[u] == 0.0 {
                        frontier.push(u);
                    }
                    gain[u] += w;
                }
            }
            frontier.retain(|&u| assignment[u] == usize::MAX);
            let best = frontier
                .iter()
                .copied()
                .filter(|&u| slack_after(&loads[p], &graph.weights()[u], spec) >= 0.0)
                .max_by(|&a, &b| gain[a].total_cmp(&gain[b]).then(b.cmp(&a)));
            match best {
                Some(u) => current = u,
                None => break,
            }
        }
    }

    let mut conn = vec![0.0; spec.parts];
    for v in order {
        if assignment[v] != usize::MAX {
            continue;
        }
        let w = graph.weights()[v];
        conn.iter_mut().for_each(|c| *c = 0.0);
        for &(u, ew) in graph.neighbors(v) {
            if assignment[u] != usize::MAX {
                conn[assignment[u]] += ew;
            }
        }
        let fitting = (0..spec.parts).filter(|&p| slack_after(&loads[p], &w, spec) >= 0.0);
        let choice = fitting
            .max_by(|&a, &b| {
                conn[a]
                    .total_cmp(&conn[b])
                    .then(slack_after(&loads[a], &w, spec).total_cmp(&slack_after(&loads[b], &w, spec)))
                    .then(b.cmp(&a))
            })
            .unwrap_or_else(|| {
                (0..spec.parts)
                    .max_by(|&a, &b| {
                        slack_after(&loads[a], &w, spec)
                            .total_cmp(&slack_after(&loads[b], &w, spec))
                            .then(b.cmp(&a))
                    })
                    .expect("parts >= 1")
            });
        assignment[v] = choice;
        add(&mut loads[choice], &w);
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_spreads_heavy_vertices() {
        let g = WeightedGraph::new(vec![[0.6, 0.0], [0.6, 0.0], [0.3, 0.0], [0.3, 0.0]], vec![]).unwrap();
        let a = greedy_initial(&g, &BalanceSpec::hard(2, [1.0, 1.0]));
        assert_ne!(a[0], a[1]);
        assert_ne!(a[2], a[3]);
    }

    #[test]
    fn grow_keeps_connected_vertices_together_when_they_fit() {
        let g = WeightedGraph::new(vec![[0.2, 0.0]; 4], vec![(0, 1, 5.0), (2, 3, 5.0)]).unwrap();
        let spec = BalanceSpec::hard(2, [1.0, 1.0]);
        for seed in 0..10 {
            let a = grow_initial(&g, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a[0], a[1], "seed {seed}");
            assert_eq!(a[2], a[3], "seed {seed}");
        }
    }
}
