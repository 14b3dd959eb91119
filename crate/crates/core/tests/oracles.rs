//! Cross-module checks of the heuristic and the evaluators against
//! independent recomputation.

use ctrlplace::commgraph::{random_graph, CommGraph, RandomGraphParams};
use ctrlplace::partitioner::{cut_weight, partition, BalanceSpec, WeightedGraph};
use ctrlplace::placement::{check_feasibility, objective, place, solve_exact, PlaceOptions, Placement, ServerSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, slices: usize, deadlines: f64) -> CommGraph {
    let params = RandomGraphParams {
        slices,
        deadline_probability: deadlines,
        cpu_max: 0.35,
        ..Default::default()
    };
    random_graph(&mut ChaCha8Rng::seed_from_u64(seed), &params)
}

fn direct_latency(g: &CommGraph, a: &[usize]) -> f64 {
    g.events()
        .iter()
        .map(|ev| {
            ev.weight
                * ev.edges
                    .iter()
                    .filter(|&&e| a[g.edges()[e].from] != a[g.edges()[e].to])
                    .map(|&e| g.edges()[e].cost_ms)
                    .sum::<f64>()
        })
        .sum()
}

#[test]
fn heuristic_tracks_the_exact_optimum() {
    let (mut compared, mut close) = (0, 0);
    for seed in 0..60 {
        let g = instance(seed, 3 + (seed as usize % 7), 0.0);
        let spec = ServerSpec::new(1 + (seed as usize % 3), 1.0, 64 << 30);
        let Some(opt) = solve_exact(&g, &spec, false, 14).unwrap().objective() else {
            continue;
        };
        let h = place(&g, &spec, &PlaceOptions { seed, ..Default::default() }).unwrap();
        assert!(h.report.is_feasible(false), "seed {seed}: heuristic infeasible where the oracle is not");
        compared += 1;
        if h.objective <= 1.2 * opt + 1e-9 {
            close += 1;
        }
    }
    assert!(compared >= 30);
    assert!(close * 10 >= compared * 9, "{close}/{compared}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_equals_partition_graph_cut(seed in any::<u64>(), n in 2usize..9, servers in 1usize..4) {
        let g = instance(seed, n, 0.0);
        let pg = g.to_partition_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let a: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..servers)).collect();
        let p = Placement::new(a.clone());
        let obj = objective(&g, &p).unwrap();
        prop_assert!((obj - direct_latency(&g, &a)).abs() <= 1e-9 * obj.max(1.0));
        prop_assert!((obj - cut_weight(&pg, &a)).abs() <= 1e-9 * obj.max(1.0));
    }

    #[test]
    fn exact_solution_is_feasible_and_not_beaten_by_heuristic(seed in any::<u64>(), n in 2usize..8, servers in 1usize..4) {
        let g = instance(seed, n, 0.5);
        let spec = ServerSpec::new(servers, 1.0, 64 << 30);
        if let Some(p) = solve_exact(&g, &spec, true, 14).unwrap().placement() {
            prop_assert!(check_feasibility(&g, &spec, p).unwrap().is_feasible(true));
            let opt = objective(&g, p).unwrap();
            let h = place(&g, &spec, &PlaceOptions::default()).unwrap();
            if h.report.is_feasible(true) {
                prop_assert!(h.objective + 1e-9 >= opt);
            }
        }
    }

    #[test]
    fn partitioner_output_is_valid(seed in any::<u64>(), n in 1usize..40, parts in 1usize..6) {
        let g = instance(seed, n, 0.0).to_partition_graph();
        let spec = BalanceSpec::hard(parts, [f64::from(u32::try_from(n).unwrap()), 1e12]);
        let r = partition(&g, &spec, seed).unwrap();
        prop_assert_eq!(r.assignment.len(), n);
        prop_assert!(r.assignment.iter().all(|&x| x < parts));
        prop_assert!(r.feasible);
        prop_assert!((r.cut_weight - cut_weight(&g, &r.assignment)).abs() < 1e-9);
    }
}

#[test]
fn edge_list_input_round_trips_through_the_partitioner() {
    let text = "# square with one heavy diagonal\nvertices 4\nw 0 0.5 1\nw 1 0.5 1\nw 2 0.5 1\nw 3 0.5 1\n0 1 1\n1 2 1\n2 3 1\n3 0 1\n0 2 9\n";
    let g = WeightedGraph::from_edge_list(text).unwrap();
    let r = partition(&g, &BalanceSpec::hard(2, [1.0, 1e9]), 0).unwrap();
    assert!(r.feasible);
    assert_eq!(r.assignment[0], r.assignment[2]);
    assert_eq!(r.cut_weight, 4.0);
}
