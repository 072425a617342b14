mod common;

use common::*;
use odflow::network::*;
use proptest::prelude::*;

#[test]
fn betweenness_and_closeness_match_exhaustive_oracles() {
    for seed in 0..10 {
        for directed in [false, true] {
            let g = random_graph(seed, directed);
            let b = betweenness(&g);
            assert_eq!(b.unreachable_pairs, 0);
            for (got, want) in b.scores.values().zip(betweenness_oracle(&g)) {
                assert!((got - want).abs() < 1e-10, "seed {seed}: {got} vs {want}");
            }
            let fw = floyd_warshall(&g);
            assert_eq!(shortest_path_lengths(&g), fw);
            let c = closeness(&g).unwrap();
            for (i, got) in c.values().enumerate() {
                let want = 1.0 / fw[i].iter().sum::<f64>();
                assert!((got - want).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn star_centre_carries_all_paths() {
    let mut g = WeightedGraph::new(ids(5), WeightKind::DistanceKm, false);
    for leaf in 1..5 {
        g.add_edge(0, leaf, 10.0);
    }
    let b = betweenness(&g);
    assert_eq!(b.scores["C00"], 6.0);
    assert!(b.scores.values().skip(1).all(|v| *v == 0.0));
    let c = closeness(&g).unwrap();
    assert_eq!(c["C00"], 1.0 / 40.0);
    assert_eq!(c["C01"], 1.0 / 70.0);
}

#[test]
fn disconnected_graph_fails_closeness_but_counts_unreachable_pairs() {
    let mut g = WeightedGraph::new(ids(4), WeightKind::DistanceKm, false);
    g.add_edge(0, 1, 1.0);
    g.add_edge(2, 3, 1.0);
    assert_eq!(betweenness(&g).unreachable_pairs, 4);
    assert!(matches!(closeness(&g), Err(odflow::Error::UnreachableNode { .. })));
}

#[test]
fn pagerank_matches_linear_solve() {
    for seed in 0..10 {
        let flows = flow_graph(seed, 8, false, false);
        let g = WeightedGraph::from_flows(&ids(8), &flows);
        let pr = pagerank(&g, PAGERANK_DAMPING, PAGERANK_TOL).unwrap();
        for (got, want) in pr.values().zip(pagerank_oracle(&g, PAGERANK_DAMPING)) {
            assert!((got - want).abs() < 1e-10);
        }
    }
}

#[test]
fn pagerank_is_uniform_on_symmetric_complete_graphs() {
    let n = 6;
    let mut g = WeightedGraph::new(ids(n), WeightKind::FlowVolume, true);
    for u in 0..n {
        for v in 0..n {
            g.add_edge(u, v, 42.0);
        }
    }
    for v in pagerank(&g, PAGERANK_DAMPING, PAGERANK_TOL).unwrap().values() {
        assert!((v - 1.0 / n as f64).abs() < 1e-12);
    }
}

#[test]
fn dangling_nodes_jump_uniformly() {
    let mut g = WeightedGraph::new(ids(3), WeightKind::FlowVolume, true);
    g.add_edge(0, 1, 1.0);
    g.add_edge(1, 2, 1.0);
    let pr = pagerank(&g, 0.85, 1e-14).unwrap();
    for (got, want) in pr.values().zip(pagerank_oracle(&g, 0.85)) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn correlation_with_gdp_uses_pearson() {
    let flows = flow_graph(4, 6, false, true);
    let g = WeightedGraph::from_flows(&ids(6), &flows);
    let metrics = network_metrics(&g).unwrap();
    let gdp: std::collections::BTreeMap<String, f64> =
        ids(6).iter().enumerate().map(|(i, c)| (c.to_string(), 100.0 + 7.0 * i as f64)).collect();
    let corr = correlate_with_gdp(&metrics, &gdp).unwrap();
    let x: Vec<f64> = metrics.pagerank.values().copied().collect();
    let y: Vec<f64> = gdp.values().copied().collect();
    let (mx, my) = (mean(&x), mean(&y));
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let want = cov / (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() * y.iter().map(|b| (b - my).powi(2)).sum::<f64>()).sqrt();
    assert!((corr["pagerank"] - want).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pagerank_sums_to_one_and_ignores_scale(seed in 0u64..10_000, n in 2usize..10, factor in 1e-3f64..1e4) {
        let flows = flow_graph(seed, n, false, false);
        let g = WeightedGraph::from_flows(&ids(n), &flows);
        let scaled = WeightedGraph::from_flows(&ids(n), &flows.scaled(factor));
        let a = pagerank(&g, PAGERANK_DAMPING, PAGERANK_TOL).unwrap();
        let b = pagerank(&scaled, PAGERANK_DAMPING, PAGERANK_TOL).unwrap();
        prop_assert!((a.values().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in a.values().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pagerank_is_uniform_for_any_symmetric_regular_weights(n in 2usize..12, w in 0.1f64..1e5) {
        let mut g = WeightedGraph::new(ids(n), WeightKind::FlowVolume, true);
        for u in 0..n {
            for v in 0..n {
                g.add_edge(u, v, w);
            }
        }
        for v in pagerank(&g, PAGERANK_DAMPING, PAGERANK_TOL).unwrap().values() {
            prop_assert!((v - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn betweenness_is_non_negative(seed in 0u64..10_000, directed: bool) {
        let g = random_graph(seed, directed);
        prop_assert!(betweenness(&g).scores.values().all(|v| *v >= 0.0));
    }
}
