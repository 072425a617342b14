//! Betweenness, closeness and weighted PageRank on city networks, and their
//! Pearson correlation with GDP.
//!
//! Shortest paths use the edge weight as length on distance graphs and the
//! reciprocal weight on flow graphs, so heavier flows mean closer cities.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CityId, DistanceMatrix, FlowMatrix};
use crate::stats::pearson;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    DistanceKm,
    FlowVolume,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    nodes: Vec<CityId>,
    /// `weights[u][v]` for an edge `u -> v`.
    weights: Vec<Vec<Option<f64>>>,
    pub weight_kind: WeightKind,
    pub directed: bool,
}

impl WeightedGraph {
    pub fn new(nodes: Vec<CityId>, weight_kind: WeightKind, directed: bool) -> Self {
        let n = nodes.len();
        WeightedGraph {
            nodes,
            weights: vec![vec![None; n]; n],
            weight_kind,
            directed,
        }
    }

    /// Adds `u -> v` (and `v -> u` when undirected). Self-loops and non-positive weights are ignored.
    pub fn add_edge(&mut self, u: usize, v: usize, weight: f64) {
        if u == v || !(weight > 0.0) || !weight.is_finite() {
            return;
        }
        self.weights[u][v] = Some(weight);
        if !self.directed {
            self.weights[v][u] = Some(weight);
        }
    }

    /// Undirected graph with an edge for every known city pair.
    pub fn from_distances(cities: &[CityId], distances: &DistanceMatrix) -> Self {
        Self::from_distances_with(cities, distances, false)
    }

    /// Distance graph; when `directed`, each ordered pair is a separate arc
    /// and betweenness counts ordered pairs.
    pub fn from_distances_with(cities: &[CityId], distances: &DistanceMatrix, directed: bool) -> Self {
        let mut g = WeightedGraph::new(cities.to_vec(), WeightKind::DistanceKm, directed);
        for i in 0..cities.len() {
            for j in 0..cities.len() {
                if (directed || i < j) && i != j {
                    if let Some(d) = distances.get(&cities[i], &cities[j]) {
                        g.add_edge(i, j, d);
                    }
                }
            }
        }
        g
    }

    /// Directed graph with an edge for every positive intercity flow.
    pub fn from_flows(cities: &[CityId], flows: &FlowMatrix) -> Self {
        let mut g = WeightedGraph::new(cities.to_vec(), WeightKind::FlowVolume, true);
        let m = flows.to_dense(cities);
        for i in 0..cities.len() {
            for j in 0..cities.len() {
                g.add_edge(i, j, m[(i, j)]);
            }
        }
        g
    }

    pub fn nodes(&self) -> &[CityId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.weights[u][v]
    }

    /// Path length of edge `u -> v` under the weight-kind convention.
    pub fn length(&self, u: usize, v: usize) -> Option<f64> {
        self.weights[u][v].map(|w| match self.weight_kind {
            WeightKind::DistanceKm => w,
            WeightKind::FlowVolume => 1.0 / w,
        })
    }

    fn scores(&self, values: Vec<f64>) -> IndexMap<String, f64> {
        self.nodes.iter().map(|c| c.to_string()).zip(values).collect()
    }
}

fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

struct ShortestPaths {
    dist: Vec<f64>,
    sigma: Vec<f64>,
    preds: Vec<Vec<usize>>,
    /// Settled vertices in non-decreasing distance order.
    order: Vec<usize>,
}

/// Dijkstra from `s`, counting every equal-length shortest path.
fn single_source(g: &WeightedGraph, s: usize) -> ShortestPaths {
    let n = g.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0; n];
    let mut preds = vec![Vec::new(); n];
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    dist[s] = 0.0;
    sigma[s] = 1.0;
    loop {
        let next = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let Some(u) = next else { break };
        done[u] = true;
        order.push(u);
        for v in 0..n {
            let Some(len) = g.length(u, v) else { continue };
            if done[v] {
                continue;
            }
            let cand = dist[u] + len;
            if dist[v].is_finite() && same_length(cand, dist[v]) {
                sigma[v] += sigma[u];
                preds[v].push(u);
            } else if cand < dist[v] {
                dist[v] = cand;
                sigma[v] = sigma[u];
                preds[v] = vec![u];
            }
        }
    }
    ShortestPaths {
        dist,
        sigma,
        preds,
        order,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Betweenness {
    pub scores: IndexMap<String, f64>,
    /// Ordered (or unordered, for undirected graphs) pairs with no connecting path.
    pub unreachable_pairs: usize,
}

/// Raw shortest-path betweenness `sum_{j != k != i} n_jk(i) / n_jk`.
///
/// Directed graphs count ordered pairs; undirected graphs count each pair once.
pub fn betweenness(g: &WeightedGraph) -> Betweenness {
    let n = g.len();
    let mut cb = vec![0.0; n];
    let mut unreachable = 0;
    for s in 0..n {
        let sp = single_source(g, s);
        unreachable += n - sp.order.len();
        let mut delta = vec![0.0; n];
        for &w in sp.order.iter().rev() {
            for &v in &sp.preds[w] {
                delta[v] += sp.sigma[v] / sp.sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    if !g.directed {
        cb.iter_mut().for_each(|v| *v /= 2.0);
        unreachable /= 2;
    }
    Betweenness {
        scores: g.scores(cb),
        unreachable_pairs: unreachable,
    }
}

/// All-pairs shortest-path lengths (row = source). Unreachable entries are infinite.
pub fn shortest_path_lengths(g: &WeightedGraph) -> Vec<Vec<f64>> {
    (0..g.len()).map(|s| single_source(g, s).dist).collect()
}

/// `Clos(i) = 1 / sum_j d_ij` using shortest-path lengths out of `i`.
pub fn closeness(g: &WeightedGraph) -> Result<IndexMap<String, f64>> {
    let n = g.len();
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let sp = single_source(g, s);
        let missing: Vec<String> = (0..n)
            .filter(|&v| !sp.dist[v].is_finite())
            .map(|v| g.nodes[v].to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnreachableNode {
                node: g.nodes[s].to_string(),
                unreachable: missing,
            });
        }
        let total: f64 = sp.dist.iter().sum();
        out.push(if total > 0.0 { 1.0 / total } else { 0.0 });
    }
    Ok(g.scores(out))
}

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOL: f64 = 1e-12;
pub const PAGERANK_MAX_ITER: usize = 100_000;

/// Weighted PageRank by power iteration. The walk leaves `j` along `j -> i`
/// with probability `w(j -> i) / sum_k w(j -> k)`; dangling nodes jump uniformly.
pub fn pagerank(g: &WeightedGraph, damping: f64, tol: f64) -> Result<IndexMap<String, f64>> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::InvalidArgument(format!("damping {damping} outside (0, 1)")));
    }
    let n = g.len();
    if n == 0 {
        return Ok(IndexMap::new());
    }
    let out_weight: Vec<f64> = (0..n)
        .map(|j| (0..n).filter_map(|i| g.weight(j, i)).sum())
        .collect();
    let uniform = 1.0 / n as f64;
    let mut pr = vec![uniform; n];
    for _ in 0..PAGERANK_MAX_ITER {
        let dangling: f64 = (0..n).filter(|&j| out_weight[j] == 0.0).map(|j| pr[j]).sum();
        let mut next = vec![(1.0 - damping) * uniform + damping * dangling * uniform; n];
        for j in 0..n {
            if out_weight[j] == 0.0 {
                continue;
            }
            let share = damping * pr[j] / out_weight[j];
            for (i, slot) in next.iter_mut().enumerate() {
                if let Some(w) = g.weight(j, i) {
                    *slot += share * w;
                }
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let diff: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if diff < tol {
            return Ok(g.scores(pr));
        }
    }
    Err(Error::Unconverged {
        what: "pagerank",
        iterations: PAGERANK_MAX_ITER,
        trace: pr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkMetrics {
    pub betweenness: IndexMap<String, f64>,
    pub closeness: IndexMap<String, f64>,
    pub pagerank: IndexMap<String, f64>,
    pub unreachable_pairs: usize,
}

/// All three measures on one graph, with default PageRank settings.
pub fn network_metrics(g: &WeightedGraph) -> Result<NetworkMetrics> {
    let b = betweenness(g);
    Ok(NetworkMetrics {
        betweenness: b.scores,
        closeness: closeness(g)?,
        pagerank: pagerank(g, PAGERANK_DAMPING, PAGERANK_TOL)?,
        unreachable_pairs: b.unreachable_pairs,
    })
}

/// Pearson r between GDP and each measure, matched by city id.
pub fn correlate_with_gdp(metrics: &NetworkMetrics, gdp: &BTreeMap<String, f64>) -> Result<IndexMap<String, f64>> {
    let mut out = IndexMap::new();
    for (name, series) in [
        ("betweenness", &metrics.betweenness),
        ("closeness", &metrics.closeness),
        ("pagerank", &metrics.pagerank),
    ] {
        out.insert(name.to_string(), correlate_series(name, series, gdp)?);
    }
    Ok(out)
}

/// Pearson r between one per-city series and GDP over the cities present in both.
pub fn correlate_series(name: &str, series: &IndexMap<String, f64>, gdp: &BTreeMap<String, f64>) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter_map(|(c, v)| gdp.get(c).map(|g| (*v, *g)))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} cities with GDP for `{name}`", xs.len())));
    }
    pearson(&xs, &ys).ok_or_else(|| {
        let constant = if crate::stats::population_sd(&ys) == 0.0 { "gdp" } else { name };
        Error::UndefinedCorrelation(constant.to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<CityId> {
        (0..n).map(|i| CityId::new(format!("c{i}")).unwrap()).collect()
    }

    fn path3() -> WeightedGraph {
        let mut g = WeightedGraph::new(ids(3), WeightKind::DistanceKm, false);
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g
    }

    #[test]
    fn path_betweenness_and_closeness() {
        let g = path3();
        let b = betweenness(&g);
        assert_eq!(b.scores.values().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        let c = closeness(&g).unwrap();
        assert!((c["c0"] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c["c1"] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn complete_equal_graph() {
        let n = 5;
        let mut g = WeightedGraph::new(ids(n), WeightKind::FlowVolume, true);
        for i in 0..n {
            for j in 0..n {
                g.add_edge(i, j, 3.0);
            }
        }
        assert!(betweenness(&g).scores.values().all(|v| *v == 0.0));
        let pr = pagerank(&g, 0.85, 1e-12).unwrap();
        for v in pr.values() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn star_closeness() {
        let n = 6;
        let mut g = WeightedGraph::new(ids(n), WeightKind::DistanceKm, false);
        for leaf in 1..n {
            g.add_edge(0, leaf, 1.0);
        }
        let c = closeness(&g).unwrap();
        assert!((c["c0"] - 1.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn two_node_pagerank() {
        let mut g = WeightedGraph::new(ids(2), WeightKind::FlowVolume, true);
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 0, 1.0);
        let pr = pagerank(&g, 0.85, 1e-12).unwrap();
        assert!((pr["c0"] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dangling_node_keeps_unit_mass() {
        let mut g = WeightedGraph::new(ids(3), WeightKind::FlowVolume, true);
        g.add_edge(0, 1, 2.0);
        g.add_edge(1, 2, 1.0);
        let pr = pagerank(&g, 0.85, 1e-12).unwrap();
        assert!((pr.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pr.values().all(|v| *v >= 0.15 / 3.0 - 1e-15));
    }

    #[test]
    fn disconnected_graph() {
        let mut g = WeightedGraph::new(ids(4), WeightKind::DistanceKm, false);
        g.add_edge(0, 1, 1.0);
        g.add_edge(2, 3, 1.0);
        assert_eq!(betweenness(&g).unreachable_pairs, 4);
        match closeness(&g) {
            Err(Error::UnreachableNode { node, unreachable }) => {
                assert_eq!(node, "c0");
                assert_eq!(unreachable, vec!["c2".to_string(), "c3".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flow_length_is_reciprocal() {
        // Strong flow through c1 makes c0 -> c1 -> c2 shorter than the weak direct edge.
        let mut g = WeightedGraph::new(ids(3), WeightKind::FlowVolume, true);
        g.add_edge(0, 1, 10.0);
        g.add_edge(1, 2, 10.0);
        g.add_edge(0, 2, 1.0);
        let b = betweenness(&g);
        assert_eq!(b.scores["c1"], 1.0);
    }

    #[test]
    fn gdp_correlation() {
        let metrics = NetworkMetrics {
            betweenness: [("a", 0.0), ("b", 1.0), ("c", 3.0)].iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            closeness: [("a", 0.5), ("b", 0.4), ("c", 0.2)].iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            pagerank: [("a", 0.2), ("b", 0.3), ("c", 0.5)].iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            unreachable_pairs: 0,
        };
        let gdp: BTreeMap<String, f64> = metrics.pagerank.clone().into_iter().collect();
        let r = correlate_with_gdp(&metrics, &gdp).unwrap();
        assert!((r["pagerank"] - 1.0).abs() < 1e-15);
        let gdp: BTreeMap<String, f64> = metrics.closeness.iter().map(|(k, v)| (k.clone(), 7.0 - v)).collect();
        let r = correlate_with_gdp(&metrics, &gdp).unwrap();
        assert!((r["closeness"] + 1.0).abs() < 1e-15);
        let flat: BTreeMap<String, f64> = gdp.keys().map(|k| (k.clone(), 1.0)).collect();
        assert!(matches!(correlate_with_gdp(&metrics, &flat), Err(Error::UndefinedCorrelation(n)) if n == "gdp"));
    }
}
