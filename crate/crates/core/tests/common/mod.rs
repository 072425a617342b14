#![allow(dead_code)]

use nalgebra::DMatrix;
use odflow::gravity::{ConstraintKind, LinearProgram};
use odflow::network::{WeightKind, WeightedGraph};
use odflow::{FlowMatrix, VehicleClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Gaussian elimination with partial pivoting on a dense square system.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|k| solve(a.to_vec(), (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// `X'X` and `X'y` for rows prefixed with a column of ones.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let aug: Vec<Vec<f64>> = rows.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let p = aug[0].len();
    let xtx = (0..p)
        .map(|i| (0..p).map(|j| aug.iter().map(|r| r[i] * r[j]).sum()).collect())
        .collect();
    let xty = (0..p).map(|i| aug.iter().zip(y).map(|(r, v)| r[i] * v).sum()).collect();
    (xtx, xty)
}

/// OLS coefficients `[intercept, slopes..]` from the normal equations.
pub fn ols_oracle(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let (xtx, xty) = normal_equations(rows, y);
    solve(xtx, xty)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns eigenvalues (descending) and matching unit eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..p).map(|_| rng.random_range(-5.0..5.0)).collect()).collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn ids(n: usize) -> Vec<odflow::CityId> {
    (0..n).map(|i| odflow::CityId::from(format!("C{i:02}").as_str())).collect()
}

/// Cities scattered over a `side` km square, at least `min_gap` km apart,
/// with straight-line distances.
pub fn scattered(n: usize, side: f64, min_gap: f64, seed: u64) -> (Vec<odflow::CityId>, odflow::DistanceMatrix) {
    let mut r = rng(seed);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    while pts.len() < n {
        let p = (r.random_range(0.0..side), r.random_range(0.0..side));
        if pts.iter().all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= min_gap) {
            pts.push(p);
        }
    }
    let cities = ids(n);
    let mut d = odflow::DistanceMatrix::new();
    for i in 0..n {
        for j in i + 1..n {
            let km = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
            d.insert_symmetric(cities[i].clone(), cities[j].clone(), km);
        }
    }
    (cities, d)
}

/// Ten cities where every city sees the same five distances, log-spaced from
/// `lo` to `hi` km by ring offset.
pub fn circulant(n: usize, lo: f64, hi: f64) -> (Vec<odflow::CityId>, odflow::DistanceMatrix) {
    let cities = ids(n);
    let steps = (n / 2).max(2) as f64 - 1.0;
    let mut d = odflow::DistanceMatrix::new();
    for i in 0..n {
        for j in i + 1..n {
            let k = (j - i).min(n - (j - i)) as f64;
            let km = (lo.ln() + (hi.ln() - lo.ln()) * (k - 1.0) / steps).exp();
            d.insert_symmetric(cities[i].clone(), cities[j].clone(), km);
        }
    }
    (cities, d)
}

/// Minimum of `c.x` over `{x >= 0, A x (<=|>=|=) b}` by enumerating every
/// basic solution. `None` when the feasible set has no vertex.
pub fn vertex_oracle(lp: &LinearProgram) -> Option<(f64, Vec<f64>)> {
    let n = lp.n_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = lp.constraints.iter().map(|c| (c.coefficients.clone(), c.rhs)).collect();
    let equalities: Vec<usize> = lp
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ConstraintKind::Eq)
        .map(|(i, _)| i)
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick = Vec::new();
    fn choose(
        start: usize,
        k: usize,
        total: usize,
        pick: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if pick.len() == k {
            f(pick);
            return;
        }
        for i in start..total {
            pick.push(i);
            choose(i + 1, k, total, pick, f);
            pick.pop();
        }
    }
    choose(0, n, planes.len(), &mut pick, &mut |set| {
        if equalities.iter().any(|e| !set.contains(e)) {
            return;
        }
        let a: Vec<Vec<f64>> = set.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = set.iter().map(|&i| planes[i].1).collect();
        if determinant(a.clone()).abs() < 1e-9 {
            return;
        }
        let x = solve(a, b);
        if lp.max_violation(&x) > 1e-9 {
            return;
        }
        let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, x));
        }
    });
    best
}

pub fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap(k, p);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det
}

/// Seven nodes, integer edge lengths 1..=4 so that equal-length paths are
/// common, and a ring that keeps the graph (strongly) connected.
pub fn random_graph(seed: u64, directed: bool) -> WeightedGraph {
    let mut r = rng(seed);
    let mut g = WeightedGraph::new(ids(7), WeightKind::DistanceKm, directed);
    for i in 0..7 {
        g.add_edge(i, (i + 1) % 7, r.random_range(1..=4) as f64);
    }
    for u in 0..7 {
        for v in 0..7 {
            if u != v && (directed || u < v) && g.weight(u, v).is_none() && r.random_bool(0.4) {
                g.add_edge(u, v, r.random_range(1..=4) as f64);
            }
        }
    }
    g
}

/// Every simple path from `s` to `t` with its length.
pub fn simple_paths(g: &WeightedGraph, s: usize, t: usize) -> Vec<(f64, Vec<usize>)> {
    fn walk(g: &WeightedGraph, at: usize, t: usize, len: f64, path: &mut Vec<usize>, out: &mut Vec<(f64, Vec<usize>)>) {
        if at == t {
            out.push((len, path.clone()));
            return;
        }
        for v in 0..g.len() {
            if let Some(l) = g.length(at, v) {
                if !path.contains(&v) {
                    path.push(v);
                    walk(g, v, t, len + l, path, out);
                    path.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(g, s, t, 0.0, &mut vec![s], &mut out);
    out
}

pub fn betweenness_oracle(g: &WeightedGraph) -> Vec<f64> {
    let n = g.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let paths = simple_paths(g, s, t);
            let best = paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| p.0 == best).map(|p| &p.1).collect();
            let total = shortest.len() as f64;
            for p in &shortest {
                for &v in &p[1..p.len() - 1] {
                    cb[v] += 1.0 / total;
                }
            }
        }
    }
    if !g.directed {
        cb.iter_mut().for_each(|v| *v /= 2.0);
    }
    cb
}

pub fn floyd_warshall(g: &WeightedGraph) -> Vec<Vec<f64>> {
    let n = g.len();
    let mut d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { g.length(i, j).unwrap_or(f64::INFINITY) }).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn flow_graph(seed: u64, n: usize, symmetric: bool, complete: bool) -> FlowMatrix {
    let mut r = rng(seed);
    let mut m = DMatrix::from_fn(n, n, |i, j| {
        if i == j || (!complete && r.random_bool(0.3)) {
            0.0
        } else {
            r.random_range(1.0..500.0)
        }
    });
    if symmetric {
        m = DMatrix::from_fn(n, n, |i, j| m[(i.min(j), i.max(j))]);
    }
    FlowMatrix::from_dense(2016, VehicleClass::CarsBuses, &ids(n), &m)
}

/// Stationary vector of the damped walk, solved directly from
/// `(I - d P - d D/n) pr = (1 - d)/n` with `P[i][j] = w(j -> i) / out(j)`.
pub fn pagerank_oracle(g: &WeightedGraph, d: f64) -> Vec<f64> {
    let n = g.len();
    let out: Vec<f64> = (0..n).map(|j| (0..n).filter_map(|i| g.weight(j, i)).sum()).collect();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let step = if out[j] > 0.0 { g.weight(j, i).unwrap_or(0.0) / out[j] } else { 1.0 / n as f64 };
                    (if i == j { 1.0 } else { 0.0 }) - d * step
                })
                .collect()
        })
        .collect();
    solve(a, vec![(1.0 - d) / n as f64; n])
}

/// A bounded, feasible LP with `n` variables: `<=` rows with positive
/// coefficients, plus a `>=` row and an equality through a known interior point.
pub fn random_lp(seed: u64) -> LinearProgram {
    let mut r = rng(seed);
    let n = r.random_range(2..=8);
    let m = r.random_range(2..=5);
    let names = (0..n).map(|j| format!("x{j}")).collect();
    let objective = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut lp = LinearProgram::new(names, objective);
    let x0: Vec<f64> = (0..n).map(|_| r.random_range(0.0..0.5)).collect();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0.1..2.0)).collect();
        let lhs: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
        lp.add(a, ConstraintKind::Le, lhs + r.random_range(0.5..3.0));
    }
    if seed % 2 == 0 {
        let g: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let lhs: f64 = g.iter().zip(&x0).map(|(a, x)| a * x).sum();
        lp.add(g, ConstraintKind::Ge, 0.5 * lhs);
    }
    if seed % 3 == 0 {
        let e: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let lhs: f64 = e.iter().zip(&x0).map(|(a, x)| a * x).sum();
        lp.add(e, ConstraintKind::Eq, lhs);
    }
    lp
}

/// Beale's example, which cycles under the textbook most-negative-cost rule.
pub fn beale() -> LinearProgram {
    let names = ["x4", "x5", "x6", "x7"].map(String::from).to_vec();
    let mut lp = LinearProgram::new(names, vec![-0.75, 20.0, -0.5, 6.0]);
    lp.add(vec![0.25, -8.0, -1.0, 9.0], ConstraintKind::Le, 0.0);
    lp.add(vec![0.5, -12.0, -0.5, 3.0], ConstraintKind::Le, 0.0);
    lp.add(vec![0.0, 0.0, 1.0, 0.0], ConstraintKind::Le, 1.0);
    lp
}

/// Fourteen cities with light background traffic plus a heavy block from
/// origins C00..C02 into destinations C03..C09.
pub fn planted_block(seed: u64) -> FlowMatrix {
    let mut r = rng(seed);
    let m = DMatrix::from_fn(14, 14, |i, j| {
        if i == j {
            0.0
        } else if i < 3 && (3..10).contains(&j) {
            1000.0 + r.random_range(0.0..10.0)
        } else {
            r.random_range(1.0..10.0)
        }
    });
    FlowMatrix::from_dense(2017, VehicleClass::CarsBuses, &ids(14), &m)
}
