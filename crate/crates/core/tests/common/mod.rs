//! Independent reference implementations used by the integration tests.
//! Everything here is written from the definitions with plain loops.
#![allow(dead_code)]

use fngw::{Graph, TransportPlan};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_histogram(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let raw: Array1<f64> = Array1::from_shape_fn(n, |_| rng.random_range(0.2..1.0));
    let total = raw.sum();
    let mut p = raw / total;
    // push the rounding residue into the first entry so the sum is as close to 1 as possible
    let residue = 1.0 - p.sum();
    p[0] += residue;
    p
}

/// Random graph with asymmetric structure and edge features.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, s: usize, t: usize, symmetric: bool) -> Graph {
    let f = Array2::from_shape_fn((n, s), |_| rng.random_range(-1.0..1.0));
    let mut a = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..2.0));
    let mut e = Array3::from_shape_fn((n, n, t), |_| rng.random_range(-1.0..1.0));
    if symmetric {
        for i in 0..n {
            for k in 0..i {
                a[[k, i]] = a[[i, k]];
                for c in 0..t {
                    e[[k, i, c]] = e[[i, k, c]];
                }
            }
        }
    }
    let p = random_histogram(rng, n);
    Graph::new(f, a, e, p).unwrap()
}

/// Random plan with the graphs' marginals, by Sinkhorn scaling of a random kernel.
pub fn random_plan(rng: &mut ChaCha8Rng, p: &Array1<f64>, q: &Array1<f64>) -> TransportPlan {
    let (n, m) = (p.len(), q.len());
    let mut k = Array2::from_shape_fn((n, m), |_| rng.random_range(0.05..1.0));
    for _ in 0..2000 {
        for i in 0..n {
            let s: f64 = k.row(i).sum();
            k.row_mut(i).mapv_inplace(|v| v * p[i] / s);
        }
        for j in 0..m {
            let s: f64 = k.column(j).sum();
            k.column_mut(j).mapv_inplace(|v| v * q[j] / s);
        }
    }
    TransportPlan::new(k, p.clone(), q.clone()).unwrap()
}

/// `Σ_{k,l} (A_ik - Ã_jl)² π_kl` by a quadruple loop.
pub fn brute_structure(a: &Array2<f64>, a2: &Array2<f64>, pi: &Array2<f64>) -> Array2<f64> {
    let (n, m) = pi.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..m {
                    s += (a[[i, k]] - a2[[j, l]]).powi(2) * pi[[k, l]];
                }
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// `Σ_{k,l} ‖E_ik - Ẽ_jl‖² π_kl` by a quadruple loop.
pub fn brute_edge(e: &Array3<f64>, e2: &Array3<f64>, pi: &Array2<f64>) -> Array2<f64> {
    let (n, m) = pi.dim();
    let t = e.shape()[2];
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..m {
                    let d: f64 = (0..t).map(|c| (e[[i, k, c]] - e2[[j, l, c]]).powi(2)).sum();
                    s += d * pi[[k, l]];
                }
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Energy of a plan straight from the quadruple-sum definition.
pub fn brute_energy(g: &Graph, h: &Graph, pi: &Array2<f64>, alpha: f64, beta: f64) -> f64 {
    let (n, m) = pi.dim();
    let (f, f2) = (g.node_features(), h.node_features());
    let js = brute_structure(g.structure(), h.structure(), pi);
    let le = brute_edge(g.edge_features(), h.edge_features(), pi);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let node: f64 = (0..f.ncols()).map(|s| (f[[i, s]] - f2[[j, s]]).powi(2)).sum();
            let mass: f64 = pi.sum();
            total += pi[[i, j]] * ((1.0 - alpha - beta) * node * mass + beta * js[[i, j]] + alpha * le[[i, j]]);
        }
    }
    total
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Minimum linear transport cost by enumerating every basis of the
/// transportation polytope (sets of `n + m - 1` cells forming a spanning tree).
pub fn lp_vertex_enumeration(cost: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    let (n, m) = cost.dim();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    fn recurse(
        start: usize,
        k: usize,
        cells: &[(usize, usize)],
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        for idx in start..cells.len() {
            if cells.len() - idx < k - chosen.len() {
                break;
            }
            chosen.push(cells[idx]);
            recurse(idx + 1, k, cells, chosen, visit);
            chosen.pop();
        }
    }
    let mut visit = |basis: &[(usize, usize)]| {
        if let Some(flows) = peel_basis(basis, p, q) {
            let c: f64 = basis.iter().zip(&flows).map(|(&(i, j), f)| cost[[i, j]] * f).sum();
            best = best.min(c);
        }
    };
    recurse(0, k, &cells, &mut chosen, &mut visit);
    best
}

fn peel_basis(basis: &[(usize, usize)], p: &Array1<f64>, q: &Array1<f64>) -> Option<Vec<f64>> {
    let mut row = p.to_vec();
    let mut col = q.to_vec();
    let mut active = vec![true; basis.len()];
    let mut flows = vec![0.0; basis.len()];
    for _ in 0..basis.len() {
        let mut found = None;
        'search: for (is_row, count) in [(true, row.len()), (false, col.len())] {
            for v in 0..count {
                let hits: Vec<usize> = (0..basis.len())
                    .filter(|&c| active[c] && if is_row { basis[c].0 == v } else { basis[c].1 == v })
                    .collect();
                if hits.len() == 1 {
                    found = Some((is_row, hits[0]));
                    break 'search;
                }
            }
        }
        let (is_row, c) = found?;
        let (i, j) = basis[c];
        let f = if is_row { row[i] } else { col[j] };
        flows[c] = f;
        row[i] -= f;
        col[j] -= f;
        active[c] = false;
    }
    let ok = flows.iter().all(|&f| f >= -1e-12)
        && row.iter().chain(&col).all(|r| r.abs() < 1e-12);
    ok.then_some(flows)
}

/// Maximum absolute entrywise difference.
pub fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Print one acceptance line and return whether it passed.
pub fn report(name: &str, pass: bool, detail: &str) -> bool {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
