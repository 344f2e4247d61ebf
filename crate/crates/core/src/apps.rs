//! Pairwise FNGW matrices, Gram matrices and k-means with barycenter
//! centroids.

use std::cmp::Ordering;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rayon::prelude::*;

use crate::barycenter::{fngw_barycenter, BarycenterConfig, BarycenterInit};
use crate::error::{Error, Result};
use crate::fngw::{FngwParams, FngwProblem};
use crate::graph::Graph;
use crate::ot::TransportPlan;
use crate::rng;

/// Solver summary of one unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInfo {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDistances {
    pub distances: Array2<f64>,
    /// One entry per unordered pair `i < j`, in row-major order.
    pub pairs: Vec<PairInfo>,
}

fn bits(values: impl Iterator<Item = f64>) -> impl Iterator<Item = u64> {
    values.map(f64::to_bits)
}

/// Total order on graphs used to fix the orientation of every pair, so the
/// result does not depend on dataset order.
fn canonical_cmp(a: &Graph, b: &Graph) -> Ordering {
    a.n()
        .cmp(&b.n())
        .then_with(|| bits(a.weights().iter().copied()).cmp(bits(b.weights().iter().copied())))
        .then_with(|| bits(a.node_features().iter().copied()).cmp(bits(b.node_features().iter().copied())))
        .then_with(|| bits(a.structure().iter().copied()).cmp(bits(b.structure().iter().copied())))
        .then_with(|| bits(a.edge_features().iter().copied()).cmp(bits(b.edge_features().iter().copied())))
}

/// Full FNGW distance matrix.
///
/// Each unordered pair is solved once; the diagonal is exactly zero and the
/// matrix exactly symmetric.
pub fn pairwise_distance_matrix(dataset: &[Graph], params: &FngwParams) -> Result<PairwiseDistances> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset is empty".into()));
    }
    let n = dataset.len();
    let index: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pairs: Vec<PairInfo> = index
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = match canonical_cmp(&dataset[i], &dataset[j]) {
                Ordering::Greater => (&dataset[j], &dataset[i]),
                _ => (&dataset[i], &dataset[j]),
            };
            let sol = FngwProblem::new(a, b, params)
                .and_then(|p| p.solve())
                .map_err(|e| Error::PairFailed {
                    i,
                    j,
                    source: Box::new(e),
                })?;
            Ok(PairInfo {
                i,
                j,
                value: sol.value,
                iterations: sol.iterations,
            })
        })
        .collect::<Result<_>>()?;
    let mut distances = Array2::zeros((n, n));
    for p in &pairs {
        distances[[p.i, p.j]] = p.value;
        distances[[p.j, p.i]] = p.value;
    }
    Ok(PairwiseDistances { distances, pairs })
}

/// Kernel matrix `exp(-γ FNGW(g_i, g_j))` with unit diagonal.
pub fn gram_matrix(dataset: &[Graph], params: &FngwParams, gamma_kernel: f64) -> Result<Array2<f64>> {
    if !(gamma_kernel > 0.0 && gamma_kernel.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kernel bandwidth must be positive, got {gamma_kernel}"
        )));
    }
    let d = pairwise_distance_matrix(dataset, params)?.distances;
    Ok(d.mapv(|v| (-gamma_kernel * v).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    /// Maximum number of Lloyd iterations.
    pub max_iters: usize,
    /// Outer rounds of each centroid barycenter.
    pub bary_iters: usize,
    pub seed: u64,
    /// Seeded initializations scored by the inertia of their first
    /// assignment; Lloyd iterations continue from the best one.
    pub init_candidates: usize,
    /// Tolerated inertia increase before a warning is logged.
    pub inertia_slack: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iters: 20,
            bary_iters: 10,
            seed: 0,
            init_candidates: 3,
            inertia_slack: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Graph>,
    /// Sum of assignment distances after every assignment step.
    pub inertia_trace: Vec<f64>,
}

fn feature_mean(g: &Graph) -> Array1<f64> {
    g.node_features().t().dot(g.weights())
}

/// Seeded farthest-point selection on mean node features.
fn farthest_point_init(dataset: &[Graph], k: usize, seed: u64) -> Vec<usize> {
    let proxies: Vec<Array1<f64>> = dataset.iter().map(feature_mean).collect();
    let dist = |a: usize, b: usize| -> f64 {
        proxies[a].iter().zip(&proxies[b]).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut rng = rng::seeded(seed);
    let mut chosen = vec![rng.random_range(0..dataset.len())];
    let mut closest: Vec<f64> = (0..dataset.len()).map(|i| dist(i, chosen[0])).collect();
    while chosen.len() < k {
        let next = (0..dataset.len())
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| closest[a].total_cmp(&closest[b]).then(b.cmp(&a)))
            .expect("k <= dataset size");
        chosen.push(next);
        for (i, c) in closest.iter_mut().enumerate() {
            *c = c.min(dist(i, next));
        }
    }
    chosen
}

fn single_barycenter(g: &Graph, size: usize, params: &FngwParams, config: &KMeansConfig, seed: u64) -> Result<Graph> {
    let mut bc = BarycenterConfig::new(size);
    bc.outer_iters = config.bary_iters.max(1);
    bc.seed = seed;
    Ok(fngw_barycenter(std::slice::from_ref(g), params, &bc)?.graph)
}

struct Assignment {
    labels: Vec<usize>,
    distances: Vec<f64>,
    plans: Vec<TransportPlan>,
}

impl Assignment {
    fn inertia(&self) -> f64 {
        self.distances.iter().sum()
    }
}

/// Nearest-centroid assignment. A sample already assigned to a centroid also
/// tries a warm start from the plan of that centroid's last update.
fn assign(
    dataset: &[Graph],
    centroids: &[Graph],
    params: &FngwParams,
    previous: &[usize],
    centroid_plans: &[Option<TransportPlan>],
) -> Result<Assignment> {
    let k = centroids.len();
    let jobs: Vec<(usize, usize)> = (0..dataset.len()).flat_map(|i| (0..k).map(move |c| (i, c))).collect();
    let solved: Vec<(f64, TransportPlan)> = jobs
        .par_iter()
        .map(|&(i, c)| {
            let problem = FngwProblem::new(&centroids[c], &dataset[i], params)?;
            let mut sol = problem.solve()?;
            if previous.get(i) == Some(&c) {
                if let Some(Some(plan)) = centroid_plans.get(i) {
                    let warm = problem.solve_from(plan)?;
                    if warm.value < sol.value {
                        sol = warm;
                    }
                }
            }
            Ok((sol.value, sol.plan))
        })
        .collect::<Result<_>>()?;
    let mut out = Assignment {
        labels: Vec::with_capacity(dataset.len()),
        distances: Vec::with_capacity(dataset.len()),
        plans: Vec::with_capacity(dataset.len()),
    };
    for row in solved.chunks(k) {
        let c = (0..k)
            .min_by(|&a, &b| row[a].0.total_cmp(&row[b].0).then(a.cmp(&b)))
            .expect("k >= 1");
        out.labels.push(c);
        out.distances.push(row[c].0);
        out.plans.push(row[c].1.clone());
    }
    Ok(out)
}

/// k-means over graphs with FNGW assignments and barycenter centroids.
///
/// Assignment distances take the better of a fresh solve and a warm start
/// from the plan the centroid computation produced for that sample, and
/// centroids are warm-started from the previous centroid and the assignment
/// plans; together this keeps the inertia from increasing.
pub fn kmeans_cluster(
    dataset: &[Graph],
    k: usize,
    centroid_size: usize,
    params: &FngwParams,
    config: &KMeansConfig,
) -> Result<Clustering> {
    params.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if dataset.len() < k {
        return Err(Error::InvalidParameter(format!(
            "cannot form {k} clusters from {} graphs",
            dataset.len()
        )));
    }
    if centroid_size == 0 {
        return Err(Error::InvalidParameter("centroid size must be positive".into()));
    }
    let mut best: Option<(Vec<Graph>, Assignment)> = None;
    for r in 0..config.init_candidates.max(1) {
        let seed = if r == 0 { config.seed } else { rng::derive_seed(config.seed, 2_000_000 + r as u64) };
        let centroids: Vec<Graph> = farthest_point_init(dataset, k, seed)
            .iter()
            .enumerate()
            .map(|(c, &i)| single_barycenter(&dataset[i], centroid_size, params, config, rng::derive_seed(seed, c as u64)))
            .collect::<Result<_>>()?;
        let first = assign(dataset, &centroids, params, &[], &[])?;
        if best.as_ref().is_none_or(|(_, b)| first.inertia() < b.inertia()) {
            best = Some((centroids, first));
        }
    }
    let (mut centroids, mut pending) = best.map(|(c, a)| (c, Some(a))).expect("at least one candidate");
    // plan from a sample's own centroid, produced by the last centroid update
    let mut centroid_plans: Vec<Option<TransportPlan>> = vec![None; dataset.len()];
    let mut assignments: Vec<usize> = Vec::new();
    let mut inertia_trace = Vec::new();

    for iter in 0..config.max_iters.max(1) {
        let step = match pending.take() {
            Some(a) => a,
            None => assign(dataset, &centroids, params, &assignments, &centroid_plans)?,
        };
        let inertia = step.inertia();
        let Assignment {
            labels: mut new_assign,
            distances: best_dist,
            plans: best_plan,
        } = step;
        if let Some(&prev) = inertia_trace.last() {
            if inertia > prev + config.inertia_slack {
                log::warn!("k-means inertia increased from {prev} to {inertia}");
            }
        }
        inertia_trace.push(inertia);
        if new_assign == assignments {
            break;
        }

        // reseed empty clusters from the worst-assigned samples
        let mut reseeded = vec![false; k];
        for c in 0..k {
            if new_assign.contains(&c) {
                continue;
            }
            let worst = (0..dataset.len())
                .filter(|&i| new_assign.iter().filter(|&&a| a == new_assign[i]).count() > 1)
                .max_by(|&a, &b| best_dist[a].total_cmp(&best_dist[b]).then(b.cmp(&a)));
            let Some(worst) = worst else { continue };
            log::info!("cluster {c} is empty, reseeding from sample {worst}");
            new_assign[worst] = c;
            reseeded[c] = true;
            centroids[c] = single_barycenter(
                &dataset[worst],
                centroid_size,
                params,
                config,
                rng::derive_seed(config.seed, (iter * k + c) as u64 + 1_000_003),
            )?;
        }
        assignments = new_assign;

        let updates: Vec<(Graph, Vec<(usize, TransportPlan)>)> = (0..k)
            .into_par_iter()
            .map(|c| {
                let members: Vec<usize> = (0..dataset.len()).filter(|&i| assignments[i] == c).collect();
                if members.is_empty() || reseeded[c] {
                    return Ok((centroids[c].clone(), Vec::new()));
                }
                let graphs: Vec<Graph> = members.iter().map(|&i| dataset[i].clone()).collect();
                let mut bc = BarycenterConfig::new(centroid_size);
                bc.outer_iters = config.bary_iters.max(1);
                bc.seed = rng::derive_seed(config.seed, c as u64);
                bc.init = BarycenterInit::Provided(centroids[c].clone());
                bc.initial_plans = Some(members.iter().map(|&i| best_plan[i].clone()).collect());
                let bary = fngw_barycenter(&graphs, params, &bc)?;
                Ok((bary.graph, members.into_iter().zip(bary.plans).collect()))
            })
            .collect::<Result<_>>()?;
        centroid_plans = vec![None; dataset.len()];
        for (c, (graph, plans)) in updates.into_iter().enumerate() {
            centroids[c] = graph;
            for (i, plan) in plans {
                centroid_plans[i] = Some(plan);
            }
        }
    }
    Ok(Clustering {
        assignments,
        centroids,
        inertia_trace,
    })
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("labelings", a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = Array2::<f64>::zeros((ka, kb));
    for (&x, &y) in a.iter().zip(b) {
        table[[x, y]] += 1.0;
    }
    let comb2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.iter().map(|&v| comb2(v)).sum();
    let rows: f64 = table.rows().into_iter().map(|r| comb2(r.sum())).sum();
    let cols: f64 = table.columns().into_iter().map(|c| comb2(c.sum())).sum();
    let total = comb2(n as f64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
