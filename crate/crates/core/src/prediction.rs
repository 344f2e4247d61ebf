//! Supervised graph prediction with a kernel ridge surrogate.
//!
//! Training inputs enter only through a Gram matrix `K`. For a test input
//! with kernel column `k_x` the surrogate weights solve
//! `(K + nλI) γ = k_x`; the prediction is the FNGW barycenter of the
//! training outputs with the largest weights, and candidates are ranked by
//! their FNGW distance to it.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::barycenter::{fngw_barycenter, BarycenterConfig};
use crate::error::{Error, Result};
use crate::fngw::{node_cost_matrix, FngwParams, FngwProblem};
use crate::graph::Graph;
use crate::ot::{solve_linear_ot, TransportPlan};

/// Maximum tolerated `|K_ij - K_ji|` of a training Gram matrix.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PredictionModel {
    gram_train: Array2<f64>,
    ridge_lambda: f64,
    train_outputs: Vec<Graph>,
    /// Node count of predicted graphs.
    pub m_out: usize,
    /// Number of training outputs kept in the barycenter.
    pub top_weights: usize,
    pub decode_params: FngwParams,
    /// Outer rounds of the prediction barycenter.
    pub bary_iters: usize,
    pub seed: u64,
    factor: Cholesky<f64, nalgebra::Dyn>,
}

impl PredictionModel {
    pub fn new(
        gram_train: Array2<f64>,
        ridge_lambda: f64,
        train_outputs: Vec<Graph>,
        m_out: usize,
        decode_params: FngwParams,
    ) -> Result<Self> {
        let n = gram_train.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("training Gram matrix is empty".into()));
        }
        if gram_train.ncols() != n {
            return Err(Error::dims("training Gram matrix", format!("{n}x{n}"), format!("{:?}", gram_train.dim())));
        }
        if train_outputs.len() != n {
            return Err(Error::dims("number of training outputs", n, train_outputs.len()));
        }
        if !(ridge_lambda > 0.0 && ridge_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ridge lambda must be positive, got {ridge_lambda}"
            )));
        }
        if m_out == 0 {
            return Err(Error::InvalidParameter("output node count must be positive".into()));
        }
        let mut max_asymmetry: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                max_asymmetry = max_asymmetry.max((gram_train[[i, j]] - gram_train[[j, i]]).abs());
            }
        }
        if max_asymmetry > GRAM_SYMMETRY_TOL {
            return Err(Error::Asymmetric { max_asymmetry });
        }
        let regularized = DMatrix::from_fn(n, n, |i, j| {
            gram_train[[i, j]] + if i == j { n as f64 * ridge_lambda } else { 0.0 }
        });
        let factor = match Cholesky::new(regularized.clone()) {
            Some(f) => f,
            None => {
                let min_eigenvalue = SymmetricEigen::new(regularized).eigenvalues.min();
                return Err(Error::Factorization { min_eigenvalue });
            }
        };
        Ok(PredictionModel {
            gram_train,
            ridge_lambda,
            train_outputs,
            m_out,
            top_weights: 5,
            decode_params,
            bary_iters: 20,
            seed: 0,
            factor,
        })
    }

    pub fn gram_train(&self) -> &Array2<f64> {
        &self.gram_train
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    pub fn train_outputs(&self) -> &[Graph] {
        &self.train_outputs
    }
}

/// Surrogate weights `γ = (K + nλI)⁻¹ k_x`.
pub fn ridge_weights(model: &PredictionModel, k_x: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = model.gram_train.nrows();
    if k_x.len() != n {
        return Err(Error::dims("kernel column", n, k_x.len()));
    }
    if let Some(i) = k_x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "kernel column".into(),
            index: vec![i],
        });
    }
    let rhs = DVector::from_iterator(n, k_x.iter().copied());
    let sol = model.factor.solve(&rhs);
    Ok(Array1::from_iter(sol.iter().copied()))
}

/// Keeps the `top` largest weights, clamps negatives to zero and
/// renormalizes. Returns `(index, weight)` pairs in index order.
pub fn truncate_weights(gamma: ArrayView1<f64>, top: usize) -> Result<Vec<(usize, f64)>> {
    if top == 0 {
        return Err(Error::InvalidParameter("top_weights must be positive".into()));
    }
    let mut order: Vec<usize> = (0..gamma.len()).collect();
    order.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]).then(a.cmp(&b)));
    let mut kept: Vec<(usize, f64)> = order
        .into_iter()
        .take(top)
        .map(|i| (i, gamma[i].max(0.0)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let total: f64 = kept.iter().map(|&(_, w)| w).sum();
    if kept.is_empty() || !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    kept.sort_by_key(|&(i, _)| i);
    for (_, w) in &mut kept {
        *w /= total;
    }
    Ok(kept)
}

/// Relaxed prediction: barycenter of the best-weighted training outputs.
pub fn predict_relaxed(model: &PredictionModel, k_x: ArrayView1<f64>) -> Result<Graph> {
    let gamma = ridge_weights(model, k_x)?;
    let kept = truncate_weights(gamma.view(), model.top_weights)?;
    let graphs: Vec<Graph> = kept.iter().map(|&(i, _)| model.train_outputs[i].clone()).collect();
    let mut config = BarycenterConfig::new(model.m_out);
    config.lambda_weights = Some(kept.iter().map(|&(_, w)| w).collect());
    config.outer_iters = model.bary_iters.max(1);
    config.seed = model.seed;
    Ok(fngw_barycenter(&graphs, &model.decode_params, &config)?.graph)
}

/// One ranked candidate; `value` is `None` when its solve failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub index: usize,
    pub value: Option<f64>,
}

/// FNGW value from the better of two starts: the product coupling and the
/// optimal plan of the node cost alone.
pub fn fngw_value_two_starts(source: &Graph, target: &Graph, params: &FngwParams) -> Result<f64> {
    let problem = FngwProblem::new(source, target, params)?;
    let mut best = problem.solve()?.value;
    if source.feature_dim() > 0 {
        let m = node_cost_matrix(source.node_features().view(), target.node_features().view(), params.node_metric)?;
        let init: TransportPlan = solve_linear_ot(m.view(), source.weights().view(), target.weights().view())?;
        best = best.min(problem.solve_from(&init)?.value);
    }
    Ok(best)
}

/// Ranks candidates by FNGW distance to `relaxed`, ascending, ties by index;
/// failed candidates come last.
pub fn decode_candidates(relaxed: &Graph, candidates: &[Graph], params: &FngwParams) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidates to rank".into()));
    }
    let mut ranked: Vec<RankedCandidate> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let value = match fngw_value_two_starts(c, relaxed, params) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("candidate {index} failed: {e}");
                    None
                }
            };
            RankedCandidate { index, value }
        })
        .collect();
    ranked.sort_by(|a, b| match (a.value, b.value) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    Ok(ranked)
}

/// Fraction of test points whose true candidate is among the first `k` ranks.
pub fn top_k_accuracy(rankings: &[Vec<usize>], truths: &[usize], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if rankings.len() != truths.len() {
        return Err(Error::dims("number of truths", rankings.len(), truths.len()));
    }
    if rankings.is_empty() {
        return Err(Error::EmptyInput("no rankings".into()));
    }
    let hits = rankings
        .iter()
        .zip(truths)
        .filter(|(r, t)| r.iter().take(k).any(|i| i == *t))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

/// Gaussian kernel `exp(-γ ‖x_i - y_j‖²)` between the rows of `x` and `y`.
pub fn gaussian_kernel(x: ArrayView2<f64>, y: ArrayView2<f64>, gamma: f64) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::dims("input vector length", x.ncols(), y.ncols()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("kernel bandwidth must be positive, got {gamma}")));
    }
    Ok(Array2::from_shape_fn((x.nrows(), y.nrows()), |(i, j)| {
        let d: f64 = x.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        (-gamma * d).exp()
    }))
}

fn nearest<'a>(v: ArrayView1<f64>, set: &'a [Array1<f64>]) -> Option<&'a Array1<f64>> {
    set.iter().min_by(|a, b| {
        let da: f64 = a.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum();
        let db: f64 = b.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum();
        da.total_cmp(&db)
    })
}

/// Rounds a relaxed graph: structure thresholded at 0.5, node features and
/// edge features snapped to the nearest element of the given finite sets.
pub fn discretize(g: &Graph, feature_set: &[Array1<f64>], edge_set: &[Array1<f64>]) -> Result<Graph> {
    if feature_set.is_empty() || edge_set.is_empty() {
        return Err(Error::EmptyInput("discretization sets must be nonempty".into()));
    }
    if let Some(bad) = feature_set.iter().find(|v| v.len() != g.feature_dim()) {
        return Err(Error::dims("feature set element", g.feature_dim(), bad.len()));
    }
    if let Some(bad) = edge_set.iter().find(|v| v.len() != g.edge_dim()) {
        return Err(Error::dims("edge set element", g.edge_dim(), bad.len()));
    }
    let n = g.n();
    let mut f = Array2::zeros(g.node_features().dim());
    for (i, row) in g.node_features().rows().into_iter().enumerate() {
        f.row_mut(i).assign(nearest(row, feature_set).expect("nonempty set"));
    }
    let a = g.structure().mapv(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    let mut e = Array3::zeros(g.edge_features().dim());
    for i in 0..n {
        for k in 0..n {
            let lane = g.edge_features().slice(ndarray::s![i, k, ..]);
            e.slice_mut(ndarray::s![i, k, ..])
                .assign(nearest(lane, edge_set).expect("nonempty set"));
        }
    }
    Graph::new(f, a, e, g.weights().clone())
}
