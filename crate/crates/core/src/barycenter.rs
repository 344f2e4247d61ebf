//! FNGW barycenters by block coordinate descent.
//!
//! Given graphs `g_1..g_K`, weights `λ` on the simplex and a histogram `p`
//! on `n` nodes, the barycenter minimizes
//! `Σ_k λ_k E(bary, g_k, π_k) + γ ‖A‖₁` over the plans, `E`, `F` and `A`.
//! Plans are refreshed by conditional gradient warm-started from the
//! previous round; `E` and `F` have closed forms; `A` has a closed form when
//! `γ = 0` and is updated by proximal gradient otherwise.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis, Zip};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fngw::{FngwParams, FngwProblem};
use crate::graph::{uniform_histogram, validate_histogram, Graph, NodeMetric};
use crate::ot::TransportPlan;
use crate::rng;

/// Starting point of the block coordinate descent.
#[derive(Debug, Clone, PartialEq)]
pub enum BarycenterInit {
    /// Node features sampled from the inputs, constant structure and edges.
    Random,
    /// Start from the given graph (its node weights are replaced by `p`).
    Provided(Graph),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterConfig {
    pub n: usize,
    /// Node histogram of the barycenter; uniform when `None`.
    pub p: Option<Array1<f64>>,
    /// Weights of the inputs; uniform when `None`.
    pub lambda_weights: Option<Vec<f64>>,
    pub gamma_sparsity: f64,
    /// Proximal step; `0.9 / (2β max_i p_i²)` when `None`.
    pub prox_step: Option<f64>,
    pub prox_iters: usize,
    pub outer_iters: usize,
    /// Stop once the relative change of the loss falls below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub init: BarycenterInit,
    /// Plans (n × n_k) to warm-start the first round; product couplings otherwise.
    pub initial_plans: Option<Vec<TransportPlan>>,
}

impl BarycenterConfig {
    pub fn new(n: usize) -> Self {
        BarycenterConfig {
            n,
            p: None,
            lambda_weights: None,
            gamma_sparsity: 0.0,
            prox_step: None,
            prox_iters: 10,
            outer_iters: 50,
            rel_tol: 1e-7,
            seed: 0,
            init: BarycenterInit::Random,
            initial_plans: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Barycenter {
    pub graph: Graph,
    /// Loss after every outer round.
    pub loss_trace: Vec<f64>,
    /// Final plans, barycenter rows × input columns.
    pub plans: Vec<TransportPlan>,
}

fn check_blocks(graphs: &[Graph], plans: &[TransportPlan], lambda: &[f64], p: &Array1<f64>) -> Result<()> {
    if graphs.is_empty() {
        return Err(Error::EmptyInput("barycenter needs at least one input graph".into()));
    }
    if plans.len() != graphs.len() {
        return Err(Error::dims("number of plans", graphs.len(), plans.len()));
    }
    if lambda.len() != graphs.len() {
        return Err(Error::dims("number of barycenter weights", graphs.len(), lambda.len()));
    }
    if let Some(index) = p.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroWeight { index });
    }
    for (g, pi) in graphs.iter().zip(plans) {
        if pi.matrix().dim() != (p.len(), g.n()) {
            return Err(Error::dims(
                "barycenter plan",
                format!("{}x{}", p.len(), g.n()),
                format!("{}x{}", pi.matrix().nrows(), pi.matrix().ncols()),
            ));
        }
    }
    Ok(())
}

/// `(Σ_k λ_k π_k X_k π_kᵀ) / (p pᵀ)` for square per-input matrices `X_k`.
fn weighted_pullback<'a>(
    mats: impl Iterator<Item = ArrayView2<'a, f64>>,
    plans: &[TransportPlan],
    lambda: &[f64],
    p: &Array1<f64>,
) -> Array2<f64> {
    let n = p.len();
    let mut acc = Array2::zeros((n, n));
    for ((x, pi), &w) in mats.zip(plans).zip(lambda) {
        let pulled = pi.matrix().dot(&x).dot(&pi.matrix().t());
        acc.scaled_add(w, &pulled);
    }
    Zip::indexed(&mut acc).for_each(|(i, k), v| *v /= p[i] * p[k]);
    acc
}

/// Closed-form edge-tensor update: channel-wise weighted pullback of the inputs.
pub fn update_edge_tensor(
    graphs: &[Graph],
    plans: &[TransportPlan],
    lambda: &[f64],
    p: &Array1<f64>,
) -> Result<Array3<f64>> {
    check_blocks(graphs, plans, lambda, p)?;
    let t = graphs[0].edge_dim();
    if let Some(g) = graphs.iter().find(|g| g.edge_dim() != t) {
        return Err(Error::dims("edge feature dimension T", t, g.edge_dim()));
    }
    let n = p.len();
    let mut out = Array3::zeros((n, n, t));
    for c in 0..t {
        let channel = weighted_pullback(graphs.iter().map(|g| g.edge_channel(c)), plans, lambda, p);
        out.index_axis_mut(Axis(2), c).assign(&channel);
    }
    Ok(out)
}

/// Closed-form node-feature update `diag(1/p) Σ_k λ_k π_k F_k`.
pub fn update_node_features(
    graphs: &[Graph],
    plans: &[TransportPlan],
    lambda: &[f64],
    p: &Array1<f64>,
) -> Result<Array2<f64>> {
    check_blocks(graphs, plans, lambda, p)?;
    let s = graphs[0].feature_dim();
    if let Some(g) = graphs.iter().find(|g| g.feature_dim() != s) {
        return Err(Error::dims("node feature dimension S", s, g.feature_dim()));
    }
    let mut acc = Array2::zeros((p.len(), s));
    for ((g, pi), &w) in graphs.iter().zip(plans).zip(lambda) {
        acc.scaled_add(w, &pi.matrix().dot(g.node_features()));
    }
    for (mut row, &pi) in acc.rows_mut().into_iter().zip(p) {
        row /= pi;
    }
    Ok(acc)
}

/// Closed-form structure minimizer without sparsity, `(Σ_k λ_k π_k A_k π_kᵀ) / (p pᵀ)`.
pub fn structure_closed_form(
    graphs: &[Graph],
    plans: &[TransportPlan],
    lambda: &[f64],
    p: &Array1<f64>,
) -> Result<Array2<f64>> {
    check_blocks(graphs, plans, lambda, p)?;
    Ok(weighted_pullback(graphs.iter().map(|g| g.structure().view()), plans, lambda, p))
}

/// Elementwise `sign(a) max(0, |a| - threshold)`.
pub fn soft_threshold(a: ArrayView2<f64>, threshold: f64) -> Result<Array2<f64>> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "soft threshold must be nonnegative, got {threshold}"
        )));
    }
    Ok(a.mapv(|v| v.signum() * (v.abs() - threshold).max(0.0)))
}

/// Smooth part `β Σ_k λ_k Σ (A_ik - A_k,jl)² π_ij π_kl` of the structure
/// objective, up to a constant independent of `A`:
/// `β Σ_k λ_k (⟨A∘A, ppᵀ⟩ - 2⟨A, π_k A_k π_kᵀ⟩)`.
pub fn structure_objective(
    a: ArrayView2<f64>,
    graphs: &[Graph],
    plans: &[TransportPlan],
    lambda: &[f64],
    p: &Array1<f64>,
    beta: f64,
    gamma_sparsity: f64,
) -> Result<f64> {
    check_blocks(graphs, plans, lambda, p)?;
    let target = weighted_pullback(graphs.iter().map(|g| g.structure().view()), plans, lambda, p);
    let lambda_total: f64 = lambda.iter().sum();
    let mut smooth = 0.0;
    Zip::indexed(a).and(&target).for_each(|(i, k), &v, &t| {
        smooth += p[i] * p[k] * (lambda_total * v * v - 2.0 * v * t);
    });
    Ok(beta * smooth + gamma_sparsity * a.iter().map(|v| v.abs()).sum::<f64>())
}

/// Proximal-gradient iterations on the structure block.
///
/// The gradient of the smooth part is `2β Σ_k λ_k (A ∘ ppᵀ - π_k A_k π_kᵀ)`.
#[allow(clippy::too_many_arguments)]
pub fn update_structure_prox(
    a_init: ArrayView2<f64>,
    graphs: &[Graph],
    plans: &[TransportPlan],
    lambda: &[f64],
    p: &Array1<f64>,
    beta: f64,
    gamma_sparsity: f64,
    step: f64,
    iters: usize,
) -> Result<Array2<f64>> {
    check_blocks(graphs, plans, lambda, p)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("prox step must be positive, got {step}")));
    }
    if !(gamma_sparsity >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sparsity weight must be nonnegative, got {gamma_sparsity}"
        )));
    }
    let n = p.len();
    if a_init.dim() != (n, n) {
        return Err(Error::dims("initial structure", format!("{n}x{n}"), format!("{:?}", a_init.dim())));
    }
    let lambda_total: f64 = lambda.iter().sum();
    let pull = weighted_pullback(graphs.iter().map(|g| g.structure().view()), plans, lambda, p);
    let mut a = a_init.to_owned();
    for _ in 0..iters {
        let mut next = a.clone();
        Zip::indexed(&mut next).and(&pull).for_each(|(i, k), v, &t| {
            let grad = 2.0 * beta * p[i] * p[k] * (lambda_total * *v - t);
            *v -= step * grad;
        });
        a = soft_threshold(next.view(), step * gamma_sparsity)?;
    }
    Ok(a)
}

/// Default proximal step `0.9 / (2β max_i p_i²)`.
pub fn default_prox_step(beta: f64, p: &Array1<f64>) -> f64 {
    let pmax = p.iter().cloned().fold(0.0, f64::max);
    0.9 / (2.0 * beta * pmax * pmax)
}

fn initial_graph(graphs: &[Graph], n: usize, p: &Array1<f64>, seed: u64) -> Result<Graph> {
    let mut rng = rng::seeded(seed);
    let s = graphs[0].feature_dim();
    let t = graphs[0].edge_dim();
    let pool: Vec<_> = graphs.iter().flat_map(|g| g.node_features().rows().into_iter()).collect();
    let rows: Vec<usize> = if pool.len() >= n {
        sample(&mut rng, pool.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..pool.len())).collect()
    };
    let mut f = Array2::zeros((n, s));
    for (i, &r) in rows.iter().enumerate() {
        f.row_mut(i).assign(&pool[r]);
    }
    let entries: usize = graphs.iter().map(|g| g.n() * g.n()).sum();
    let a_mean = graphs.iter().map(|g| g.structure().sum()).sum::<f64>() / entries as f64;
    let mut e_mean = Array1::zeros(t);
    for g in graphs {
        e_mean += &g.edge_features().sum_axis(Axis(0)).sum_axis(Axis(0));
    }
    e_mean /= entries as f64;
    let mut e = Array3::zeros((n, n, t));
    for mut lane in e.lanes_mut(Axis(2)) {
        lane.assign(&e_mean);
    }
    Graph::new(f, Array2::from_elem((n, n), a_mean), e, p.clone())
}

/// Weighted energies of every input against `bary` under fixed plans.
fn weighted_energy(
    bary: &Graph,
    graphs: &[Graph],
    plans: &[TransportPlan],
    lambda: &[f64],
    params: &FngwParams,
) -> Result<f64> {
    let parts: Vec<f64> = graphs
        .par_iter()
        .zip(plans.par_iter())
        .map(|(g, pi)| Ok(FngwProblem::new(bary, g, params)?.energy(pi.matrix().view())))
        .collect::<Result<_>>()?;
    Ok(parts.iter().zip(lambda).map(|(e, w)| e * w).sum())
}

/// FNGW barycenter of `graphs` by block coordinate descent.
pub fn fngw_barycenter(graphs: &[Graph], params: &FngwParams, config: &BarycenterConfig) -> Result<Barycenter> {
    params.validate()?;
    if graphs.is_empty() {
        return Err(Error::EmptyInput("barycenter needs at least one input graph".into()));
    }
    if params.node_metric != NodeMetric::SquaredEuclidean {
        return Err(Error::UnsupportedMetric(
            "barycenter node features are averaged, which needs the squared-euclidean metric".into(),
        ));
    }
    if config.n == 0 {
        return Err(Error::InvalidParameter("barycenter size must be positive".into()));
    }
    if config.outer_iters == 0 {
        return Err(Error::InvalidParameter("outer_iters must be positive".into()));
    }
    if !(config.gamma_sparsity >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sparsity weight must be nonnegative, got {}",
            config.gamma_sparsity
        )));
    }
    let p = match &config.p {
        Some(p) => {
            if p.len() != config.n {
                return Err(Error::dims("barycenter histogram", config.n, p.len()));
            }
            validate_histogram("barycenter histogram", p.view())?;
            p.clone()
        }
        None => uniform_histogram(config.n),
    };
    let lambda = match &config.lambda_weights {
        Some(l) => {
            validate_histogram("barycenter weights", Array1::from(l.clone()).view())?;
            l.clone()
        }
        None => vec![1.0 / graphs.len() as f64; graphs.len()],
    };
    let mut bary = match &config.init {
        BarycenterInit::Random => initial_graph(graphs, config.n, &p, config.seed)?,
        BarycenterInit::Provided(g) => {
            if g.n() != config.n {
                return Err(Error::dims("initial barycenter nodes", config.n, g.n()));
            }
            g.clone().with_weights(p.clone())?
        }
    };
    let mut plans: Vec<TransportPlan> = match &config.initial_plans {
        Some(plans) => plans.clone(),
        None => graphs.iter().map(|g| TransportPlan::product(&p, g.weights())).collect(),
    };
    check_blocks(graphs, &plans, &lambda, &p)?;
    let step = match config.prox_step {
        Some(s) => s,
        None if params.beta > 0.0 => default_prox_step(params.beta, &p),
        None => 1.0,
    };

    let mut loss_trace: Vec<f64> = Vec::new();
    for _ in 0..config.outer_iters {
        plans = graphs
            .par_iter()
            .zip(plans.par_iter())
            .map(|(g, pi)| Ok(FngwProblem::new(&bary, g, params)?.solve_from(pi)?.plan))
            .collect::<Result<_>>()?;

        let e = update_edge_tensor(graphs, &plans, &lambda, &p)?;
        let f = update_node_features(graphs, &plans, &lambda, &p)?;
        let a = if params.beta == 0.0 {
            if config.gamma_sparsity > 0.0 {
                Array2::zeros((config.n, config.n))
            } else {
                bary.structure().clone()
            }
        } else if config.gamma_sparsity == 0.0 {
            structure_closed_form(graphs, &plans, &lambda, &p)?
        } else {
            update_structure_prox(
                bary.structure().view(),
                graphs,
                &plans,
                &lambda,
                &p,
                params.beta,
                config.gamma_sparsity,
                step,
                config.prox_iters,
            )?
        };
        bary = Graph::new(f, a, e, p.clone())?;

        let loss = weighted_energy(&bary, graphs, &plans, &lambda, params)?
            + config.gamma_sparsity * bary.structure().iter().map(|v| v.abs()).sum::<f64>();
        let converged = loss_trace
            .last()
            .is_some_and(|&prev| (prev - loss).abs() <= config.rel_tol * prev.abs());
        loss_trace.push(loss);
        if converged || loss == 0.0 {
            break;
        }
    }
    Ok(Barycenter {
        graph: bary,
        loss_trace,
        plans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn soft_threshold_examples() {
        let a = array![[1.2, -0.3], [-2.0, 0.5]];
        let s = soft_threshold(a.view(), 0.5).unwrap();
        assert!((s[[0, 0]] - 0.7).abs() < 1e-15);
        assert_eq!(s[[0, 1]], 0.0);
        assert_eq!(s[[1, 0]], -1.5);
        assert_eq!(s[[1, 1]], 0.0);
        assert_eq!(soft_threshold(a.view(), 0.0).unwrap(), a);
        assert!(soft_threshold(a.view(), -1.0).is_err());
    }

    #[test]
    fn zero_histogram_entry_is_rejected() {
        let g = Graph::with_uniform_weights(array![[0.0], [1.0]], Array2::zeros((2, 2)), Array3::zeros((2, 2, 1)))
            .unwrap();
        let p = array![1.0, 0.0];
        let pi = TransportPlan::new(array![[0.5, 0.5], [0.0, 0.0]], p.clone(), g.weights().clone()).unwrap();
        assert!(matches!(
            update_edge_tensor(&[g], &[pi], &[1.0], &p),
            Err(Error::ZeroWeight { index: 1 })
        ));
    }

    #[test]
    fn identical_single_node_inputs_give_their_feature() {
        let g = Graph::new(array![[2.5, -1.0]], array![[0.3]], Array3::from_elem((1, 1, 2), 0.5), array![1.0])
            .unwrap();
        let graphs = vec![g.clone(), g.clone(), g];
        let bary = fngw_barycenter(&graphs, &FngwParams::default(), &BarycenterConfig::new(1)).unwrap();
        assert_eq!(bary.graph.node_features(), &array![[2.5, -1.0]]);
        assert_eq!(bary.graph.structure(), &array![[0.3]]);
    }

    #[test]
    fn large_sparsity_shrinks_structure_to_zero() {
        let g = Graph::with_uniform_weights(
            array![[0.0], [1.0]],
            array![[0.0, 1.0], [2.0, 0.0]],
            Array3::zeros((2, 2, 1)),
        )
        .unwrap();
        let p = uniform_histogram(2);
        let pi = TransportPlan::diagonal(&p);
        let a = update_structure_prox(
            Array2::from_elem((2, 2), 1.0).view(),
            &[g],
            &[pi],
            &[1.0],
            &p,
            0.5,
            1e6,
            1.0,
            3,
        )
        .unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hamming_metric_is_unsupported() {
        let g = Graph::new(array![[1.0]], array![[0.0]], Array3::zeros((1, 1, 1)), array![1.0]).unwrap();
        let params = FngwParams {
            node_metric: NodeMetric::Hamming,
            ..FngwParams::default()
        };
        assert!(matches!(
            fngw_barycenter(&[g], &params, &BarycenterConfig::new(1)),
            Err(Error::UnsupportedMetric(_))
        ));
    }
}
