//! Graph dictionary learning with barycentric reconstructions.
//!
//! A graph is represented by weights `w` on the simplex: its reconstruction
//! is the FNGW barycenter of the atoms with weights `w` on the graph's own
//! histogram. Unmixing alternates a barycenter of the atoms, a plan between
//! the graph and the reconstruction, and an exact minimization over `w` with
//! every plan fixed. Atoms are learned by mini-batch gradient steps on the
//! plan-fixed reconstruction loss.

use ndarray::{Array1, Array2, Array3, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::barycenter::{fngw_barycenter, BarycenterConfig, BarycenterInit};
use crate::error::{Error, Result};
use crate::fngw::{line_search_step, FngwParams, FngwProblem};
use crate::graph::{uniform_histogram, Graph};
use crate::ot::TransportPlan;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Vec<Graph>,
}

impl Dictionary {
    pub fn new(atoms: Vec<Graph>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::EmptyInput("dictionary has no atoms".into()))?;
        for atom in &atoms {
            if atom.feature_dim() != first.feature_dim() {
                return Err(Error::dims("atom node feature dimension", first.feature_dim(), atom.feature_dim()));
            }
            if atom.edge_dim() != first.edge_dim() {
                return Err(Error::dims("atom edge feature dimension", first.edge_dim(), atom.edge_dim()));
            }
        }
        Ok(Dictionary { atoms })
    }

    pub fn atoms(&self) -> &[Graph] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom_sizes(&self) -> Vec<usize> {
        self.atoms.iter().map(Graph::n).collect()
    }

    pub fn into_atoms(self) -> Vec<Graph> {
        self.atoms
    }

    /// Random atoms: node features drawn from the dataset rows, structure
    /// iid uniform on `[0, 1]`, edge features at the dataset channel means
    /// plus Gaussian noise (std 0.1).
    pub fn random(dataset: &[Graph], atom_sizes: &[usize], seed: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("dataset is empty".into()));
        }
        if atom_sizes.is_empty() || atom_sizes.contains(&0) {
            return Err(Error::InvalidParameter("atom sizes must be nonempty and positive".into()));
        }
        let mut rng = rng::seeded(seed);
        let s = dataset[0].feature_dim();
        let t = dataset[0].edge_dim();
        let rows: Vec<_> = dataset.iter().flat_map(|g| g.node_features().rows().into_iter()).collect();
        let entries: usize = dataset.iter().map(|g| g.n() * g.n()).sum();
        let mut e_mean = Array1::zeros(t);
        for g in dataset {
            e_mean += &g.edge_features().sum_axis(Axis(0)).sum_axis(Axis(0));
        }
        e_mean /= entries as f64;
        let noise = Normal::new(0.0, 0.1).expect("positive std");
        let mut atoms = Vec::with_capacity(atom_sizes.len());
        for &n in atom_sizes {
            let mut f = Array2::zeros((n, s));
            for mut row in f.rows_mut() {
                row.assign(&rows[rng.random_range(0..rows.len())]);
            }
            let a = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
            let e = Array3::from_shape_fn((n, n, t), |(_, _, c)| e_mean[c] + noise.sample(&mut rng));
            atoms.push(Graph::new(f, a, e, uniform_histogram(n))?);
        }
        Dictionary::new(atoms)
    }
}

/// Relaxed graph `Σ_s w_s` (pullback of atom `s` through its plan) on histogram `p`.
pub fn reconstruct_from_atoms(
    w: &Array1<f64>,
    dictionary: &Dictionary,
    atom_plans: &[TransportPlan],
    p: &Array1<f64>,
) -> Result<Graph> {
    let parts = atom_pullbacks(dictionary, atom_plans, p)?;
    if w.len() != parts.len() {
        return Err(Error::dims("embedding weights", parts.len(), w.len()));
    }
    Ok(combine(w, &parts, p))
}

/// Per-atom pullbacks `(diag(1/p) π̄ F̄, π̄ Ā π̄ᵀ / ppᵀ, π̄ Ē[t] π̄ᵀ / ppᵀ)`.
fn atom_pullbacks(dictionary: &Dictionary, atom_plans: &[TransportPlan], p: &Array1<f64>) -> Result<Vec<Graph>> {
    if atom_plans.len() != dictionary.len() {
        return Err(Error::dims("number of atom plans", dictionary.len(), atom_plans.len()));
    }
    if let Some(index) = p.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroWeight { index });
    }
    let n = p.len();
    dictionary
        .atoms()
        .iter()
        .zip(atom_plans)
        .map(|(atom, plan)| {
            let pi = plan.matrix();
            if pi.dim() != (n, atom.n()) {
                return Err(Error::dims(
                    "atom plan",
                    format!("{n}x{}", atom.n()),
                    format!("{}x{}", pi.nrows(), pi.ncols()),
                ));
            }
            let mut f = pi.dot(atom.node_features());
            for (mut row, &pr) in f.rows_mut().into_iter().zip(p) {
                row /= pr;
            }
            let pull = |x: ndarray::ArrayView2<f64>| {
                let mut y = pi.dot(&x).dot(&pi.t());
                Zip::indexed(&mut y).for_each(|(i, k), v| *v /= p[i] * p[k]);
                y
            };
            let a = pull(atom.structure().view());
            let mut e = Array3::zeros((n, n, atom.edge_dim()));
            for t in 0..atom.edge_dim() {
                e.index_axis_mut(Axis(2), t).assign(&pull(atom.edge_channel(t)));
            }
            Ok(Graph::from_parts(f, a, e, p.clone()))
        })
        .collect()
}

fn combine(w: &Array1<f64>, parts: &[Graph], p: &Array1<f64>) -> Graph {
    let first = &parts[0];
    let mut f = Array2::zeros(first.node_features().dim());
    let mut a = Array2::zeros(first.structure().dim());
    let mut e = Array3::zeros(first.edge_features().dim());
    for (&ws, part) in w.iter().zip(parts) {
        f.scaled_add(ws, part.node_features());
        a.scaled_add(ws, part.structure());
        e.scaled_add(ws, part.edge_features());
    }
    Graph::from_parts(f, a, e, p.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnmixConfig {
    /// Alternations between barycenter, plan and weight updates.
    pub max_iters: usize,
    /// Stop once the relative change of the reconstruction loss falls below this.
    pub rel_tol: f64,
    /// Outer rounds of each inner barycenter computation.
    pub bary_iters: usize,
    /// Conditional-gradient iterations of the weight update.
    pub weight_iters: usize,
    pub seed: u64,
}

impl Default for UnmixConfig {
    fn default() -> Self {
        UnmixConfig {
            max_iters: 5,
            rel_tol: 1e-5,
            bary_iters: 5,
            weight_iters: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unmixing {
    /// Embedding on the simplex.
    pub w: Array1<f64>,
    /// Plan between the sample (rows) and its reconstruction (columns).
    pub plan_to_bary: TransportPlan,
    /// Plans between the reconstruction (rows) and each atom (columns).
    pub atom_plans: Vec<TransportPlan>,
    /// Unregularized reconstruction energy under `plan_to_bary`.
    pub loss: f64,
}

/// Quadratic form `h(w) = wᵀ Q w` equal, for `w` on the simplex, to the
/// energy between the sample and the reconstruction with all plans fixed.
fn weight_quadratic(g: &Graph, parts: &[Graph], plan: &TransportPlan, params: &FngwParams) -> Result<Array2<f64>> {
    let s = parts.len();
    let d: Vec<f64> = parts
        .iter()
        .map(|part| Ok(FngwProblem::new(g, part, params)?.energy(plan.matrix().view())))
        .collect::<Result<_>>()?;
    let p = plan.col_marginal();
    let n = p.len();
    let mut q = Array2::zeros((s, s));
    for a in 0..s {
        for b in a + 1..s {
            let (x, y) = (&parts[a], &parts[b]);
            let mut node = 0.0;
            for j in 0..n {
                let diff = &x.node_features().row(j) - &y.node_features().row(j);
                node += p[j] * diff.dot(&diff);
            }
            let mut structure = 0.0;
            let mut edges = 0.0;
            for j in 0..n {
                for l in 0..n {
                    let w = p[j] * p[l];
                    structure += w * (x.structure()[[j, l]] - y.structure()[[j, l]]).powi(2);
                    let mut e = 0.0;
                    for t in 0..x.edge_dim() {
                        e += (x.edge_features()[[j, l, t]] - y.edge_features()[[j, l, t]]).powi(2);
                    }
                    edges += w * e;
                }
            }
            let between = params.node_weight() * node + params.beta * structure + params.alpha * edges;
            q[[a, b]] = 0.5 * (d[a] + d[b] - between);
            q[[b, a]] = q[[a, b]];
        }
        q[[a, a]] = d[a];
    }
    Ok(q)
}

/// Conditional gradient over the simplex for `wᵀ (Q - λI) w`, from `w`.
fn minimize_on_simplex(q: &Array2<f64>, lambda_reg: f64, mut w: Array1<f64>, iters: usize) -> Array1<f64> {
    let s = w.len();
    let h = q - &(Array2::<f64>::eye(s) * lambda_reg);
    for _ in 0..iters {
        let grad = h.dot(&w) * 2.0;
        let vertex = (0..s)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]))
            .expect("nonempty simplex");
        let mut d = -&w;
        d[vertex] += 1.0;
        let slope = grad.dot(&d);
        if !(slope < -1e-15) {
            break;
        }
        let curvature = d.dot(&h.dot(&d));
        let step = line_search_step(curvature, slope).unwrap_or(0.0);
        if step == 0.0 {
            break;
        }
        w.mapv_inplace(|v| (1.0 - step) * v);
        w[vertex] += step;
    }
    w
}

/// Embeds `g` on the simplex spanned by the dictionary atoms.
pub fn unmix(
    g: &Graph,
    dictionary: &Dictionary,
    lambda_reg: f64,
    params: &FngwParams,
    config: &UnmixConfig,
) -> Result<Unmixing> {
    if dictionary.is_empty() {
        return Err(Error::EmptyInput("dictionary has no atoms".into()));
    }
    if !(lambda_reg >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "embedding regularization must be nonnegative, got {lambda_reg}"
        )));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidParameter("unmixing max_iters must be positive".into()));
    }
    let s = dictionary.len();
    let p = g.weights().clone();
    let mut w = Array1::from_elem(s, 1.0 / s as f64);
    let mut atom_plans: Option<Vec<TransportPlan>> = None;
    let mut recon: Option<Graph> = None;
    let mut plan: Option<TransportPlan> = None;
    let mut best: Option<(f64, Unmixing)> = None;
    let mut last_loss: Option<f64> = None;

    for _ in 0..config.max_iters {
        let mut bary_config = BarycenterConfig::new(g.n());
        bary_config.p = Some(p.clone());
        bary_config.lambda_weights = Some(w.to_vec());
        bary_config.outer_iters = config.bary_iters.max(1);
        bary_config.seed = config.seed;
        if let Some(prev) = recon.take() {
            bary_config.init = BarycenterInit::Provided(prev);
        }
        bary_config.initial_plans = atom_plans.take();
        let bary = fngw_barycenter(dictionary.atoms(), params, &bary_config)?;
        let plans = bary.plans;

        let problem = FngwProblem::new(g, &bary.graph, params)?;
        let mut sol = problem.solve()?;
        if let Some(prev) = &plan {
            let warm = problem.solve_from(prev)?;
            if warm.value < sol.value {
                sol = warm;
            }
        }
        let parts = atom_pullbacks(dictionary, &plans, &p)?;
        let q = weight_quadratic(g, &parts, &sol.plan, params)?;
        let objective = |w: &Array1<f64>| w.dot(&q.dot(w)) - lambda_reg * w.dot(w);

        // the barycenter with the current weights is itself a candidate
        let candidates = [w.clone(), minimize_on_simplex(&q, lambda_reg, w.clone(), config.weight_iters)];
        for cand in candidates {
            let objective_value = objective(&cand);
            if best.as_ref().is_none_or(|(b, _)| objective_value < *b) {
                let reconstruction = combine(&cand, &parts, &p);
                let loss = FngwProblem::new(g, &reconstruction, params)?.energy(sol.plan.matrix().view());
                best = Some((
                    objective_value,
                    Unmixing {
                        w: cand,
                        plan_to_bary: sol.plan.clone(),
                        atom_plans: plans.clone(),
                        loss,
                    },
                ));
            }
        }
        w = best.as_ref().map(|(_, u)| u.w.clone()).expect("a candidate was recorded");
        let loss = best.as_ref().map(|(_, u)| u.loss).expect("a candidate was recorded");
        recon = Some(combine(&w, &parts, &p));
        atom_plans = Some(plans);
        plan = Some(sol.plan);
        if let Some(prev) = last_loss {
            if (prev - loss).abs() <= config.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        last_loss = Some(loss);
    }
    Ok(best.expect("at least one iteration ran").1)
}

/// Gradient of the plan-fixed batch loss with respect to one atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomGradient {
    pub node_features: Array2<f64>,
    pub structure: Array2<f64>,
    pub edge_features: Array3<f64>,
}

/// Plan-fixed batch loss `(1/B) Σ_b E(g_b, reconstruction_b, π_b)`.
pub fn batch_loss(
    samples: &[&Graph],
    unmixings: &[Unmixing],
    dictionary: &Dictionary,
    params: &FngwParams,
) -> Result<f64> {
    check_batch(samples, unmixings)?;
    let mut total = 0.0;
    for (g, u) in samples.iter().zip(unmixings) {
        let recon = reconstruct_from_atoms(&u.w, dictionary, &u.atom_plans, g.weights())?;
        total += FngwProblem::new(g, &recon, params)?.energy(u.plan_to_bary.matrix().view());
    }
    Ok(total / samples.len() as f64)
}

fn check_batch(samples: &[&Graph], unmixings: &[Unmixing]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    if samples.len() != unmixings.len() {
        return Err(Error::dims("number of unmixings", samples.len(), unmixings.len()));
    }
    Ok(())
}

/// Gradients of [`batch_loss`] with respect to every atom block.
///
/// For atom `s` and sample `b` with reconstruction histogram `p`, atom plan
/// `π̄` and sample plan `π`:
/// `∇F̄ = 2(1-α-β) w_s π̄ᵀ (F̃ - diag(1/p) πᵀ F_b)`,
/// `∇Ā = 2β w_s π̄ᵀ (Ã - πᵀ A_b π / ppᵀ) π̄` and likewise per edge channel
/// with weight `α`, all averaged over the batch.
pub fn atom_gradients(
    samples: &[&Graph],
    unmixings: &[Unmixing],
    dictionary: &Dictionary,
    params: &FngwParams,
) -> Result<Vec<AtomGradient>> {
    check_batch(samples, unmixings)?;
    let mut grads: Vec<AtomGradient> = dictionary
        .atoms()
        .iter()
        .map(|a| AtomGradient {
            node_features: Array2::zeros(a.node_features().dim()),
            structure: Array2::zeros(a.structure().dim()),
            edge_features: Array3::zeros(a.edge_features().dim()),
        })
        .collect();
    let scale = 2.0 / samples.len() as f64;
    for (g, u) in samples.iter().zip(unmixings) {
        let p = g.weights();
        let recon = reconstruct_from_atoms(&u.w, dictionary, &u.atom_plans, p)?;
        let pi = u.plan_to_bary.matrix();
        if pi.dim() != (g.n(), recon.n()) {
            return Err(Error::dims(
                "sample plan",
                format!("{}x{}", g.n(), recon.n()),
                format!("{}x{}", pi.nrows(), pi.ncols()),
            ));
        }
        let q = pi.sum_axis(Axis(0));
        if let Some(index) = q.iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroWeight { index });
        }
        let pushed = |x: ndarray::ArrayView2<f64>| {
            let mut y = pi.t().dot(&x).dot(pi);
            Zip::indexed(&mut y).for_each(|(j, l), v| *v /= q[j] * q[l]);
            y
        };
        let mut target_f = pi.t().dot(g.node_features());
        for (mut row, &qj) in target_f.rows_mut().into_iter().zip(&q) {
            row /= qj;
        }
        let resid_f = recon.node_features() - &target_f;
        let resid_a = recon.structure() - &pushed(g.structure().view());
        let resid_e: Vec<Array2<f64>> = (0..g.edge_dim())
            .map(|t| &recon.edge_channel(t) - &pushed(g.edge_channel(t)))
            .collect();
        for ((grad, plan), &ws) in grads.iter_mut().zip(&u.atom_plans).zip(&u.w) {
            if ws == 0.0 {
                continue;
            }
            let bar = plan.matrix();
            let c = scale * ws;
            grad.node_features.scaled_add(c * params.node_weight(), &bar.t().dot(&resid_f));
            grad.structure.scaled_add(c * params.beta, &bar.t().dot(&resid_a).dot(bar));
            for (t, r) in resid_e.iter().enumerate() {
                let upd = bar.t().dot(r).dot(bar) * (c * params.alpha);
                let mut ch = grad.edge_features.index_axis_mut(Axis(2), t);
                ch += &upd;
            }
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the `-λ‖w‖²` term of the unmixing objective.
    pub lambda_reg: f64,
    pub seed: u64,
    pub unmix: UnmixConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            lambda_reg: 0.0,
            seed: 0,
            unmix: UnmixConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedDictionary {
    pub dictionary: Dictionary,
    /// Mean batch reconstruction loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Unmixes every graph of `dataset` in parallel.
pub fn embed(
    dataset: &[Graph],
    dictionary: &Dictionary,
    lambda_reg: f64,
    params: &FngwParams,
    config: &UnmixConfig,
) -> Result<Vec<Unmixing>> {
    dataset
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let cfg = UnmixConfig {
                seed: rng::derive_seed(config.seed, i as u64),
                ..*config
            };
            unmix(g, dictionary, lambda_reg, params, &cfg)
        })
        .collect()
}

/// Stochastic mini-batch dictionary learning from random atoms.
pub fn dictionary_learn(
    dataset: &[Graph],
    atom_sizes: &[usize],
    params: &FngwParams,
    config: &LearnConfig,
) -> Result<LearnedDictionary> {
    let init = Dictionary::random(dataset, atom_sizes, config.seed)?;
    dictionary_learn_from(dataset, init, params, config)
}

/// Stochastic mini-batch dictionary learning from given atoms.
pub fn dictionary_learn_from(
    dataset: &[Graph],
    init: Dictionary,
    params: &FngwParams,
    config: &LearnConfig,
) -> Result<LearnedDictionary> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be nonnegative, got {}",
            config.learning_rate
        )));
    }
    let mut dictionary = init;
    let mut rng = rng::seeded(rng::derive_seed(config.seed, u64::MAX));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&Graph> = batch.iter().map(|&i| &dataset[i]).collect();
            let base = rng::derive_seed(config.seed, (epoch * dataset.len() + b) as u64);
            let unmixings: Vec<Unmixing> = samples
                .par_iter()
                .enumerate()
                .map(|(k, g)| {
                    let cfg = UnmixConfig {
                        seed: rng::derive_seed(base, k as u64),
                        ..config.unmix
                    };
                    unmix(g, &dictionary, config.lambda_reg, params, &cfg)
                })
                .collect::<Result<_>>()?;
            losses.push(unmixings.iter().map(|u| u.loss).sum::<f64>() / unmixings.len() as f64);
            if config.learning_rate == 0.0 {
                continue;
            }
            let grads = atom_gradients(&samples, &unmixings, &dictionary, params)?;
            let atoms = dictionary
                .atoms()
                .iter()
                .zip(&grads)
                .map(|(atom, grad)| {
                    let lr = config.learning_rate;
                    let f = atom.node_features() - &(&grad.node_features * lr);
                    let a = (atom.structure() - &(&grad.structure * lr)).mapv(|v| v.max(0.0));
                    let e = atom.edge_features() - &(&grad.edge_features * lr);
                    Graph::new(f, a, e, atom.weights().clone())
                })
                .collect::<Result<Vec<_>>>()?;
            dictionary = Dictionary::new(atoms)?;
        }
        epoch_losses.push(losses.iter().sum::<f64>() / losses.len() as f64);
    }
    Ok(LearnedDictionary {
        dictionary,
        epoch_losses,
    })
}
