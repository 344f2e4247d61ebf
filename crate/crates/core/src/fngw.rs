//! Fused network Gromov-Wasserstein (FNGW) energy, gradient and the
//! conditional-gradient solver.
//!
//! For graphs `g = (F, A, E, p)` on `n` nodes and `h = (F̃, Ã, Ẽ, q)` on `m`
//! nodes the energy of a coupling `π ∈ Π(p, q)` is
//!
//! ```text
//! E(π) = Σ_{i,j,k,l} [ (1-α-β) ‖F_i - F̃_j‖²
//!                      + β (A_ik - Ã_jl)²
//!                      + α ‖E_ik - Ẽ_jl‖² ] π_ij π_kl
//! ```
//!
//! (the node term only depends on `π_ij` because `π` has unit mass). The
//! quadruple sums are never formed: the structure and edge contractions are
//! factorized into `O(n²m + nm²)` matrix products per channel. `A` and `E`
//! may be asymmetric, so the gradient contracts both `J ⊗ π` and `Jᵀ ⊗ π`.

use ndarray::{Array1, Array2, ArrayView2, ArrayView3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeMetric};
use crate::ot::{LinearOtSolver, TransportPlan, MARGINAL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FngwParams {
    /// Weight of the edge-feature term.
    pub alpha: f64,
    /// Weight of the structure term.
    pub beta: f64,
    pub node_metric: NodeMetric,
    pub max_iters: usize,
    /// Stop once the relative decrease of the energy falls below this.
    pub rel_tol: f64,
    /// Unused by the deterministic solver; carried for callers that randomize.
    pub seed: Option<u64>,
    /// Accept graphs without node features (`S = 0`) although `1-α-β > 0`.
    pub allow_missing_node_features: bool,
    /// Accept graphs without edge features (`T = 0`) although `α > 0`.
    pub allow_missing_edge_features: bool,
}

impl Default for FngwParams {
    fn default() -> Self {
        FngwParams {
            alpha: 0.3,
            beta: 0.3,
            node_metric: NodeMetric::SquaredEuclidean,
            max_iters: 1000,
            rel_tol: 1e-9,
            seed: None,
            allow_missing_node_features: false,
            allow_missing_edge_features: false,
        }
    }
}

impl FngwParams {
    pub fn with_tradeoff(alpha: f64, beta: f64) -> Self {
        FngwParams {
            alpha,
            beta,
            ..Self::default()
        }
    }

    /// Weight `1 - α - β` of the node term.
    pub fn node_weight(&self) -> f64 {
        (1.0 - self.alpha - self.beta).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.alpha, self.beta);
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "trade-off weights must satisfy alpha, beta >= 0 and alpha + beta <= 1 (got {a}, {b})"
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// Pair-dependent quantities that stay fixed across solver iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFactors {
    /// `M_ij = d(F_i, F̃_j)`.
    pub node_cost: Array2<f64>,
    /// `‖E_ik‖²`, n×n.
    pub source_edge_norms: Array2<f64>,
    /// `‖Ẽ_jl‖²`, m×m.
    pub target_edge_norms: Array2<f64>,
    /// `A ∘ A`.
    pub source_structure_sq: Array2<f64>,
    /// `Ã ∘ Ã`.
    pub target_structure_sq: Array2<f64>,
}

impl CostFactors {
    pub fn new(source: &Graph, target: &Graph, metric: NodeMetric) -> Result<Self> {
        Ok(CostFactors {
            node_cost: node_cost_matrix(
                source.node_features().view(),
                target.node_features().view(),
                metric,
            )?,
            source_edge_norms: squared_norms(source.edge_features().view()),
            target_edge_norms: squared_norms(target.edge_features().view()),
            source_structure_sq: source.structure().mapv(|x| x * x),
            target_structure_sq: target.structure().mapv(|x| x * x),
        })
    }
}

fn squared_norms(e: ArrayView3<f64>) -> Array2<f64> {
    e.map_axis(Axis(2), |v| v.iter().map(|x| x * x).sum())
}

/// Node cost matrix between the rows of `f` (n×S) and `f2` (m×S).
pub fn node_cost_matrix(
    f: ArrayView2<f64>,
    f2: ArrayView2<f64>,
    metric: NodeMetric,
) -> Result<Array2<f64>> {
    if f.ncols() != f2.ncols() {
        return Err(Error::dims("node feature dimension", f.ncols(), f2.ncols()));
    }
    let (n, m) = (f.nrows(), f2.nrows());
    let mut out = Array2::zeros((n, m));
    match metric {
        NodeMetric::SquaredEuclidean => {
            for i in 0..n {
                for j in 0..m {
                    out[[i, j]] = f
                        .row(i)
                        .iter()
                        .zip(f2.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                }
            }
        }
        NodeMetric::Hamming => {
            for i in 0..n {
                for j in 0..m {
                    out[[i, j]] = f.row(i).iter().zip(f2.row(j)).filter(|(a, b)| a != b).count() as f64;
                }
            }
        }
    }
    Ok(out)
}

fn row_sums(x: ArrayView2<f64>) -> Array1<f64> {
    Array1::from_iter(x.rows().into_iter().map(|r| r.iter().fold(0.0, |s, v| s + v)))
}

fn col_sums(x: ArrayView2<f64>) -> Array1<f64> {
    let mut c = Array1::zeros(x.ncols());
    for row in x.rows() {
        for (cj, v) in c.iter_mut().zip(row) {
            *cj += v;
        }
    }
    c
}

/// `Σ_{k,l} (S_ik - T_jl)² x_kl` for square matrices `s` (n×n), `t` (m×m)
/// and any n×m matrix `x`, using the row and column sums of `x`.
fn pair_contract(
    s: ArrayView2<f64>,
    t: ArrayView2<f64>,
    s_sq: ArrayView2<f64>,
    t_sq: ArrayView2<f64>,
    x: ArrayView2<f64>,
    r: &Array1<f64>,
    c: &Array1<f64>,
) -> Array2<f64> {
    let left = s_sq.dot(r);
    let right = t_sq.dot(c);
    let mut out = s.dot(&x).dot(&t.t());
    Zip::indexed(&mut out).for_each(|(i, j), v| *v = left[i] + right[j] - 2.0 * *v);
    out
}

fn check_plan_shape(x: ArrayView2<f64>, n: usize, m: usize) -> Result<()> {
    if x.dim() != (n, m) {
        return Err(Error::dims(
            "transport plan",
            format!("{n}x{m}"),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    Ok(())
}

/// `L(E, Ẽ) ⊗ π`, i.e. `Σ_{k,l} ‖E_ik - Ẽ_jl‖² π_kl`, in `O(n²mT + nm²T)`.
pub fn edge_tensor_contract(
    e: ArrayView3<f64>,
    e2: ArrayView3<f64>,
    pi: &TransportPlan,
    factors: &CostFactors,
) -> Result<Array2<f64>> {
    let (n, n1, t) = e.dim();
    let (m, m1, t2) = e2.dim();
    if n != n1 || m != m1 || t != t2 {
        return Err(Error::dims(
            "edge tensors",
            format!("n x n x T and m x m x T (T = {t})"),
            format!("{n}x{n1}x{t} and {m}x{m1}x{t2}"),
        ));
    }
    check_plan_shape(pi.matrix().view(), n, m)?;
    let p = pi.row_marginal();
    let q = pi.col_marginal();
    let left = factors.source_edge_norms.dot(p);
    let right = factors.target_edge_norms.dot(q);
    let mut cross = Array2::<f64>::zeros((n, m));
    for ch in 0..t {
        let ec = e.index_axis(Axis(2), ch);
        let e2c = e2.index_axis(Axis(2), ch);
        cross = cross + ec.dot(pi.matrix()).dot(&e2c.t());
    }
    Ok(Array2::from_shape_fn((n, m), |(i, j)| {
        left[i] + right[j] - 2.0 * cross[[i, j]]
    }))
}

/// `J(A, Ã) ⊗ π`, i.e. `Σ_{k,l} (A_ik - Ã_jl)² π_kl`.
pub fn structure_contract(
    a: ArrayView2<f64>,
    a2: ArrayView2<f64>,
    pi: &TransportPlan,
    factors: &CostFactors,
) -> Result<Array2<f64>> {
    let (n, m) = (a.nrows(), a2.nrows());
    if a.ncols() != n || a2.ncols() != m {
        return Err(Error::dims("structure matrices", "square", format!("{:?} and {:?}", a.dim(), a2.dim())));
    }
    check_plan_shape(pi.matrix().view(), n, m)?;
    Ok(pair_contract(
        a,
        a2,
        factors.source_structure_sq.view(),
        factors.target_structure_sq.view(),
        pi.matrix().view(),
        pi.row_marginal(),
        pi.col_marginal(),
    ))
}

/// An FNGW problem between two fixed graphs.
///
/// Methods taking a raw matrix accept any n×m matrix: the contractions use
/// the actual row and column sums of their argument, so they are exact off
/// the transport polytope too (as needed for directions and finite
/// differences).
#[derive(Debug, Clone)]
pub struct FngwProblem<'a> {
    source: &'a Graph,
    target: &'a Graph,
    params: FngwParams,
    factors: CostFactors,
    source_channels: Vec<Array2<f64>>,
    target_channels: Vec<Array2<f64>>,
    source_channels_sq: Vec<Array2<f64>>,
    target_channels_sq: Vec<Array2<f64>>,
}

impl<'a> FngwProblem<'a> {
    pub fn new(source: &'a Graph, target: &'a Graph, params: &FngwParams) -> Result<Self> {
        params.validate()?;
        if source.feature_dim() != target.feature_dim() {
            return Err(Error::dims(
                "node feature dimension S",
                source.feature_dim(),
                target.feature_dim(),
            ));
        }
        if source.edge_dim() != target.edge_dim() {
            return Err(Error::dims(
                "edge feature dimension T",
                source.edge_dim(),
                target.edge_dim(),
            ));
        }
        if source.feature_dim() == 0 && params.node_weight() > 0.0 && !params.allow_missing_node_features {
            return Err(Error::MissingFeatures(format!(
                "graphs have no node features but the node term has weight {}; set allow_missing_node_features to proceed",
                params.node_weight()
            )));
        }
        if source.edge_dim() == 0 && params.alpha > 0.0 && !params.allow_missing_edge_features {
            return Err(Error::MissingFeatures(format!(
                "graphs have no edge features but alpha = {}; set allow_missing_edge_features to proceed",
                params.alpha
            )));
        }
        let factors = CostFactors::new(source, target, params.node_metric)?;
        let source_channels = source.edge_channels();
        let target_channels = target.edge_channels();
        let source_channels_sq = source_channels.iter().map(|c| c.mapv(|x| x * x)).collect();
        let target_channels_sq = target_channels.iter().map(|c| c.mapv(|x| x * x)).collect();
        Ok(FngwProblem {
            source,
            target,
            params: *params,
            factors,
            source_channels,
            target_channels,
            source_channels_sq,
            target_channels_sq,
        })
    }

    pub fn source(&self) -> &Graph {
        self.source
    }

    pub fn target(&self) -> &Graph {
        self.target
    }

    pub fn params(&self) -> &FngwParams {
        &self.params
    }

    pub fn factors(&self) -> &CostFactors {
        &self.factors
    }

    fn dims(&self) -> (usize, usize) {
        (self.source.n(), self.target.n())
    }

    /// `J ⊗ x`, or `Jᵀ ⊗ x` (`Σ_{i,j} (A_ik - Ã_jl)² x_ij`) when `transposed`.
    pub fn structure_term(&self, x: ArrayView2<f64>, transposed: bool) -> Array2<f64> {
        let (r, c) = (row_sums(x), col_sums(x));
        let a = self.source.structure().view();
        let a2 = self.target.structure().view();
        let gs = self.factors.source_structure_sq.view();
        let hs = self.factors.target_structure_sq.view();
        if transposed {
            pair_contract(a.t(), a2.t(), gs.t(), hs.t(), x, &r, &c)
        } else {
            pair_contract(a, a2, gs, hs, x, &r, &c)
        }
    }

    /// `L ⊗ x` (or `Lᵀ ⊗ x`).
    pub fn edge_term(&self, x: ArrayView2<f64>, transposed: bool) -> Array2<f64> {
        let (n, m) = self.dims();
        let (r, c) = (row_sums(x), col_sums(x));
        let mut out = Array2::zeros((n, m));
        for t in 0..self.source_channels.len() {
            let (e, e2) = (self.source_channels[t].view(), self.target_channels[t].view());
            let (es, e2s) = (self.source_channels_sq[t].view(), self.target_channels_sq[t].view());
            let term = if transposed {
                pair_contract(e.t(), e2.t(), es.t(), e2s.t(), x, &r, &c)
            } else {
                pair_contract(e, e2, es, e2s, x, &r, &c)
            };
            out += &term;
        }
        out
    }

    /// Energy of any n×m matrix `x`.
    ///
    /// Each bracket `Σ_{k,l} (A_ik - Ã_jl)² x_kl` is assembled entrywise and
    /// clamped at zero, so the result is nonnegative for nonnegative `x` and
    /// exactly zero for a graph matched to itself by the diagonal plan.
    pub fn energy(&self, x: ArrayView2<f64>) -> f64 {
        let (n, m) = self.dims();
        let x = x.as_standard_layout();
        let (r, c) = (row_sums(x.view()), col_sums(x.view()));
        let mut bracket = &self.factors.node_cost * self.params.node_weight();
        let mut add_pair_term = |s: ArrayView2<f64>, t: ArrayView2<f64>, weight: f64| {
            // s·diag(r)·sᵀ diagonal terms, computed in the same order as the cross term
            let left: Vec<f64> = (0..n)
                .map(|i| (0..n).fold(0.0, |acc, k| acc + (s[[i, k]] * r[k]) * s[[i, k]]))
                .collect();
            let right: Vec<f64> = (0..m)
                .map(|j| (0..m).fold(0.0, |acc, l| acc + (t[[j, l]] * c[l]) * t[[j, l]]))
                .collect();
            let y = s.dot(&x);
            for i in 0..n {
                for j in 0..m {
                    if x[[i, j]] == 0.0 {
                        continue;
                    }
                    let cross = (0..m).fold(0.0, |acc, l| acc + y[[i, l]] * t[[j, l]]);
                    bracket[[i, j]] += weight * (left[i] + right[j] - 2.0 * cross).max(0.0);
                }
            }
        };
        if self.params.beta > 0.0 {
            add_pair_term(
                self.source.structure().view(),
                self.target.structure().view(),
                self.params.beta,
            );
        }
        if self.params.alpha > 0.0 && !self.source_channels.is_empty() {
            // accumulate channels inside one bracket before clamping
            let mut edge_bracket = Array2::<f64>::zeros((n, m));
            let mut any = vec![false; n * m];
            for t in 0..self.source_channels.len() {
                let s = self.source_channels[t].view();
                let tt = self.target_channels[t].view();
                let y = s.dot(&x);
                for i in 0..n {
                    let left = (0..n).fold(0.0, |acc, k| acc + (s[[i, k]] * r[k]) * s[[i, k]]);
                    for j in 0..m {
                        if x[[i, j]] == 0.0 {
                            continue;
                        }
                        any[i * m + j] = true;
                        let right = (0..m).fold(0.0, |acc, l| acc + (tt[[j, l]] * c[l]) * tt[[j, l]]);
                        let cross = (0..m).fold(0.0, |acc, l| acc + y[[i, l]] * tt[[j, l]]);
                        edge_bracket[[i, j]] += left + right - 2.0 * cross;
                    }
                }
            }
            for i in 0..n {
                for j in 0..m {
                    if any[i * m + j] {
                        bracket[[i, j]] += self.params.alpha * edge_bracket[[i, j]].max(0.0);
                    }
                }
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..m {
                total += x[[i, j]] * bracket[[i, j]];
            }
        }
        total
    }

    /// Exact gradient `(1-α-β)M + β(J⊗x + Jᵀ⊗x) + α(L⊗x + Lᵀ⊗x)`.
    pub fn gradient(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut g = &self.factors.node_cost * self.params.node_weight();
        if self.params.beta > 0.0 {
            let s = &self.structure_term(x, false) + &self.structure_term(x, true);
            g.scaled_add(self.params.beta, &s);
        }
        if self.params.alpha > 0.0 && !self.source_channels.is_empty() {
            let e = &self.edge_term(x, false) + &self.edge_term(x, true);
            g.scaled_add(self.params.alpha, &e);
        }
        g
    }

    /// Quadratic part `⟨β J⊗d + α L⊗d, d⟩` of the energy along `d`.
    pub fn curvature(&self, d: ArrayView2<f64>) -> f64 {
        let mut k = Array2::zeros(d.dim());
        if self.params.beta > 0.0 {
            k.scaled_add(self.params.beta, &self.structure_term(d, false));
        }
        if self.params.alpha > 0.0 && !self.source_channels.is_empty() {
            k.scaled_add(self.params.alpha, &self.edge_term(d, false));
        }
        (&k * &d).sum()
    }

    /// `(a, b)` with `E(x + γd) = aγ² + bγ + E(x)` for every `γ`.
    pub fn line_search(&self, x: ArrayView2<f64>, d: ArrayView2<f64>) -> (f64, f64) {
        let grad = self.gradient(x);
        (self.curvature(d), (&grad * &d).sum())
    }

    fn check_plan(&self, plan: &TransportPlan) -> Result<()> {
        let (n, m) = self.dims();
        check_plan_shape(plan.matrix().view(), n, m)?;
        let mut deviation = plan.marginal_deviation();
        deviation = deviation.max(max_abs_diff(plan.row_marginal(), self.source.weights()));
        deviation = deviation.max(max_abs_diff(plan.col_marginal(), self.target.weights()));
        if deviation > MARGINAL_TOL {
            return Err(Error::InvalidPlan { deviation });
        }
        Ok(())
    }

    /// Runs conditional gradient from the independent coupling `p qᵀ`.
    pub fn solve(&self) -> Result<FngwSolution> {
        let init = TransportPlan::product(self.source.weights(), self.target.weights());
        self.solve_from(&init)
    }

    /// Runs conditional gradient from `init`.
    ///
    /// Every iteration solves the linearized problem exactly and takes the
    /// exact line-search step, so the energy trace never increases. The
    /// loop stops when the relative decrease drops below `rel_tol`, when the
    /// step vanishes, or after `max_iters` iterations.
    pub fn solve_from(&self, init: &TransportPlan) -> Result<FngwSolution> {
        self.check_plan(init)?;
        let p = self.source.weights();
        let q = self.target.weights();
        let solver = LinearOtSolver::default();
        let mut plan = init.matrix().clone();
        let mut value = self.energy(plan.view());
        let mut trace = vec![value];
        let mut iterations = 0;
        while iterations < self.params.max_iters {
            iterations += 1;
            let grad = self.gradient(plan.view());
            let vertex = solver.solve(grad.view(), p.view(), q.view())?;
            let direction = vertex.matrix() - &plan;
            let slope = (&grad * &direction).sum();
            if !(slope < 0.0) {
                break;
            }
            let curvature = self.curvature(direction.view());
            let step = line_search_step(curvature, slope)?;
            if step == 0.0 {
                break;
            }
            let candidate = Zip::from(&plan)
                .and(vertex.matrix())
                .map_collect(|&x, &v| ((1.0 - step) * x + step * v).max(0.0));
            let candidate_value = self.energy(candidate.view());
            if candidate_value > value {
                break;
            }
            let decrease = value - candidate_value;
            plan = candidate;
            value = candidate_value;
            trace.push(value);
            if decrease <= self.params.rel_tol * (value + decrease).abs() {
                break;
            }
        }
        Ok(FngwSolution {
            value,
            plan: TransportPlan::from_parts(plan, p.clone(), q.clone()),
            trace,
            iterations,
        })
    }
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Result of the conditional-gradient solver.
#[derive(Debug, Clone, PartialEq)]
pub struct FngwSolution {
    /// Energy of the returned plan.
    pub value: f64,
    pub plan: TransportPlan,
    /// Energy after initialization and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Energy of a feasible plan.
///
/// Evaluated in both orientations and averaged, which makes the value
/// exactly invariant under swapping the graphs and transposing the plan.
pub fn fngw_cost(g: &Graph, g2: &Graph, pi: &TransportPlan, params: &FngwParams) -> Result<f64> {
    let forward = FngwProblem::new(g, g2, params)?;
    forward.check_plan(pi)?;
    let backward = FngwProblem::new(g2, g, params)?;
    let transposed = pi.matrix().t().to_owned();
    Ok(0.5 * (forward.energy(pi.matrix().view()) + backward.energy(transposed.view())))
}

/// Gradient of the energy with respect to the plan.
pub fn fngw_gradient(
    g: &Graph,
    g2: &Graph,
    pi: &TransportPlan,
    params: &FngwParams,
) -> Result<Array2<f64>> {
    let problem = FngwProblem::new(g, g2, params)?;
    problem.check_plan(pi)?;
    Ok(problem.gradient(pi.matrix().view()))
}

/// Coefficients `(a, b)` of `E(π_old + γ(π_new - π_old)) = aγ² + bγ + E(π_old)`.
pub fn line_search_coefficients(
    g: &Graph,
    g2: &Graph,
    pi_old: &TransportPlan,
    pi_new: &TransportPlan,
    params: &FngwParams,
) -> Result<(f64, f64)> {
    let problem = FngwProblem::new(g, g2, params)?;
    problem.check_plan(pi_old)?;
    problem.check_plan(pi_new)?;
    let delta = pi_new.matrix() - pi_old.matrix();
    Ok(problem.line_search(pi_old.matrix().view(), delta.view()))
}

/// Minimizer over `[0, 1]` of `aγ² + bγ`.
///
/// For `a > 0` this is `-b / (2a)` clamped to the interval; otherwise the
/// quadratic is concave or linear and the better endpoint wins.
pub fn line_search_step(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "line search coefficients must be finite (a = {a}, b = {b})"
        )));
    }
    Ok(if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a + b < 0.0 {
        1.0
    } else {
        0.0
    })
}

/// FNGW distance by conditional gradient from `p qᵀ`.
pub fn fngw_distance(g: &Graph, g2: &Graph, params: &FngwParams) -> Result<FngwSolution> {
    FngwProblem::new(g, g2, params)?.solve()
}

/// FNGW distance by conditional gradient from a given feasible plan.
pub fn fngw_distance_from(
    g: &Graph,
    g2: &Graph,
    params: &FngwParams,
    init: &TransportPlan,
) -> Result<FngwSolution> {
    FngwProblem::new(g, g2, params)?.solve_from(init)
}
