//! Exact solver for the linear optimal-transport problem
//! `min_{π ∈ Π(p, q)} ⟨C, π⟩`.
//!
//! The solver is a primal network simplex on the bipartite transportation
//! graph. The basis is a spanning tree of `n + m - 1` cells; each pivot
//! recomputes the dual potentials along the tree, enters the cell with the
//! most negative reduced cost (lowest `(row, col)` on ties) and pushes flow
//! around the cycle it closes. Marginals are perturbed (row `i` gets `+ε`,
//! the last column `+nε`) so that pivots are non-degenerate; the final basis
//! is then re-solved against the exact marginals. Returned plans are vertices
//! of the transport polytope, which conditional gradient relies on.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance on the row and column sums of a transport plan.
pub const MARGINAL_TOL: f64 = 1e-9;
/// Entries above `-NEGATIVE_TOL` are clamped to zero rather than rejected.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Relative tolerance of the complementary-slackness certificate.
pub const OPTIMALITY_TOL: f64 = 1e-8;

/// A coupling matrix together with the marginals it satisfies.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    matrix: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl TransportPlan {
    /// Validates the marginals within [`MARGINAL_TOL`] and clamps entries in
    /// `[-NEGATIVE_TOL, 0)` to zero.
    pub fn new(
        mut matrix: Array2<f64>,
        row_marginal: Array1<f64>,
        col_marginal: Array1<f64>,
    ) -> Result<Self> {
        if matrix.dim() != (row_marginal.len(), col_marginal.len()) {
            return Err(Error::dims(
                "transport plan",
                format!("{}x{}", row_marginal.len(), col_marginal.len()),
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        for ((i, j), v) in matrix.indexed_iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "transport plan".into(),
                    index: vec![i, j],
                });
            }
            if *v < 0.0 {
                if *v < -NEGATIVE_TOL {
                    return Err(Error::InvalidPlan { deviation: -*v });
                }
                *v = 0.0;
            }
        }
        let deviation = marginal_deviation(matrix.view(), row_marginal.view(), col_marginal.view());
        if deviation > MARGINAL_TOL {
            return Err(Error::InvalidPlan { deviation });
        }
        Ok(TransportPlan {
            matrix,
            row_marginal,
            col_marginal,
        })
    }

    /// The independent coupling `p qᵀ`.
    pub fn product(p: &Array1<f64>, q: &Array1<f64>) -> Self {
        let matrix = Array2::from_shape_fn((p.len(), q.len()), |(i, j)| p[i] * q[j]);
        TransportPlan {
            matrix,
            row_marginal: p.clone(),
            col_marginal: q.clone(),
        }
    }

    /// The diagonal coupling `diag(p)` of a histogram with itself.
    pub fn diagonal(p: &Array1<f64>) -> Self {
        TransportPlan {
            matrix: Array2::from_diag(p),
            row_marginal: p.clone(),
            col_marginal: p.clone(),
        }
    }

    pub(crate) fn from_parts(matrix: Array2<f64>, row: Array1<f64>, col: Array1<f64>) -> Self {
        TransportPlan {
            matrix,
            row_marginal: row,
            col_marginal: col,
        }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row_marginal(&self) -> &Array1<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Array1<f64> {
        &self.col_marginal
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn transpose(&self) -> TransportPlan {
        TransportPlan {
            matrix: self.matrix.t().to_owned(),
            row_marginal: self.col_marginal.clone(),
            col_marginal: self.row_marginal.clone(),
        }
    }

    /// `⟨cost, π⟩`.
    pub fn cost(&self, cost: ArrayView2<f64>) -> f64 {
        (&self.matrix * &cost).sum()
    }

    /// Largest absolute deviation of the plan's sums from its marginals.
    pub fn marginal_deviation(&self) -> f64 {
        marginal_deviation(
            self.matrix.view(),
            self.row_marginal.view(),
            self.col_marginal.view(),
        )
    }
}

fn marginal_deviation(m: ArrayView2<f64>, p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    let rows = m.sum_axis(Axis(1));
    let cols = m.sum_axis(Axis(0));
    let r = rows
        .iter()
        .zip(p.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let c = cols
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.max(c)
}

/// Network simplex transportation solver.
#[derive(Debug, Clone, Default)]
pub struct LinearOtSolver {
    /// Maximum number of pivots; `None` uses `50 (n + m) max(n, m)`.
    pub pivot_cap: Option<usize>,
}

/// Solves `min ⟨cost, π⟩` over `Π(p, q)` with the default solver.
pub fn solve_linear_ot(
    cost: ArrayView2<f64>,
    p: ArrayView1<f64>,
    q: ArrayView1<f64>,
) -> Result<TransportPlan> {
    LinearOtSolver::default().solve(cost, p, q)
}

struct Tree {
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// Incident basic cells per node; rows are nodes `0..n`, columns `n..n+m`.
    incident: Vec<Vec<usize>>,
}

impl Tree {
    fn other_end(&self, cell: usize, node: usize) -> usize {
        let (i, j) = self.cells[cell];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    fn detach(&mut self, cell: usize) {
        let (i, j) = self.cells[cell];
        for node in [i, self.n + j] {
            let list = &mut self.incident[node];
            let pos = list.iter().position(|&c| c == cell).expect("cell is incident");
            list.remove(pos);
        }
    }

    fn attach(&mut self, cell: usize, i: usize, j: usize, flow: f64) {
        self.cells[cell] = (i, j);
        self.flow[cell] = flow;
        self.incident[i].push(cell);
        self.incident[self.n + j].push(cell);
    }
}

impl LinearOtSolver {
    pub fn solve(
        &self,
        cost: ArrayView2<f64>,
        p: ArrayView1<f64>,
        q: ArrayView1<f64>,
    ) -> Result<TransportPlan> {
        let (n, m) = cost.dim();
        if p.len() != n || q.len() != m {
            return Err(Error::dims(
                "cost matrix",
                format!("{}x{}", p.len(), q.len()),
                format!("{n}x{m}"),
            ));
        }
        if n == 0 || m == 0 {
            return Err(Error::EmptyInput("linear OT with an empty marginal".into()));
        }
        check_marginal("source marginal", p)?;
        check_marginal("target marginal", q)?;
        let (source_mass, target_mass) = (p.sum(), q.sum());
        if (source_mass - target_mass).abs() > MARGINAL_TOL {
            return Err(Error::InfeasibleMarginals {
                source_mass,
                target_mass,
            });
        }
        if let Some(((i, j), _)) = cost.indexed_iter().find(|(_, c)| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "cost matrix".into(),
                index: vec![i, j],
            });
        }

        let scale = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let enter_tol = 1e-12 * scale;

        let eps = 1e-10 * source_mass.max(f64::MIN_POSITIVE) / (n + m) as f64;
        let mut supply: Vec<f64> = p.iter().map(|&a| a + eps).collect();
        let mut demand: Vec<f64> = q.to_vec();
        demand[m - 1] += n as f64 * eps + (source_mass - target_mass);

        let mut tree = north_west_corner(n, m, &mut supply, &mut demand);

        let cap = self.pivot_cap.unwrap_or(50 * (n + m) * n.max(m));
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; m];
        let mut visited = vec![false; n + m];
        let mut stack = Vec::with_capacity(n + m);
        let mut parent = vec![usize::MAX; n + m];
        let mut pivots = 0;
        loop {
            potentials(&tree, cost, &mut u, &mut v, &mut visited, &mut stack);

            let mut best = -enter_tol;
            let mut entering = None;
            for i in 0..n {
                let row = cost.row(i);
                let ui = u[i];
                for j in 0..m {
                    let reduced = row[j] - ui - v[j];
                    if reduced < best {
                        best = reduced;
                        entering = Some((i, j));
                    }
                }
            }
            let Some((ei, ej)) = entering else { break };
            if pivots >= cap {
                return Err(Error::PivotLimit { iterations: pivots });
            }
            pivots += 1;

            // path from column node ej back to row node ei through the tree
            let path = tree_path(&tree, ei, n + ej, &mut parent, &mut visited, &mut stack);
            let mut leaving = usize::MAX;
            let mut theta = f64::INFINITY;
            for &cell in path.iter().step_by(2) {
                let f = tree.flow[cell];
                if f < theta || (f == theta && tree.cells[cell] < tree.cells[leaving]) {
                    theta = f;
                    leaving = cell;
                }
            }
            for (k, &cell) in path.iter().enumerate() {
                if k % 2 == 0 {
                    tree.flow[cell] -= theta;
                } else {
                    tree.flow[cell] += theta;
                }
            }
            tree.detach(leaving);
            tree.attach(leaving, ei, ej, theta);
        }

        potentials(&tree, cost, &mut u, &mut v, &mut visited, &mut stack);
        let min_reduced = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| cost[[i, j]] - u[i] - v[j])
            .fold(f64::INFINITY, f64::min);
        if min_reduced < -OPTIMALITY_TOL * scale.max(1.0) {
            return Err(Error::NotOptimal {
                min_reduced_cost: min_reduced,
            });
        }

        let mut matrix = exact_flows(&mut tree, p, q);
        if matrix.iter().any(|&x| x < 0.0) {
            matrix.mapv_inplace(|x| x.max(0.0));
            round_to_marginals(&mut matrix, p, q);
        }
        log::trace!("linear OT {n}x{m}: {pivots} pivots");
        Ok(TransportPlan::from_parts(matrix, p.to_owned(), q.to_owned()))
    }
}

fn check_marginal(what: &str, h: ArrayView1<f64>) -> Result<()> {
    for (i, &x) in h.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                what: what.into(),
                index: vec![i],
            });
        }
        if x < 0.0 {
            return Err(Error::NegativeWeight {
                what: what.into(),
                index: i,
                value: x,
            });
        }
    }
    Ok(())
}

/// Staircase initial basis; always yields a spanning tree of `n + m - 1` cells.
fn north_west_corner(n: usize, m: usize, supply: &mut [f64], demand: &mut [f64]) -> Tree {
    let mut tree = Tree {
        n,
        cells: Vec::with_capacity(n + m - 1),
        flow: Vec::with_capacity(n + m - 1),
        incident: vec![Vec::new(); n + m],
    };
    let (mut i, mut j) = (0, 0);
    loop {
        let f = supply[i].min(demand[j]).max(0.0);
        let cell = tree.cells.len();
        tree.cells.push((i, j));
        tree.flow.push(f);
        tree.incident[i].push(cell);
        tree.incident[n + j].push(cell);
        supply[i] -= f;
        demand[j] -= f;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if j == m - 1 || (i < n - 1 && supply[i] < demand[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    tree
}

/// Dual potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
fn potentials(
    tree: &Tree,
    cost: ArrayView2<f64>,
    u: &mut [f64],
    v: &mut [f64],
    visited: &mut [bool],
    stack: &mut Vec<usize>,
) {
    let n = tree.n;
    visited.fill(false);
    stack.clear();
    u[0] = 0.0;
    visited[0] = true;
    stack.push(0);
    while let Some(node) = stack.pop() {
        for &cell in &tree.incident[node] {
            let other = tree.other_end(cell, node);
            if visited[other] {
                continue;
            }
            visited[other] = true;
            let (i, j) = tree.cells[cell];
            if other >= n {
                v[j] = cost[[i, j]] - u[i];
            } else {
                u[i] = cost[[i, j]] - v[j];
            }
            stack.push(other);
        }
    }
}

/// Cells on the tree path from `to` back to `from`, starting at `to`.
fn tree_path(
    tree: &Tree,
    from: usize,
    to: usize,
    parent: &mut [usize],
    visited: &mut [bool],
    stack: &mut Vec<usize>,
) -> Vec<usize> {
    visited.fill(false);
    stack.clear();
    visited[from] = true;
    stack.push(from);
    'search: while let Some(node) = stack.pop() {
        for &cell in &tree.incident[node] {
            let other = tree.other_end(cell, node);
            if visited[other] {
                continue;
            }
            visited[other] = true;
            parent[other] = cell;
            if other == to {
                break 'search;
            }
            stack.push(other);
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let cell = parent[node];
        path.push(cell);
        node = tree.other_end(cell, node);
    }
    path
}

/// Flows of the basis tree for the unperturbed marginals, by leaf peeling.
fn exact_flows(tree: &mut Tree, p: ArrayView1<f64>, q: ArrayView1<f64>) -> Array2<f64> {
    let n = tree.n;
    let m = q.len();
    let mut residual: Vec<f64> = p.iter().chain(q.iter()).copied().collect();
    let mut degree: Vec<usize> = tree.incident.iter().map(Vec::len).collect();
    let mut done = vec![false; tree.cells.len()];
    let mut queue: VecDeque<usize> = (0..n + m).filter(|&x| degree[x] == 1).collect();
    while let Some(leaf) = queue.pop_front() {
        if degree[leaf] != 1 {
            continue;
        }
        let cell = *tree.incident[leaf]
            .iter()
            .find(|&&c| !done[c])
            .expect("leaf keeps one open cell");
        done[cell] = true;
        let f = residual[leaf];
        tree.flow[cell] = f;
        let other = tree.other_end(cell, leaf);
        residual[leaf] = 0.0;
        residual[other] -= f;
        degree[leaf] = 0;
        degree[other] -= 1;
        if degree[other] == 1 {
            queue.push_back(other);
        }
    }
    let mut matrix = Array2::zeros((n, m));
    for (&(i, j), &f) in tree.cells.iter().zip(&tree.flow) {
        matrix[[i, j]] = f;
    }
    matrix
}

/// Restores exact marginals after clamping: scale down overfull rows and
/// columns, then redistribute the missing mass as a rank-one correction.
fn round_to_marginals(matrix: &mut Array2<f64>, p: ArrayView1<f64>, q: ArrayView1<f64>) {
    let rows = matrix.sum_axis(Axis(1));
    for (i, mut row) in matrix.rows_mut().into_iter().enumerate() {
        if rows[i] > p[i] && rows[i] > 0.0 {
            row *= p[i] / rows[i];
        }
    }
    let cols = matrix.sum_axis(Axis(0));
    for (j, mut col) in matrix.columns_mut().into_iter().enumerate() {
        if cols[j] > q[j] && cols[j] > 0.0 {
            col *= q[j] / cols[j];
        }
    }
    let err_r = &p - &matrix.sum_axis(Axis(1));
    let err_c = &q - &matrix.sum_axis(Axis(0));
    let mass = err_r.sum();
    if mass > 0.0 {
        for i in 0..p.len() {
            for j in 0..q.len() {
                matrix[[i, j]] += err_r[i] * err_c[j] / mass;
            }
        }
    }
}
