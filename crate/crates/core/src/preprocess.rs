//! Graph preprocessing: shortest-path structure matrices, Weisfeiler-Lehman
//! relabeling, heat diffusion of node features and one-hot edge tensors.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// Symmetry tolerance for [`laplacian_diffuse`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// What to do with node pairs that have no connecting path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Unreachable {
    /// Fill with the largest finite shortest-path distance of the graph.
    #[default]
    FillMax,
    /// Fail with [`Error::Unreachable`].
    Strict,
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest-path lengths by Dijkstra from every node.
///
/// A positive entry `adjacency[i][j]` is an edge `i -> j` with that length;
/// zero means no edge. Undirected graphs use both orientations (the shorter
/// one when both are present).
pub fn shortest_path_matrix(
    adjacency: ArrayView2<f64>,
    directed: bool,
    unreachable: Unreachable,
) -> Result<Array2<f64>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::dims(
            "adjacency",
            format!("{n}x{n}"),
            format!("{}x{}", n, adjacency.ncols()),
        ));
    }
    for ((i, j), &w) in adjacency.indexed_iter() {
        if !w.is_finite() {
            return Err(Error::NonFinite {
                what: "adjacency".into(),
                index: vec![i, j],
            });
        }
        if w < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative edge length {w} at ({i}, {j})"
            )));
        }
    }

    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut w = adjacency[[i, j]];
            if !directed {
                let back = adjacency[[j, i]];
                if back > 0.0 && (w == 0.0 || back < w) {
                    w = back;
                }
            }
            if w > 0.0 {
                neighbors[i].push((j, w));
            }
        }
    }

    let mut dist = Array2::from_elem((n, n), f64::INFINITY);
    let mut heap = BinaryHeap::new();
    for source in 0..n {
        let mut row = dist.row_mut(source);
        row[source] = 0.0;
        heap.push(Frontier {
            dist: 0.0,
            node: source,
        });
        while let Some(Frontier { dist: d, node }) = heap.pop() {
            if d > row[node] {
                continue;
            }
            for &(next, w) in &neighbors[node] {
                let candidate = d + w;
                if candidate < row[next] {
                    row[next] = candidate;
                    heap.push(Frontier {
                        dist: candidate,
                        node: next,
                    });
                }
            }
        }
    }

    let max_finite = dist
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    for ((i, j), d) in dist.indexed_iter_mut() {
        if !d.is_finite() {
            match unreachable {
                Unreachable::FillMax => *d = max_finite,
                Unreachable::Strict => return Err(Error::Unreachable { i, j }),
            }
        }
    }
    Ok(dist)
}

/// Weisfeiler-Lehman refinement of discrete node labels over a whole dataset.
///
/// Returns one n×(K+1) matrix per graph: column 0 holds the input labels and
/// column `k` the label after `k` rounds. Each round maps the signature
/// (own label, sorted multiset of out-neighbor labels) to a dense id through
/// a dictionary shared by every graph of the dataset; ids are handed out in
/// order of first appearance (graph order, then node order).
pub fn wl_relabel(
    node_labels: &[Vec<u64>],
    adjacencies: &[Array2<f64>],
    iterations: usize,
) -> Result<Vec<Array2<u64>>> {
    if node_labels.is_empty() {
        return Err(Error::EmptyInput("WL relabeling needs at least one graph".into()));
    }
    if node_labels.len() != adjacencies.len() {
        return Err(Error::dims(
            "adjacency list count",
            node_labels.len(),
            adjacencies.len(),
        ));
    }
    let mut neighbor_lists = Vec::with_capacity(adjacencies.len());
    for (labels, adj) in node_labels.iter().zip(adjacencies) {
        let n = labels.len();
        if adj.dim() != (n, n) {
            return Err(Error::dims(
                "adjacency",
                format!("{n}x{n}"),
                format!("{}x{}", adj.nrows(), adj.ncols()),
            ));
        }
        let lists: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && adj[[i, j]] != 0.0).collect())
            .collect();
        neighbor_lists.push(lists);
    }

    let mut out: Vec<Array2<u64>> = node_labels
        .iter()
        .map(|labels| {
            let mut m = Array2::zeros((labels.len(), iterations + 1));
            for (i, &l) in labels.iter().enumerate() {
                m[[i, 0]] = l;
            }
            m
        })
        .collect();

    for k in 1..=iterations {
        let mut dictionary: HashMap<(u64, Vec<u64>), u64> = HashMap::new();
        for (features, lists) in out.iter_mut().zip(&neighbor_lists) {
            for (i, list) in lists.iter().enumerate() {
                let mut multiset: Vec<u64> = list.iter().map(|&j| features[[j, k - 1]]).collect();
                multiset.sort_unstable();
                let next_id = dictionary.len() as u64;
                let id = *dictionary
                    .entry((features[[i, k - 1]], multiset))
                    .or_insert(next_id);
                features[[i, k]] = id;
            }
        }
    }
    Ok(out)
}

/// Heat diffusion `exp(-tau * L) F` with the symmetric normalized Laplacian
/// `L = D^{-1/2} (D - A) D^{-1/2}`; isolated nodes get a zero Laplacian row.
pub fn laplacian_diffuse(
    features: ArrayView2<f64>,
    adjacency: ArrayView2<f64>,
    tau: f64,
) -> Result<Array2<f64>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n || features.nrows() != n {
        return Err(Error::dims(
            "diffusion inputs",
            format!("{n}x{n} adjacency and {n} feature rows"),
            format!(
                "{}x{} adjacency and {} feature rows",
                adjacency.nrows(),
                adjacency.ncols(),
                features.nrows()
            ),
        ));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
    }
    let lap = normalized_laplacian(adjacency)?;
    let heat = symmetric_matrix_function(&lap, |lambda| (-tau * lambda).exp());
    Ok(heat.dot(&features))
}

/// Symmetric normalized Laplacian; isolated nodes get a zero row.
pub fn normalized_laplacian(adjacency: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = adjacency.nrows();
    let mut max_asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a = adjacency[[i, j]];
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "adjacency entry ({i}, {j}) = {a} is not a nonnegative weight"
                )));
            }
            max_asym = max_asym.max((a - adjacency[[j, i]]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric {
            max_asymmetry: max_asym,
        });
    }
    let degree: Array1<f64> = adjacency.sum_axis(ndarray::Axis(1));
    let inv_sqrt = degree.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let mut lap = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let laplacian_entry = if i == j { degree[i] } else { 0.0 } - adjacency[[i, j]];
            lap[[i, j]] = inv_sqrt[i] * laplacian_entry * inv_sqrt[j];
        }
    }
    Ok(lap)
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub(crate) fn symmetric_matrix_function(m: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let q = &eig.eigenvectors;
    let mut out = Array2::zeros((n, n));
    for k in 0..n {
        let fk = f(eig.eigenvalues[k]);
        for i in 0..n {
            let qik = q[(i, k)] * fk;
            for j in 0..n {
                out[[i, j]] += qik * q[(j, k)];
            }
        }
    }
    out
}

/// Dense n×n×T tensor from sparse `(i, j, label)` triplets: labeled pairs get
/// the one-hot vector of their label, all other pairs `empty_edge_vector`.
pub fn one_hot_edge_tensor(
    edge_labels: &[(usize, usize, usize)],
    n: usize,
    vocab_size: usize,
    empty_edge_vector: ArrayView1<f64>,
) -> Result<Array3<f64>> {
    if empty_edge_vector.len() != vocab_size {
        return Err(Error::dims("empty edge vector", vocab_size, empty_edge_vector.len()));
    }
    let mut e = Array3::zeros((n, n, vocab_size));
    for i in 0..n {
        for j in 0..n {
            e.slice_mut(ndarray::s![i, j, ..]).assign(&empty_edge_vector);
        }
    }
    let mut seen = HashSet::new();
    for &(i, j, label) in edge_labels {
        if i >= n || j >= n {
            return Err(Error::dims("edge endpoint", format!("< {n}"), format!("({i}, {j})")));
        }
        if label >= vocab_size {
            return Err(Error::LabelOutOfRange { label, vocab_size });
        }
        if !seen.insert((i, j)) {
            return Err(Error::DuplicateEdge { i, j });
        }
        let mut slot = e.slice_mut(ndarray::s![i, j, ..]);
        slot.fill(0.0);
        slot[label] = 1.0;
    }
    Ok(e)
}

/// Seeded standard-normal vector for use as the empty-edge feature.
pub fn random_empty_edge_vector(len: usize, seed: u64) -> Array1<f64> {
    let mut rng = rng::seeded(seed);
    Array1::from_shape_fn(len, |_| StandardNormal.sample(&mut rng))
}
