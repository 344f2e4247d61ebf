//! Attributed graph model: node features `F` (n×S), structure matrix `A`
//! (n×n), edge-feature tensor `E` (n×n×T) and node weights `p`.
//!
//! Neither `A` nor `E` has to be symmetric, so directed graphs are
//! represented without loss.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Σ p - 1|` for node weights.
pub const HISTOGRAM_TOL: f64 = 1e-12;

/// Ground metric between node feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeMetric {
    /// `‖a - b‖²`.
    #[default]
    SquaredEuclidean,
    /// Number of coordinates that differ (exact comparison), used for WL features.
    Hamming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_features: Array2<f64>,
    structure: Array2<f64>,
    edge_features: Array3<f64>,
    weights: Array1<f64>,
}

impl Graph {
    /// Builds a validated graph.
    pub fn new(
        node_features: Array2<f64>,
        structure: Array2<f64>,
        edge_features: Array3<f64>,
        weights: Array1<f64>,
    ) -> Result<Self> {
        let g = Graph {
            node_features,
            structure,
            edge_features,
            weights,
        };
        validate_graph(&g)?;
        Ok(g)
    }

    /// Builds a validated graph with uniform node weights `1/n`.
    pub fn with_uniform_weights(
        node_features: Array2<f64>,
        structure: Array2<f64>,
        edge_features: Array3<f64>,
    ) -> Result<Self> {
        let n = structure.nrows();
        Self::new(node_features, structure, edge_features, uniform_histogram(n))
    }

    /// Assembles a graph from parts that are consistent by construction.
    pub(crate) fn from_parts(
        node_features: Array2<f64>,
        structure: Array2<f64>,
        edge_features: Array3<f64>,
        weights: Array1<f64>,
    ) -> Self {
        debug_assert!(validate_dims(&node_features, &structure, &edge_features, &weights).is_ok());
        Graph {
            node_features,
            structure,
            edge_features,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Node feature dimension `S`.
    pub fn feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    /// Edge feature dimension `T`.
    pub fn edge_dim(&self) -> usize {
        self.edge_features.len_of(Axis(2))
    }

    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }

    pub fn structure(&self) -> &Array2<f64> {
        &self.structure
    }

    pub fn edge_features(&self) -> &Array3<f64> {
        &self.edge_features
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    /// Channel `t` of the edge tensor as an n×n view.
    pub fn edge_channel(&self, t: usize) -> ArrayView2<'_, f64> {
        self.edge_features.index_axis(Axis(2), t)
    }

    /// Edge tensor split into contiguous n×n channel matrices.
    pub fn edge_channels(&self) -> Vec<Array2<f64>> {
        (0..self.edge_dim())
            .map(|t| self.edge_channel(t).to_owned())
            .collect()
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>, Array3<f64>, Array1<f64>) {
        (
            self.node_features,
            self.structure,
            self.edge_features,
            self.weights,
        )
    }

    /// Relabels the nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::dims("permutation", n, perm.len()));
        }
        let mut seen = vec![false; n];
        for &k in perm {
            if k >= n || seen[k] {
                return Err(Error::InvalidParameter(format!(
                    "not a permutation of 0..{n}: {perm:?}"
                )));
            }
            seen[k] = true;
        }
        let f = self.node_features.select(Axis(0), perm);
        let a = self
            .structure
            .select(Axis(0), perm)
            .select(Axis(1), perm);
        let e = self
            .edge_features
            .select(Axis(0), perm)
            .select(Axis(1), perm);
        let p = self.weights.select(Axis(0), perm);
        Ok(Graph::from_parts(f, a, e, p))
    }

    /// Replaces the node weights, re-validating the histogram.
    pub fn with_weights(self, weights: Array1<f64>) -> Result<Graph> {
        Graph::new(
            self.node_features,
            self.structure,
            self.edge_features,
            weights,
        )
    }
}

pub fn uniform_histogram(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

/// Checks every graph invariant: consistent shapes, finite entries and a
/// histogram of node weights.
pub fn validate_graph(g: &Graph) -> Result<()> {
    validate_dims(&g.node_features, &g.structure, &g.edge_features, &g.weights)?;
    check_finite("node features", g.node_features.indexed_iter().map(|((i, j), &v)| (vec![i, j], v)))?;
    check_finite("structure", g.structure.indexed_iter().map(|((i, j), &v)| (vec![i, j], v)))?;
    check_finite(
        "edge features",
        g.edge_features
            .indexed_iter()
            .map(|((i, j, t), &v)| (vec![i, j, t], v)),
    )?;
    validate_histogram("node weights", g.weights.view())
}

fn validate_dims(
    f: &Array2<f64>,
    a: &Array2<f64>,
    e: &Array3<f64>,
    p: &Array1<f64>,
) -> Result<()> {
    let n = p.len();
    if n == 0 {
        return Err(Error::EmptyInput("graph has no nodes".into()));
    }
    if a.dim() != (n, n) {
        return Err(Error::dims(
            "structure matrix",
            format!("{n}x{n}"),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if f.nrows() != n {
        return Err(Error::dims("node features rows", n, f.nrows()));
    }
    let (e0, e1, _) = e.dim();
    if (e0, e1) != (n, n) {
        return Err(Error::dims(
            "edge feature tensor",
            format!("{n}x{n}xT"),
            format!("{e0}x{e1}xT"),
        ));
    }
    Ok(())
}

fn check_finite(what: &str, mut entries: impl Iterator<Item = (Vec<usize>, f64)>) -> Result<()> {
    match entries.find(|(_, v)| !v.is_finite()) {
        Some((index, _)) => Err(Error::NonFinite {
            what: what.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// Nonnegative, finite, summing to one within [`HISTOGRAM_TOL`].
pub fn validate_histogram(what: &str, p: ndarray::ArrayView1<f64>) -> Result<()> {
    if p.is_empty() {
        return Err(Error::EmptyInput(format!("{what} is empty")));
    }
    for (i, &v) in p.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: what.to_string(),
                index: vec![i],
            });
        }
        if v < 0.0 {
            return Err(Error::NegativeWeight {
                what: what.to_string(),
                index: i,
                value: v,
            });
        }
    }
    let sum = p.sum();
    if (sum - 1.0).abs() > HISTOGRAM_TOL {
        return Err(Error::NotHistogram {
            what: what.to_string(),
            sum,
        });
    }
    Ok(())
}
