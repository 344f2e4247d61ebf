//! Synthetic directed, node- and edge-labeled graphs.
//!
//! Edge tensors use a fixed four-channel palette (see [`EdgeColor`]); every
//! ordered pair, including the diagonal, carries exactly one color, so all
//! channel sums equal one.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{uniform_histogram, Graph};
use crate::preprocess::one_hot_edge_tensor;
use crate::rng;

/// Edge colors and their channel index in generated edge tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeColor {
    None = 0,
    Black = 1,
    Blue = 2,
    Green = 3,
}

pub const EDGE_CHANNELS: usize = 4;

fn empty_edge() -> Array1<f64> {
    let mut v = Array1::zeros(EDGE_CHANNELS);
    v[EdgeColor::None as usize] = 1.0;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleConfig {
    pub count: usize,
    pub min_nodes: usize,
    /// Inclusive.
    pub max_nodes: usize,
    pub noise_sigma: f64,
    pub skip_edge_prob: f64,
}

impl Default for CircleConfig {
    fn default() -> Self {
        CircleConfig {
            count: 8,
            min_nodes: 10,
            max_nodes: 20,
            noise_sigma: 0.3,
            skip_edge_prob: 0.5,
        }
    }
}

/// Random directed circle graphs.
///
/// Node `i` of an `n`-node circle has feature `sin(2πi/n)` plus Gaussian
/// noise. Consecutive nodes are joined by an ascending blue edge `i -> i+1`
/// and a descending green edge `i+1 -> i` (indices mod n); each pair of nodes
/// two steps apart gets the same pair of edges with probability
/// `skip_edge_prob`. `A` is the 0/1 adjacency of the directed edges.
pub fn generate_circle_graphs(config: &CircleConfig, seed: u64) -> Result<Vec<Graph>> {
    if config.min_nodes < 3 || config.max_nodes < config.min_nodes {
        return Err(Error::InvalidParameter(format!(
            "circle node range [{}, {}] must lie within [3, inf)",
            config.min_nodes, config.max_nodes
        )));
    }
    check_probability("skip_edge_prob", config.skip_edge_prob)?;
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise_sigma must be nonnegative, got {}",
            config.noise_sigma
        )));
    }
    let mut rng = rng::seeded(seed);
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
    let mut graphs = Vec::with_capacity(config.count);
    for _ in 0..config.count {
        let n = rng.random_range(config.min_nodes..=config.max_nodes);
        let features = Array2::from_shape_fn((n, 1), |(i, _)| {
            (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()
        });
        let features = features.mapv(|x| x + noise.sample(&mut rng));

        let mut edges = Vec::new();
        let mut linked = std::collections::HashSet::new();
        for i in 0..n {
            let j = (i + 1) % n;
            edges.push((i, j, EdgeColor::Blue as usize));
            edges.push((j, i, EdgeColor::Green as usize));
            linked.insert((i.min(j), i.max(j)));
        }
        for i in 0..n {
            let j = (i + 2) % n;
            let key = (i.min(j), i.max(j));
            if i == j || linked.contains(&key) {
                continue;
            }
            linked.insert(key);
            if rng.random_bool(config.skip_edge_prob) {
                edges.push((i, j, EdgeColor::Blue as usize));
                edges.push((j, i, EdgeColor::Green as usize));
            }
        }
        graphs.push(assemble(features, &edges, n)?);
    }
    Ok(graphs)
}

/// Node features of an SBM graph, per block `b` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BlockFeatures {
    /// Constant `b + 1`.
    BlockIndex,
    /// Samples from `N(b + 1, std²)`.
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub inter_block_prob: f64,
    pub features: BlockFeatures,
}

/// Stochastic-block-model graph.
///
/// Nodes of one block are pairwise connected in both directions by black
/// edges. For adjacent blocks `b` and `b+1`, each pair `(u, v)` with `u` in
/// `b` and `v` in `b+1` is linked with probability `inter_block_prob` by an
/// ascending blue edge `u -> v` and a descending green edge `v -> u`.
pub fn generate_sbm_graph(spec: &SbmSpec, seed: u64) -> Result<Graph> {
    if spec.block_sizes.is_empty() || spec.block_sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidParameter(
            "SBM needs at least one block and no empty blocks".into(),
        ));
    }
    check_probability("inter_block_prob", spec.inter_block_prob)?;
    let mut rng = rng::seeded(seed);
    let n: usize = spec.block_sizes.iter().sum();
    let mut block_of = Vec::with_capacity(n);
    for (b, &size) in spec.block_sizes.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(b, size));
    }

    let features = match spec.features {
        BlockFeatures::BlockIndex => Array2::from_shape_fn((n, 1), |(i, _)| (block_of[i] + 1) as f64),
        BlockFeatures::Gaussian { std } => {
            let unit = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Array2::from_shape_fn((n, 1), |(i, _)| (block_of[i] + 1) as f64 + unit.sample(&mut rng))
        }
    };

    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && block_of[u] == block_of[v] {
                edges.push((u, v, EdgeColor::Black as usize));
            }
        }
    }
    for u in 0..n {
        for v in 0..n {
            if block_of[v] == block_of[u] + 1 && rng.random_bool(spec.inter_block_prob) {
                edges.push((u, v, EdgeColor::Blue as usize));
                edges.push((v, u, EdgeColor::Green as usize));
            }
        }
    }
    assemble(features, &edges, n)
}

/// Splits `n` nodes into `blocks` nearly equal consecutive blocks.
pub fn even_block_sizes(n: usize, blocks: usize) -> Vec<usize> {
    (0..blocks)
        .map(|b| n / blocks + usize::from(b < n % blocks))
        .collect()
}

fn assemble(features: Array2<f64>, edges: &[(usize, usize, usize)], n: usize) -> Result<Graph> {
    let mut adjacency = Array2::zeros((n, n));
    for &(i, j, _) in edges {
        adjacency[[i, j]] = 1.0;
    }
    let tensor = one_hot_edge_tensor(edges, n, EDGE_CHANNELS, empty_edge().view())?;
    Graph::new(features, adjacency, tensor, uniform_histogram(n))
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")))
    }
}
