//! Synthetic experiment drivers: circle barycenters, SBM mixtures for
//! dictionary learning, SBM groups for clustering and a small supervised
//! graph prediction task.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom as _;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::apps::{adjusted_rand_index, kmeans_cluster, KMeansConfig};
use crate::barycenter::{fngw_barycenter, Barycenter, BarycenterConfig};
use crate::dictionary::{dictionary_learn, embed, Dictionary, LearnConfig};
use crate::error::{Error, Result};
use crate::fngw::FngwParams;
use crate::generators::{
    even_block_sizes, generate_circle_graphs, generate_sbm_graph, BlockFeatures, CircleConfig, SbmSpec,
};
use crate::graph::Graph;
use crate::prediction::{decode_candidates, gaussian_kernel, predict_relaxed, top_k_accuracy, PredictionModel};
use crate::rng;

/// Barycenters of generated circle graphs, one per sparsity level.
pub fn circle_barycenters(
    circles: &CircleConfig,
    n: usize,
    gammas: &[f64],
    params: &FngwParams,
    outer_iters: usize,
    seed: u64,
) -> Result<(Vec<Graph>, Vec<Barycenter>)> {
    let graphs = generate_circle_graphs(circles, seed)?;
    let barys = gammas
        .iter()
        .map(|&gamma| {
            let mut config = BarycenterConfig::new(n);
            config.gamma_sparsity = gamma;
            config.outer_iters = outer_iters;
            config.seed = seed;
            fngw_barycenter(&graphs, params, &config)
        })
        .collect::<Result<_>>()?;
    Ok((graphs, barys))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureConfig {
    /// Number of blocks of each template.
    pub template_blocks: Vec<usize>,
    pub template_nodes: usize,
    pub inter_block_prob: f64,
    pub count: usize,
    pub mixture_nodes: usize,
    /// Mixtures whose barycenter loss exceeds this are resampled.
    pub loss_gate: f64,
    pub max_attempts: usize,
    pub bary_iters: usize,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            template_blocks: vec![1, 2, 3],
            template_nodes: 20,
            inter_block_prob: 0.3,
            count: 30,
            mixture_nodes: 20,
            loss_gate: 0.3,
            max_attempts: 20,
            bary_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDataset {
    pub templates: Vec<Graph>,
    pub graphs: Vec<Graph>,
    /// Mixing weights of every graph.
    pub weights: Vec<Array1<f64>>,
}

fn softmax_normal(len: usize, rng: &mut rng::Rng) -> Array1<f64> {
    let z: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = Array1::from_iter(z.iter().map(|v| (v - max).exp()));
    let s = e.sum();
    e / s
}

/// SBM templates with block-index features and barycentric mixtures of them,
/// with weights drawn as the softmax of a standard normal vector.
pub fn sbm_mixtures(config: &MixtureConfig, params: &FngwParams, seed: u64) -> Result<MixtureDataset> {
    if config.template_blocks.is_empty() || config.count == 0 {
        return Err(Error::InvalidParameter("mixtures need templates and a positive count".into()));
    }
    let templates: Vec<Graph> = config
        .template_blocks
        .iter()
        .enumerate()
        .map(|(t, &blocks)| {
            let spec = SbmSpec {
                block_sizes: even_block_sizes(config.template_nodes, blocks),
                inter_block_prob: config.inter_block_prob,
                features: BlockFeatures::BlockIndex,
            };
            generate_sbm_graph(&spec, rng::derive_seed(seed, t as u64))
        })
        .collect::<Result<_>>()?;
    let mixtures: Vec<(Graph, Array1<f64>)> = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let item_seed = rng::derive_seed(seed, 1000 + i as u64);
            let mut rng = rng::seeded(item_seed);
            let mut best: Option<(f64, Graph, Array1<f64>)> = None;
            for attempt in 0..config.max_attempts.max(1) {
                let w = softmax_normal(templates.len(), &mut rng);
                let mut bc = BarycenterConfig::new(config.mixture_nodes);
                bc.lambda_weights = Some(w.to_vec());
                bc.outer_iters = config.bary_iters;
                bc.seed = rng::derive_seed(item_seed, attempt as u64);
                let bary = fngw_barycenter(&templates, params, &bc)?;
                let loss = *bary.loss_trace.last().unwrap_or(&f64::INFINITY);
                if loss <= config.loss_gate {
                    return Ok((bary.graph, w));
                }
                if best.as_ref().is_none_or(|b| loss < b.0) {
                    best = Some((loss, bary.graph, w));
                }
            }
            let (loss, g, w) = best.expect("at least one attempt");
            log::warn!("mixture {i} kept with loss {loss} above the gate after {} attempts", config.max_attempts);
            Ok((g, w))
        })
        .collect::<Result<_>>()?;
    let (graphs, weights) = mixtures.into_iter().unzip();
    Ok(MixtureDataset {
        templates,
        graphs,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryStudy {
    pub learned_loss: f64,
    /// Mean reconstruction loss of each random dictionary.
    pub random_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    pub dictionary: Dictionary,
}

fn mean_unmix_loss(data: &[Graph], dict: &Dictionary, params: &FngwParams, config: &LearnConfig) -> Result<f64> {
    let u = embed(data, dict, config.lambda_reg, params, &config.unmix)?;
    Ok(u.iter().map(|u| u.loss).sum::<f64>() / u.len() as f64)
}

/// Learns a dictionary and compares its mean reconstruction loss with that of
/// `baseline_seeds` random dictionaries of the same sizes.
pub fn dictionary_study(
    data: &[Graph],
    atom_sizes: &[usize],
    params: &FngwParams,
    config: &LearnConfig,
    baseline_seeds: usize,
) -> Result<DictionaryStudy> {
    let learned = dictionary_learn(data, atom_sizes, params, config)?;
    let learned_loss = mean_unmix_loss(data, &learned.dictionary, params, config)?;
    let random_losses = (0..baseline_seeds)
        .map(|s| {
            let dict = Dictionary::random(data, atom_sizes, rng::derive_seed(config.seed, 5000 + s as u64))?;
            mean_unmix_loss(data, &dict, params, config)
        })
        .collect::<Result<_>>()?;
    Ok(DictionaryStudy {
        learned_loss,
        random_losses,
        epoch_losses: learned.epoch_losses,
        dictionary: learned.dictionary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupConfig {
    /// Number of blocks of each group.
    pub group_blocks: Vec<usize>,
    pub per_group: usize,
    pub node_counts: Vec<usize>,
    pub inter_block_prob: f64,
    pub feature_std: f64,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            group_blocks: vec![1, 2, 4],
            per_group: 15,
            node_counts: vec![20, 30, 40],
            inter_block_prob: 0.3,
            feature_std: 1.0,
        }
    }
}

/// SBM groups with Gaussian block features; returns graphs and group labels.
pub fn sbm_groups(config: &GroupConfig, seed: u64) -> Result<(Vec<Graph>, Vec<usize>)> {
    if config.node_counts.is_empty() {
        return Err(Error::InvalidParameter("node count choices are empty".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    for (label, &blocks) in config.group_blocks.iter().enumerate() {
        for _ in 0..config.per_group {
            let n = config.node_counts[rng.random_range(0..config.node_counts.len())];
            let spec = SbmSpec {
                block_sizes: even_block_sizes(n, blocks),
                inter_block_prob: config.inter_block_prob,
                features: BlockFeatures::Gaussian { std: config.feature_std },
            };
            graphs.push(generate_sbm_graph(&spec, rng.random())?);
            labels.push(label);
        }
    }
    Ok((graphs, labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringStudy {
    pub ari: f64,
    pub assignments: Vec<usize>,
    pub labels: Vec<usize>,
    pub inertia_trace: Vec<f64>,
}

pub fn clustering_study(
    groups: &GroupConfig,
    centroid_size: usize,
    params: &FngwParams,
    config: &KMeansConfig,
) -> Result<ClusteringStudy> {
    let (graphs, labels) = sbm_groups(groups, config.seed)?;
    let clustering = kmeans_cluster(&graphs, groups.group_blocks.len(), centroid_size, params, config)?;
    Ok(ClusteringStudy {
        ari: adjusted_rand_index(&labels, &clustering.assignments)?,
        assignments: clustering.assignments,
        labels,
        inertia_trace: clustering.inertia_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTaskConfig {
    pub train: usize,
    pub test: usize,
    pub candidates: usize,
    pub nodes: usize,
    /// Standard deviation of the noise added to the input summaries.
    pub input_noise: f64,
}

impl Default for PredictionTaskConfig {
    fn default() -> Self {
        PredictionTaskConfig {
            train: 30,
            test: 20,
            candidates: 10,
            nodes: 12,
            input_noise: 0.05,
        }
    }
}

/// Two-block graphs described by noisy summary vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTask {
    pub train_inputs: Array2<f64>,
    pub train_outputs: Vec<Graph>,
    pub test_inputs: Array2<f64>,
    /// Candidate outputs of every test point.
    pub candidates: Vec<Vec<Graph>>,
    /// Position of the true output in each candidate list.
    pub truths: Vec<usize>,
}

/// Draws one output graph and its noiseless summary: the fraction of nodes in
/// the first block and the link probability between blocks.
fn draw_output(nodes: usize, rng: &mut rng::Rng) -> Result<(Graph, [f64; 2])> {
    let first = rng.random_range(1..nodes);
    let prob: f64 = rng.random_range(0.0..=1.0);
    let spec = SbmSpec {
        block_sizes: vec![first, nodes - first],
        inter_block_prob: prob,
        features: BlockFeatures::BlockIndex,
    };
    let g = generate_sbm_graph(&spec, rng.random())?;
    Ok((g, [first as f64 / nodes as f64, prob]))
}

pub fn prediction_task(config: &PredictionTaskConfig, seed: u64) -> Result<PredictionTask> {
    if config.nodes < 2 || config.candidates == 0 || config.train == 0 || config.test == 0 {
        return Err(Error::InvalidParameter("prediction task sizes are too small".into()));
    }
    let mut rng = rng::seeded(seed);
    let noise = Normal::new(0.0, config.input_noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let draw = |count: usize, rng: &mut rng::Rng| -> Result<(Array2<f64>, Vec<Graph>)> {
        let mut x = Array2::zeros((count, 2));
        let mut ys = Vec::with_capacity(count);
        for i in 0..count {
            let (g, s) = draw_output(config.nodes, rng)?;
            for (d, v) in s.iter().enumerate() {
                x[[i, d]] = v + noise.sample(rng);
            }
            ys.push(g);
        }
        Ok((x, ys))
    };
    let (train_inputs, train_outputs) = draw(config.train, &mut rng)?;
    let (test_inputs, test_outputs) = draw(config.test, &mut rng)?;
    let mut candidates = Vec::with_capacity(config.test);
    let mut truths = Vec::with_capacity(config.test);
    for truth in test_outputs {
        let mut list = vec![truth];
        for _ in 1..config.candidates {
            list.push(draw_output(config.nodes, &mut rng)?.0);
        }
        let mut order: Vec<usize> = (0..list.len()).collect();
        order.shuffle(&mut rng);
        truths.push(order.iter().position(|&o| o == 0).expect("truth present"));
        let mut slots: Vec<Option<Graph>> = list.into_iter().map(Some).collect();
        candidates.push(order.iter().map(|&o| slots[o].take().expect("each index once")).collect());
    }
    Ok(PredictionTask {
        train_inputs,
        train_outputs,
        test_inputs,
        candidates,
        truths,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStudy {
    /// Candidate indices of every test point, best first.
    pub rankings: Vec<Vec<usize>>,
    /// Top-k accuracy for k = 1..=candidates.
    pub top_k: Vec<f64>,
}

/// Fits the surrogate estimator on the training half and ranks the
/// candidates of every test point.
pub fn prediction_study(
    task: &PredictionTask,
    kernel_gamma: f64,
    ridge_lambda: f64,
    params: &FngwParams,
    seed: u64,
) -> Result<PredictionStudy> {
    let k_train = gaussian_kernel(task.train_inputs.view(), task.train_inputs.view(), kernel_gamma)?;
    let k_test = gaussian_kernel(task.train_inputs.view(), task.test_inputs.view(), kernel_gamma)?;
    let m_out = task.train_outputs.first().map_or(1, Graph::n);
    let mut model = PredictionModel::new(k_train, ridge_lambda, task.train_outputs.clone(), m_out, params.clone())?;
    model.seed = seed;
    let rankings: Vec<Vec<usize>> = (0..task.test_inputs.nrows())
        .into_par_iter()
        .map(|t| {
            let relaxed = predict_relaxed(&model, k_test.column(t))?;
            Ok(decode_candidates(&relaxed, &task.candidates[t], params)?
                .into_iter()
                .map(|r| r.index)
                .collect())
        })
        .collect::<Result<_>>()?;
    let max_k = task.candidates.iter().map(Vec::len).max().unwrap_or(0);
    let top_k = (1..=max_k)
        .map(|k| top_k_accuracy(&rankings, &task.truths, k))
        .collect::<Result<_>>()?;
    Ok(PredictionStudy { rankings, top_k })
}
