//! Command-line flags and the optional JSON configuration file.
//!
//! Precedence: flags, then `--config`, then built-in defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fngw::{FngwParams, NodeMetric};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "fngw", version, about = "Optimal-transport distances, barycenters and dictionaries for attributed graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Weight of the edge-feature term.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Weight of the structure term.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Iteration cap of each distance solve.
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Relative-decrease stopping tolerance of each distance solve.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads (1 is the reference execution).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with defaults for the flags above.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub node_metric: Option<MetricArg>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    SquaredEuclidean,
    Hamming,
}

impl From<MetricArg> for NodeMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::SquaredEuclidean => NodeMetric::SquaredEuclidean,
            MetricArg::Hamming => NodeMetric::Hamming,
        }
    }
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub threads: Option<usize>,
    pub node_metric: Option<MetricArg>,
    pub allow_missing_node_features: Option<bool>,
    pub allow_missing_edge_features: Option<bool>,
}

/// Fully resolved global settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub params: FngwParams,
    pub seed: u64,
    pub threads: usize,
}

impl GlobalArgs {
    pub fn resolve(&self) -> Result<Settings, Failure> {
        let file: ConfigFile = match &self.config {
            Some(path) => fngw::io::read_json(path)?,
            None => ConfigFile::default(),
        };
        let defaults = FngwParams::default();
        let seed = self.seed.or(file.seed).unwrap_or(0);
        let params = FngwParams {
            alpha: self.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            beta: self.beta.or(file.beta).unwrap_or(defaults.beta),
            node_metric: self.node_metric.or(file.node_metric).map_or(defaults.node_metric, Into::into),
            max_iters: self.max_iters.or(file.max_iters).unwrap_or(defaults.max_iters),
            rel_tol: self.tol.or(file.tol).unwrap_or(defaults.rel_tol),
            seed: Some(seed),
            allow_missing_node_features: file
                .allow_missing_node_features
                .unwrap_or(defaults.allow_missing_node_features),
            allow_missing_edge_features: file
                .allow_missing_edge_features
                .unwrap_or(defaults.allow_missing_edge_features),
        };
        params.validate()?;
        let threads = self.threads.or(file.threads).unwrap_or(1);
        if threads == 0 {
            return Err(Failure::Invalid("--threads must be at least 1".into()));
        }
        Ok(Settings { params, seed, threads })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance between two graphs; prints the value and writes the plan.
    Distance {
        source: PathBuf,
        target: PathBuf,
        /// Plan CSV (source nodes as rows).
        #[arg(long, default_value = "plan.csv")]
        plan: PathBuf,
        /// Optional JSON with value, iteration count and energy trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian Gram matrix `exp(-gamma FNGW)` of a dataset.
    Gram {
        dataset: PathBuf,
        /// Kernel bandwidth.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value = "gram.csv")]
        out: PathBuf,
        /// Also write the distance matrix.
        #[arg(long)]
        distances: Option<PathBuf>,
    },
    /// Barycenter of a dataset.
    Barycenter {
        dataset: PathBuf,
        /// Node count of the barycenter.
        #[arg(long)]
        n: usize,
        /// Sparsity weight of the structure matrix.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Comma-separated input weights (uniform when absent).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long, default_value_t = 50)]
        outer_iters: usize,
        #[arg(long, default_value_t = 10)]
        prox_iters: usize,
        #[arg(long, default_value_t = 1e-7)]
        outer_tol: f64,
        #[arg(long, default_value = "barycenter.json")]
        out: PathBuf,
        /// Loss-trace JSON; defaults to `<out stem>.trace.json`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Learns a dictionary and embeds the dataset on it.
    Dictlearn {
        dataset: PathBuf,
        /// Comma-separated atom node counts.
        #[arg(long, value_delimiter = ',', required = true)]
        atoms: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Weight of the negative quadratic term of the embedding objective.
        #[arg(long, default_value_t = 0.0)]
        lambda_reg: f64,
        #[arg(long, default_value_t = 5)]
        unmix_iters: usize,
        #[arg(long, default_value_t = 5)]
        bary_iters: usize,
        #[arg(long, default_value = "dictionary.json")]
        out: PathBuf,
        #[arg(long, default_value = "embeddings.csv")]
        embeddings: PathBuf,
    },
    /// k-means with barycenter centroids.
    Cluster {
        dataset: PathBuf,
        #[arg(long)]
        k: usize,
        /// Node count of the centroids.
        #[arg(long)]
        centroid_size: usize,
        #[arg(long, default_value_t = 20)]
        lloyd_iters: usize,
        #[arg(long, default_value_t = 10)]
        bary_iters: usize,
        #[arg(long, default_value_t = 3)]
        init_candidates: usize,
        /// Clustering JSON; centroids go to `<out stem>.centroid-<c>.json`.
        #[arg(long, default_value = "clustering.json")]
        out: PathBuf,
    },
    /// Ranks candidate outputs with the kernel ridge surrogate.
    Predict {
        /// Training Gram matrix CSV (n × n, header row).
        #[arg(long)]
        gram: PathBuf,
        /// Kernel CSV between training (rows) and test points (columns).
        #[arg(long)]
        kernel: PathBuf,
        /// Dataset of training output graphs.
        #[arg(long)]
        outputs: PathBuf,
        /// Candidate-set JSON.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        ridge_lambda: f64,
        /// Node count of the relaxed prediction; defaults to the first output's.
        #[arg(long)]
        m_out: Option<usize>,
        #[arg(long, default_value_t = 5)]
        top_weights: usize,
        #[arg(long, default_value_t = 20)]
        bary_iters: usize,
        #[arg(long, default_value = "prediction.json")]
        out: PathBuf,
    },
    /// Synthetic datasets.
    #[command(subcommand)]
    Generate(Generate),
}

#[derive(Debug, Subcommand)]
pub enum Generate {
    /// Noisy directed circles.
    Circle {
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        min_nodes: usize,
        #[arg(long, default_value_t = 20)]
        max_nodes: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0.5)]
        skip_prob: f64,
        #[arg(long, default_value = "circles.json")]
        out: PathBuf,
    },
    /// Stochastic-block-model groups, one per entry of `--blocks`, labeled
    /// by group.
    Sbm {
        /// Comma-separated block count of each group.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 15)]
        per_group: usize,
        /// Comma-separated node counts to draw from.
        #[arg(long, value_delimiter = ',', default_value = "20,30,40")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 0.3)]
        inter_prob: f64,
        /// Standard deviation of the block features; 0 gives the constant block index.
        #[arg(long, default_value_t = 1.0)]
        feature_std: f64,
        #[arg(long, default_value = "sbm.json")]
        out: PathBuf,
    },
}
