use std::path::{Path, PathBuf};

use fngw::apps::{adjusted_rand_index, gram_matrix, kmeans_cluster, pairwise_distance_matrix, KMeansConfig};
use fngw::barycenter::{fngw_barycenter, BarycenterConfig};
use fngw::dictionary::{dictionary_learn, embed, LearnConfig, UnmixConfig};
use fngw::experiments::{sbm_groups, GroupConfig};
use fngw::generators::{generate_circle_graphs, CircleConfig};
use fngw::io::{
    self, format_f64, ClusteringRecord, Dataset, DistanceRecord, PredictionRecord, RankedRecord, TraceRecord,
    SCHEMA_VERSION,
};
use fngw::prediction::{decode_candidates, predict_relaxed, top_k_accuracy, PredictionModel};
use fngw::{fngw_distance, Graph};
use serde_json::json;

use crate::config::{Cli, Command, Generate, Settings};
use crate::Failure;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let settings = cli.global.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads)
        .build()
        .map_err(|e| Failure::Invalid(format!("cannot start {} worker threads: {e}", settings.threads)))?;
    pool.install(|| dispatch(cli.command, &settings))
}

fn dispatch(command: Command, s: &Settings) -> Result<(), Failure> {
    match command {
        Command::Distance {
            source,
            target,
            plan,
            out,
        } => distance(&source, &target, &plan, out.as_deref(), s),
        Command::Gram {
            dataset,
            gamma,
            out,
            distances,
        } => gram(&dataset, gamma, &out, distances.as_deref(), s),
        Command::Barycenter {
            dataset,
            n,
            gamma,
            weights,
            outer_iters,
            prox_iters,
            outer_tol,
            out,
            trace,
        } => {
            let graphs = io::read_dataset(&dataset)?.graphs;
            let mut config = BarycenterConfig::new(n);
            config.gamma_sparsity = gamma;
            config.lambda_weights = weights;
            config.outer_iters = outer_iters;
            config.prox_iters = prox_iters;
            config.rel_tol = outer_tol;
            config.seed = s.seed;
            let bary = fngw_barycenter(&graphs, &s.params, &config)?;
            io::write_graph(&out, &bary.graph)?;
            let trace = trace.unwrap_or_else(|| sibling(&out, "trace"));
            io::write_json(
                &trace,
                &TraceRecord {
                    schema_version: SCHEMA_VERSION,
                    loss_trace: bary.loss_trace,
                },
            )?;
            Ok(())
        }
        Command::Dictlearn {
            dataset,
            atoms,
            epochs,
            batch_size,
            lr,
            lambda_reg,
            unmix_iters,
            bary_iters,
            out,
            embeddings,
        } => {
            let graphs = io::read_dataset(&dataset)?.graphs;
            let config = LearnConfig {
                epochs,
                batch_size,
                learning_rate: lr,
                lambda_reg,
                seed: s.seed,
                unmix: UnmixConfig {
                    max_iters: unmix_iters,
                    bary_iters,
                    seed: s.seed,
                    ..UnmixConfig::default()
                },
            };
            let learned = dictionary_learn(&graphs, &atoms, &s.params, &config)?;
            let unmixings = embed(&graphs, &learned.dictionary, lambda_reg, &s.params, &config.unmix)?;
            let meta = json!({
                "epochs": epochs,
                "batch_size": batch_size,
                "learning_rate": lr,
                "lambda_reg": lambda_reg,
                "unmix_iters": unmix_iters,
                "bary_iters": bary_iters,
                "alpha": s.params.alpha,
                "beta": s.params.beta,
                "epoch_losses": learned.epoch_losses,
            });
            io::write_dictionary(&out, &learned.dictionary, s.seed, meta)?;
            let mut header = vec!["sample".to_string()];
            header.extend((0..atoms.len()).map(|k| format!("w{k}")));
            header.push("loss".into());
            let rows: Vec<Vec<String>> = unmixings
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let mut row = vec![i.to_string()];
                    row.extend(u.w.iter().map(|&v| format_f64(v)));
                    row.push(format_f64(u.loss));
                    row
                })
                .collect();
            io::write_csv(&embeddings, &header, &rows)?;
            Ok(())
        }
        Command::Cluster {
            dataset,
            k,
            centroid_size,
            lloyd_iters,
            bary_iters,
            init_candidates,
            out,
        } => {
            let data = io::read_dataset(&dataset)?;
            let config = KMeansConfig {
                max_iters: lloyd_iters,
                bary_iters,
                seed: s.seed,
                init_candidates,
                ..KMeansConfig::default()
            };
            let clustering = kmeans_cluster(&data.graphs, k, centroid_size, &s.params, &config)?;
            let mut names = Vec::with_capacity(k);
            for (c, centroid) in clustering.centroids.iter().enumerate() {
                let path = sibling(&out, &format!("centroid-{c}"));
                io::write_graph(&path, centroid)?;
                names.push(path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()));
            }
            let ari = match &data.labels {
                Some(labels) => Some(adjusted_rand_index(labels, &clustering.assignments)?),
                None => None,
            };
            io::write_json(
                &out,
                &ClusteringRecord {
                    schema_version: SCHEMA_VERSION,
                    k,
                    assignments: clustering.assignments,
                    inertia_trace: clustering.inertia_trace,
                    centroids: names,
                    adjusted_rand_index: ari,
                },
            )?;
            if let Some(ari) = ari {
                println!("adjusted rand index: {}", format_f64(ari));
            }
            Ok(())
        }
        Command::Predict {
            gram,
            kernel,
            outputs,
            candidates,
            ridge_lambda,
            m_out,
            top_weights,
            bary_iters,
            out,
        } => {
            let (_, k_train) = io::read_matrix_csv(&gram)?;
            let (_, k_test) = io::read_matrix_csv(&kernel)?;
            let train_outputs = io::read_dataset(&outputs)?.graphs;
            let sets = io::read_candidates(&candidates)?;
            if k_test.nrows() != k_train.nrows() {
                return Err(Failure::Invalid(format!(
                    "{}: expected {} rows (one per training point), found {}",
                    kernel.display(),
                    k_train.nrows(),
                    k_test.nrows()
                )));
            }
            if k_test.ncols() != sets.candidates.len() {
                return Err(Failure::Invalid(format!(
                    "{}: {} test columns but {} candidate lists",
                    kernel.display(),
                    k_test.ncols(),
                    sets.candidates.len()
                )));
            }
            let m_out = m_out.unwrap_or_else(|| train_outputs.first().map_or(1, Graph::n));
            let mut model = PredictionModel::new(k_train, ridge_lambda, train_outputs, m_out, s.params)?;
            model.top_weights = top_weights;
            model.bary_iters = bary_iters;
            model.seed = s.seed;
            let rankings = (0..k_test.ncols())
                .map(|t| {
                    let relaxed = predict_relaxed(&model, k_test.column(t))?;
                    decode_candidates(&relaxed, &sets.candidates[t], &s.params)
                })
                .collect::<fngw::Result<Vec<_>>>()?;
            let top_k = match &sets.truths {
                Some(truths) => {
                    let order: Vec<Vec<usize>> =
                        rankings.iter().map(|r| r.iter().map(|c| c.index).collect()).collect();
                    let max_k = order.iter().map(Vec::len).max().unwrap_or(0);
                    Some((1..=max_k).map(|k| top_k_accuracy(&order, truths, k)).collect::<fngw::Result<Vec<_>>>()?)
                }
                None => None,
            };
            if let Some(top) = &top_k {
                println!("top-1 accuracy: {}", format_f64(top[0]));
            }
            io::write_json(
                &out,
                &PredictionRecord {
                    schema_version: SCHEMA_VERSION,
                    rankings: rankings
                        .into_iter()
                        .map(|r| {
                            r.into_iter()
                                .map(|c| RankedRecord {
                                    index: c.index,
                                    value: c.value,
                                })
                                .collect()
                        })
                        .collect(),
                    top_k,
                },
            )?;
            Ok(())
        }
        Command::Generate(Generate::Circle {
            count,
            min_nodes,
            max_nodes,
            noise,
            skip_prob,
            out,
        }) => {
            let config = CircleConfig {
                count,
                min_nodes,
                max_nodes,
                noise_sigma: noise,
                skip_edge_prob: skip_prob,
            };
            let graphs = generate_circle_graphs(&config, s.seed)?;
            io::write_dataset(&out, &Dataset { graphs, labels: None })?;
            Ok(())
        }
        Command::Generate(Generate::Sbm {
            blocks,
            per_group,
            nodes,
            inter_prob,
            feature_std,
            out,
        }) => {
            let config = GroupConfig {
                group_blocks: blocks,
                per_group,
                node_counts: nodes,
                inter_block_prob: inter_prob,
                feature_std,
            };
            let (graphs, labels) = sbm_groups(&config, s.seed)?;
            io::write_dataset(
                &out,
                &Dataset {
                    graphs,
                    labels: Some(labels),
                },
            )?;
            Ok(())
        }
    }
}

/// `dir/stem.json` → `dir/stem.<tag>.json`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{tag}.json"))
}

fn distance(source: &Path, target: &Path, plan: &Path, out: Option<&Path>, s: &Settings) -> Result<(), Failure> {
    let g = io::read_graph(source)?;
    let h = io::read_graph(target)?;
    let sol = fngw_distance(&g, &h, &s.params)?;
    let header: Vec<String> = (0..h.n()).map(|j| format!("t{j}")).collect();
    io::write_matrix_csv(plan, &header, sol.plan.matrix().view())?;
    if let Some(out) = out {
        io::write_json(
            out,
            &DistanceRecord {
                schema_version: SCHEMA_VERSION,
                value: sol.value,
                iterations: sol.iterations,
                trace: sol.trace.clone(),
            },
        )?;
    }
    println!("{}", format_f64(sol.value));
    Ok(())
}

fn gram(dataset: &Path, gamma: f64, out: &Path, distances: Option<&Path>, s: &Settings) -> Result<(), Failure> {
    let graphs = io::read_dataset(dataset)?.graphs;
    let header: Vec<String> = (0..graphs.len()).map(|i| format!("g{i}")).collect();
    if let Some(path) = distances {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Failure::Invalid(format!("kernel bandwidth must be positive, got {gamma}")));
        }
        let d = pairwise_distance_matrix(&graphs, &s.params)?;
        io::write_matrix_csv(path, &header, d.distances.view())?;
        io::write_matrix_csv(out, &header, d.distances.mapv(|v| (-gamma * v).exp()).view())?;
    } else {
        let k = gram_matrix(&graphs, &s.params, gamma)?;
        io::write_matrix_csv(out, &header, k.view())?;
    }
    Ok(())
}
