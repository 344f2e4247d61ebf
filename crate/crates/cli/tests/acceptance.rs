//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
//! Runs without the libtest harness so the lines always reach stdout.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_edge, brute_structure, max_diff, permutations, random_graph, random_plan, report, rng};
use fngw::apps::KMeansConfig;
use fngw::barycenter::{fngw_barycenter, update_edge_tensor, BarycenterConfig};
use fngw::dictionary::{atom_gradients, batch_loss, reconstruct_from_atoms, Dictionary, LearnConfig, Unmixing};
use fngw::experiments::{
    circle_barycenters, clustering_study, dictionary_study, prediction_study, prediction_task, sbm_mixtures,
    GroupConfig, MixtureConfig, PredictionTaskConfig,
};
use fngw::fngw::{
    edge_tensor_contract, fngw_cost, fngw_gradient, line_search_coefficients, node_cost_matrix, structure_contract,
    CostFactors, FngwProblem,
};
use fngw::generators::CircleConfig;
use fngw::io::{self, CandidateSets, Dataset};
use fngw::ot::solve_linear_ot;
use fngw::prediction::{gaussian_kernel, ridge_weights, PredictionModel};
use fngw::{fngw_distance, FngwParams, Graph, NodeMetric, TransportPlan};
use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs one criterion, adds the runtime budget to its verdict and prints the line.
fn criterion(name: &str, budget: Option<Duration>, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = body();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed < b);
    let limit = budget.map_or_else(String::new, |b| format!(", limit {}s", b.as_secs()));
    report(
        name,
        out.pass && in_time,
        &format!("{} ({:.1}s{limit})", out.detail, elapsed.as_secs_f64()),
    )
}

fn contraction_oracle() -> Outcome {
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n, m, t) = (r.random_range(1..=8), r.random_range(1..=8), r.random_range(1..=4));
        let g = random_graph(&mut r, n, 2, t, false);
        let h = random_graph(&mut r, m, 2, t, false);
        let pi = random_plan(&mut r, g.weights(), h.weights());
        let factors = CostFactors::new(&g, &h, NodeMetric::SquaredEuclidean).unwrap();
        let le = edge_tensor_contract(g.edge_features().view(), h.edge_features().view(), &pi, &factors).unwrap();
        worst = worst.max(max_diff(&le, &brute_edge(g.edge_features(), h.edge_features(), pi.matrix())));
        let js = structure_contract(g.structure().view(), h.structure().view(), &pi, &factors).unwrap();
        worst = worst.max(max_diff(&js, &brute_structure(g.structure(), h.structure(), pi.matrix())));
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.2e} over 100 instances (tol 1e-10)"))
}

fn gradient_check() -> Outcome {
    let mut r = rng(102);
    let params = FngwParams::with_tradeoff(0.35, 0.25);
    let step = 1e-6;
    let mut worst_rel: f64 = 0.0;
    for _ in 0..50 {
        let (n, m) = (r.random_range(2..=5), r.random_range(2..=5));
        let g = random_graph(&mut r, n, 2, 2, false);
        let h = random_graph(&mut r, m, 2, 2, false);
        let pi = random_plan(&mut r, g.weights(), h.weights());
        let problem = FngwProblem::new(&g, &h, &params).unwrap();
        let grad = fngw_gradient(&g, &h, &pi, &params).unwrap();
        for i in 0..n {
            for j in 0..m {
                let mut plus = pi.matrix().clone();
                plus[[i, j]] += step;
                let mut minus = pi.matrix().clone();
                minus[[i, j]] -= step;
                let fd = (problem.energy(plus.view()) - problem.energy(minus.view())) / (2.0 * step);
                worst_rel = worst_rel.max((fd - grad[[i, j]]).abs() / grad[[i, j]].abs().max(1.0));
            }
        }
    }
    let mut worst_sym: f64 = 0.0;
    let sym = FngwParams::with_tradeoff(0.2, 0.5);
    for _ in 0..20 {
        let g = random_graph(&mut r, 5, 1, 3, true);
        let h = random_graph(&mut r, 4, 1, 3, true);
        let pi = random_plan(&mut r, g.weights(), h.weights());
        let factors = CostFactors::new(&g, &h, NodeMetric::SquaredEuclidean).unwrap();
        let js = brute_structure(g.structure(), h.structure(), pi.matrix());
        let le = brute_edge(g.edge_features(), h.edge_features(), pi.matrix());
        let expected = &factors.node_cost * 0.3 + &js * (2.0 * 0.5) + &le * (2.0 * 0.2);
        worst_sym = worst_sym.max(max_diff(&fngw_gradient(&g, &h, &pi, &sym).unwrap(), &expected));
    }
    outcome(
        worst_rel <= 1e-5 && worst_sym <= 1e-12,
        format!("fd rel err {worst_rel:.2e} (tol 1e-5), symmetric form {worst_sym:.2e} (tol 1e-12)"),
    )
}

fn line_search_identity() -> Outcome {
    let mut r = rng(103);
    let params = FngwParams::with_tradeoff(0.4, 0.3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (n, m) = (r.random_range(1..=6), r.random_range(1..=6));
        let g = random_graph(&mut r, n, 2, 2, false);
        let h = random_graph(&mut r, m, 2, 2, false);
        let old = random_plan(&mut r, g.weights(), h.weights());
        let new = random_plan(&mut r, g.weights(), h.weights());
        let (a, b) = line_search_coefficients(&g, &h, &old, &new, &params).unwrap();
        let c = fngw_cost(&g, &h, &old, &params).unwrap();
        let gamma: f64 = r.random_range(0.0..1.0);
        let mixed = old.matrix() * (1.0 - gamma) + new.matrix() * gamma;
        let mixed = TransportPlan::new(mixed, g.weights().clone(), h.weights().clone()).unwrap();
        let direct = fngw_cost(&g, &h, &mixed, &params).unwrap();
        worst = worst.max((a * gamma * gamma + b * gamma + c - direct).abs());
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.2e} over 50 triples (tol 1e-10)"))
}

fn solver_descent() -> Outcome {
    let mut r = rng(104);
    let params = FngwParams::with_tradeoff(0.3, 0.4);
    let mut monotone = true;
    for _ in 0..20 {
        let (n, m) = (r.random_range(2..=9), r.random_range(2..=9));
        let g = random_graph(&mut r, n, 1, 3, false);
        let h = random_graph(&mut r, m, 1, 3, false);
        let sol = fngw_distance(&g, &h, &params).unwrap();
        monotone &= sol.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    }
    let mut self_zero = true;
    for n in 1..8 {
        let g = random_graph(&mut r, n, 3, 2, false);
        self_zero &= fngw_cost(&g, &g, &TransportPlan::diagonal(g.weights()), &params).unwrap() == 0.0;
    }
    let mut worst: f64 = 0.0;
    let linear = FngwParams::with_tradeoff(0.0, 0.0);
    for _ in 0..10 {
        let g = random_graph(&mut r, 6, 2, 1, false);
        let h = random_graph(&mut r, 7, 2, 1, false);
        let sol = fngw_distance(&g, &h, &linear).unwrap();
        let cost =
            node_cost_matrix(g.node_features().view(), h.node_features().view(), NodeMetric::SquaredEuclidean).unwrap();
        let ot = solve_linear_ot(cost.view(), g.weights().view(), h.weights().view()).unwrap();
        worst = worst.max((sol.value - ot.cost(cost.view())).abs());
    }
    outcome(
        monotone && self_zero && worst <= 1e-10,
        format!("traces monotone {monotone}, self cost exactly 0 {self_zero}, linear-OT gap {worst:.2e} (tol 1e-10)"),
    )
}

fn best_permutation_energy(g: &Graph, h: &Graph, params: &FngwParams) -> f64 {
    let n = g.n();
    permutations(n)
        .into_iter()
        .map(|perm| {
            let mut pi = Array2::zeros((n, n));
            for (i, &j) in perm.iter().enumerate() {
                pi[[i, j]] = 1.0 / n as f64;
            }
            let pi = TransportPlan::new(pi, g.weights().clone(), h.weights().clone()).unwrap();
            fngw_cost(g, h, &pi, params).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

fn metric_properties() -> Outcome {
    let mut r = rng(105);
    let params = FngwParams::with_tradeoff(0.25, 0.45);
    let mut symmetric = 0;
    for _ in 0..100 {
        let (n, m) = (r.random_range(1..=6), r.random_range(1..=6));
        let g = random_graph(&mut r, n, 2, 2, false);
        let h = random_graph(&mut r, m, 2, 2, false);
        let pi = random_plan(&mut r, g.weights(), h.weights());
        let forward = fngw_cost(&g, &h, &pi, &params).unwrap();
        let backward = fngw_cost(&h, &g, &pi.transpose(), &params).unwrap();
        symmetric += usize::from(forward.to_bits() == backward.to_bits());
    }
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..40 {
        let n = r.random_range(1..=3);
        let gs: Vec<Graph> = (0..3)
            .map(|_| {
                random_graph(&mut r, n, 2, 2, false)
                    .with_weights(Array1::from_elem(n, 1.0 / n as f64))
                    .unwrap()
            })
            .collect();
        let d = |a: usize, b: usize| best_permutation_energy(&gs[a], &gs[b], &params);
        worst_excess = worst_excess.max(d(0, 2) - 2.0 * (d(0, 1) + d(1, 2)));
    }
    outcome(
        symmetric == 100 && worst_excess <= 1e-9,
        format!("exact symmetry {symmetric}/100, worst triangle excess {worst_excess:.2e} (tol 1e-9)"),
    )
}

fn barycenter_math() -> Outcome {
    let mut r = rng(106);
    let alpha = 0.3;
    let n = 4;
    let p = common::random_histogram(&mut r, n);
    let graphs: Vec<Graph> = (0..3)
        .map(|_| {
            let m = r.random_range(2..=6);
            random_graph(&mut r, m, 2, 3, false)
        })
        .collect();
    let plans: Vec<TransportPlan> = graphs.iter().map(|g| random_plan(&mut r, &p, g.weights())).collect();
    let lambda = common::random_histogram(&mut r, 3).to_vec();
    let e = update_edge_tensor(&graphs, &plans, &lambda, &p).unwrap();
    let mut grad_norm: f64 = 0.0;
    for t in 0..3 {
        for i in 0..n {
            for k in 0..n {
                let mut grad = e[[i, k, t]] * p[i] * p[k];
                for ((g, pi), w) in graphs.iter().zip(&plans).zip(&lambda) {
                    let (pm, ge) = (pi.matrix(), g.edge_features());
                    for j in 0..g.n() {
                        for l in 0..g.n() {
                            grad -= w * pm[[i, j]] * ge[[j, l, t]] * pm[[k, l]];
                        }
                    }
                }
                grad_norm = grad_norm.max((2.0 * alpha * grad).abs());
            }
        }
    }

    let one_hot: Vec<Graph> = (0..3)
        .map(|_| {
            let m = r.random_range(2..=5);
            let mut e = Array3::zeros((m, m, 3));
            for i in 0..m {
                for j in 0..m {
                    e[[i, j, r.random_range(0..3)]] = 1.0;
                }
            }
            Graph::with_uniform_weights(Array2::zeros((m, 1)), Array2::zeros((m, m)), e).unwrap()
        })
        .collect();
    let one_hot_plans: Vec<TransportPlan> = one_hot.iter().map(|g| random_plan(&mut r, &p, g.weights())).collect();
    let e = update_edge_tensor(&one_hot, &one_hot_plans, &lambda, &p).unwrap();
    let channel_dev = e.sum_axis(Axis(2)).iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);

    let params = FngwParams::with_tradeoff(0.3, 0.3);
    let inputs: Vec<Graph> = (0..4)
        .map(|_| {
            let m = r.random_range(4..=7);
            random_graph(&mut r, m, 1, 2, false)
        })
        .collect();
    let mut config = BarycenterConfig::new(5);
    config.seed = 9;
    let bary = fngw_barycenter(&inputs, &params, &config).unwrap();
    let monotone = bary.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10);

    let g = random_graph(&mut r, 6, 2, 2, false).with_weights(Array1::from_elem(6, 1.0 / 6.0)).unwrap();
    let own = fngw_barycenter(&[g], &params, &BarycenterConfig::new(6)).unwrap();
    let self_loss = *own.loss_trace.last().unwrap();

    outcome(
        grad_norm <= 1e-8 && channel_dev <= 1e-12 && monotone && self_loss <= 1e-8,
        format!(
            "edge block gradient {grad_norm:.2e} (tol 1e-8), channel sums {channel_dev:.2e} (tol 1e-12), \
             trace monotone {monotone}, self-barycenter loss {self_loss:.2e} (tol 1e-8)"
        ),
    )
}

fn circle_experiment() -> Outcome {
    let params = FngwParams::with_tradeoff(0.3, 0.3);
    let (graphs, barys) = circle_barycenters(&CircleConfig::default(), 15, &[1e-6, 5e-5], &params, 50, 0).unwrap();
    let monotone = barys.iter().all(|b| b.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    let channel_dev = barys
        .iter()
        .flat_map(|b| b.graph.edge_features().sum_axis(Axis(2)).into_iter())
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        graphs.len() == 8 && monotone && channel_dev <= 1e-10,
        format!(
            "{} inputs, traces monotone {monotone}, channel sums {channel_dev:.2e} (tol 1e-10)",
            graphs.len()
        ),
    )
}

fn atom_gradient_check() -> (f64, String) {
    let (alpha, beta) = (0.35, 0.25);
    let params = FngwParams::with_tradeoff(alpha, beta);
    let mut r = rng(107);
    let atoms: Vec<Graph> = [3, 4].iter().map(|&m| random_graph(&mut r, m, 2, 2, false)).collect();
    let samples: Vec<Graph> = [4, 5].iter().map(|&n| random_graph(&mut r, n, 2, 2, false)).collect();
    let unmixings: Vec<Unmixing> = samples
        .iter()
        .map(|g| {
            let p = g.weights();
            Unmixing {
                w: common::random_histogram(&mut r, 2),
                plan_to_bary: random_plan(&mut r, p, p),
                atom_plans: atoms.iter().map(|a| random_plan(&mut r, p, a.weights())).collect(),
                loss: 0.0,
            }
        })
        .collect();
    let dict = Dictionary::new(atoms).unwrap();
    let refs: Vec<&Graph> = samples.iter().collect();
    let grads = atom_gradients(&refs, &unmixings, &dict, &params).unwrap();
    let brute = |d: &Dictionary| {
        samples
            .iter()
            .zip(&unmixings)
            .map(|(g, u)| {
                let recon = reconstruct_from_atoms(&u.w, d, &u.atom_plans, g.weights()).unwrap();
                common::brute_energy(g, &recon, u.plan_to_bary.matrix(), alpha, beta)
            })
            .sum::<f64>()
            / samples.len() as f64
    };
    let loss_gap = (batch_loss(&refs, &unmixings, &dict, &params).unwrap() - brute(&dict)).abs();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let replace = |s: usize, f: Array2<f64>, a: Array2<f64>, e: Array3<f64>| {
        let mut atoms = dict.atoms().to_vec();
        atoms[s] = Graph::new(f, a, e, atoms[s].weights().clone()).unwrap();
        Dictionary::new(atoms).unwrap()
    };
    for (s, atom) in dict.atoms().iter().enumerate() {
        let (f, a, e) = (atom.node_features(), atom.structure(), atom.edge_features());
        let mut check = |analytic: f64, plus: Dictionary, minus: Dictionary| {
            let fd = (brute(&plus) - brute(&minus)) / (2.0 * h);
            worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3));
        };
        for i in 0..atom.n() {
            for k in 0..atom.n() {
                let mut ap = a.clone();
                ap[[i, k]] += h;
                let mut am = a.clone();
                am[[i, k]] -= h;
                check(grads[s].structure[[i, k]], replace(s, f.clone(), ap, e.clone()), replace(s, f.clone(), am, e.clone()));
                for t in 0..2 {
                    let mut ep = e.clone();
                    ep[[i, k, t]] += h;
                    let mut em = e.clone();
                    em[[i, k, t]] -= h;
                    check(
                        grads[s].edge_features[[i, k, t]],
                        replace(s, f.clone(), a.clone(), ep),
                        replace(s, f.clone(), a.clone(), em),
                    );
                }
            }
            for c in 0..2 {
                let mut fp = f.clone();
                fp[[i, c]] += h;
                let mut fm = f.clone();
                fm[[i, c]] -= h;
                check(grads[s].node_features[[i, c]], replace(s, fp, a.clone(), e.clone()), replace(s, fm, a.clone(), e.clone()));
            }
        }
    }
    (worst.max(loss_gap), format!("atom gradient rel err {worst:.2e} (tol 1e-4)"))
}

fn dictionary_experiment() -> Outcome {
    let (grad_err, grad_detail) = atom_gradient_check();
    let params = experiment_params();
    let data = sbm_mixtures(&MixtureConfig::default(), &params, 0).unwrap();
    let config = LearnConfig {
        learning_rate: 10.0,
        epochs: 10,
        batch_size: 10,
        ..LearnConfig::default()
    };
    let study = dictionary_study(&data.graphs, &[5, 10, 15], &params, &config, 10).unwrap();
    let baseline = study.random_losses.iter().sum::<f64>() / study.random_losses.len() as f64;
    outcome(
        grad_err <= 1e-4 && study.learned_loss < baseline,
        format!(
            "{grad_detail}; {} mixtures, learned loss {:.4} vs random mean {baseline:.4}",
            data.graphs.len(),
            study.learned_loss
        ),
    )
}

/// Solver budget of the iterated experiments; the default tolerance
/// spends most of its time zigzagging near warm-started optima.
fn experiment_params() -> FngwParams {
    let mut params = FngwParams::with_tradeoff(0.3, 0.3);
    params.rel_tol = 1e-6;
    params.max_iters = 100;
    params
}

fn clustering_experiment() -> Outcome {
    let params = experiment_params();
    let mut perfect = 0;
    let mut aris = Vec::new();
    let mut monotone = true;
    let mut sizes = true;
    for seed in 0..10 {
        let config = KMeansConfig {
            seed,
            ..KMeansConfig::default()
        };
        let study = clustering_study(&GroupConfig::default(), 20, &params, &config).unwrap();
        sizes &= study.labels.len() == 45;
        monotone &= study.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-6);
        perfect += usize::from(study.ari == 1.0);
        aris.push(format!("{:.2}", study.ari));
    }
    outcome(
        perfect >= 8 && monotone && sizes,
        format!("ARI = 1 in {perfect}/10 seeds [{}], inertia monotone {monotone}", aris.join(" ")),
    )
}

fn prediction_experiment() -> Outcome {
    let params = FngwParams::with_tradeoff(0.3, 0.3);
    let (gamma, lambda) = (10.0, 1e-3);
    let mut residual: f64 = 0.0;
    let mut top1 = Vec::new();
    let mut monotone = true;
    for seed in 0..5 {
        let task = prediction_task(&PredictionTaskConfig::default(), seed).unwrap();
        let k_train = gaussian_kernel(task.train_inputs.view(), task.train_inputs.view(), gamma).unwrap();
        let k_test = gaussian_kernel(task.train_inputs.view(), task.test_inputs.view(), gamma).unwrap();
        let n = k_train.nrows();
        let model =
            PredictionModel::new(k_train.clone(), lambda, task.train_outputs.clone(), 12, params.clone()).unwrap();
        let system = &k_train + &(Array2::<f64>::eye(n) * (n as f64 * lambda));
        for t in 0..k_test.ncols() {
            let w = ridge_weights(&model, k_test.column(t)).unwrap();
            let r = system.dot(&w) - k_test.column(t);
            residual = residual.max(r.iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
        let study = prediction_study(&task, gamma, lambda, &params, seed).unwrap();
        monotone &= study.top_k.windows(2).all(|w| w[0] <= w[1]);
        top1.push(study.top_k[0]);
    }
    let mean = top1.iter().sum::<f64>() / top1.len() as f64;
    outcome(
        residual <= 1e-9 && mean >= 0.3 && monotone,
        format!(
            "ridge residual {residual:.2e} (tol 1e-9), mean top-1 {mean:.2} over 5 seeds {top1:?} (need >= 0.30), \
             top-k monotone {monotone}"
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fngw"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Runs a subcommand in fresh copies of `inputs` under several thread
/// counts and compares everything it leaves behind.
fn identical_across_runs(inputs: &Path, args: &[&str]) -> bool {
    let mut seen: Option<(BTreeMap<String, Vec<u8>>, String)> = None;
    for threads in ["1", "4", "2", "1"] {
        let dir = tempfile::tempdir().unwrap();
        for (name, bytes) in snapshot(inputs) {
            fs::write(dir.path().join(name), bytes).unwrap();
        }
        let mut full = args.to_vec();
        full.extend(["--seed", "5", "--threads", threads]);
        let (ok, stdout) = run_cli(dir.path(), &full);
        if !ok {
            return false;
        }
        let now = (snapshot(dir.path()), stdout);
        match &seen {
            Some(first) if *first != now => return false,
            Some(_) => {}
            None => seen = Some(now),
        }
    }
    true
}

fn cli_determinism() -> Outcome {
    let inputs = tempfile::tempdir().unwrap();
    let dir = inputs.path();
    assert!(run_cli(dir, &["generate", "circle", "--count", "4", "--seed", "7", "--out", "c.json"]).0);
    assert!(
        run_cli(
            dir,
            &["generate", "sbm", "--per-group", "3", "--nodes", "8,10", "--seed", "3", "--out", "s.json"]
        )
        .0
    );
    let circles = io::read_dataset(dir.join("c.json")).unwrap();
    io::write_graph(dir.join("a.json"), &circles.graphs[0]).unwrap();
    io::write_graph(dir.join("b.json"), &circles.graphs[1]).unwrap();

    let config = PredictionTaskConfig {
        train: 8,
        test: 3,
        candidates: 4,
        nodes: 6,
        input_noise: 0.05,
    };
    let task = prediction_task(&config, 1).unwrap();
    let k_train = gaussian_kernel(task.train_inputs.view(), task.train_inputs.view(), 10.0).unwrap();
    let k_test = gaussian_kernel(task.train_inputs.view(), task.test_inputs.view(), 10.0).unwrap();
    let header = |n: usize, p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    io::write_matrix_csv(dir.join("k.csv"), &header(8, "g"), k_train.view()).unwrap();
    io::write_matrix_csv(dir.join("kx.csv"), &header(3, "x"), k_test.view()).unwrap();
    io::write_dataset(
        dir.join("y.json"),
        &Dataset {
            graphs: task.train_outputs.clone(),
            labels: None,
        },
    )
    .unwrap();
    io::write_candidates(
        dir.join("cand.json"),
        &CandidateSets {
            candidates: task.candidates.clone(),
            truths: Some(task.truths.clone()),
        },
    )
    .unwrap();

    let commands: [(&str, Vec<&str>); 8] = [
        ("generate circle", vec!["generate", "circle", "--count", "6"]),
        ("generate sbm", vec!["generate", "sbm", "--per-group", "2", "--nodes", "8,12"]),
        ("distance", vec!["distance", "a.json", "b.json", "--out", "d.json"]),
        ("gram", vec!["gram", "c.json", "--gamma", "2", "--distances", "dist.csv"]),
        (
            "barycenter",
            vec!["barycenter", "c.json", "--n", "8", "--gamma", "5e-5", "--outer-iters", "5"],
        ),
        (
            "dictlearn",
            vec![
                "dictlearn", "c.json", "--atoms", "3,4", "--epochs", "2", "--batch-size", "2", "--unmix-iters", "2",
                "--bary-iters", "2",
            ],
        ),
        (
            "cluster",
            vec!["cluster", "s.json", "--k", "3", "--centroid-size", "6", "--lloyd-iters", "3", "--bary-iters", "3"],
        ),
        (
            "predict",
            vec!["predict", "--gram", "k.csv", "--kernel", "kx.csv", "--outputs", "y.json", "--candidates", "cand.json"],
        ),
    ];
    let failed: Vec<&str> = commands
        .iter()
        .filter(|(_, args)| !identical_across_runs(dir, args))
        .map(|(name, _)| *name)
        .collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} subcommands byte-identical across runs with 1, 2 and 4 threads", commands.len())
        } else {
            format!("differing or failing: {}", failed.join(", "))
        },
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion("1 tensor contractions vs quadruple loops", Some(secs(10)), contraction_oracle),
        criterion("2 gradient vs finite differences", Some(secs(30)), gradient_check),
        criterion("3 line-search polynomial identity", None, line_search_identity),
        criterion("4 solver descent and identity", None, solver_descent),
        criterion("5 symmetry and relaxed triangle inequality", None, metric_properties),
        criterion("6 barycenter block updates", None, barycenter_math),
        criterion("7 circle barycenters", Some(secs(60)), circle_experiment),
        criterion("8 dictionary learning", Some(secs(600)), dictionary_experiment),
        criterion("9 clustering", Some(secs(600)), clustering_experiment),
        criterion("10 structured prediction", Some(secs(300)), prediction_experiment),
        criterion("11 CLI determinism", None, cli_determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
