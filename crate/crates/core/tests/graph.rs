mod common;

use common::rng;
use fngw::generators::{
    even_block_sizes, generate_circle_graphs, generate_sbm_graph, BlockFeatures, CircleConfig, EdgeColor, SbmSpec,
};
use fngw::graph::validate_graph;
use fngw::preprocess::{laplacian_diffuse, normalized_laplacian, shortest_path_matrix, wl_relabel, Unreachable};
use fngw::{Error, Graph};
use ndarray::{array, Array1, Array2, Array3, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn floyd_warshall(adj: &Array2<f64>, directed: bool) -> Array2<f64> {
    let n = adj.nrows();
    let mut d = Array2::from_elem((n, n), f64::INFINITY);
    for i in 0..n {
        d[[i, i]] = 0.0;
        for j in 0..n {
            if i != j && adj[[i, j]] > 0.0 {
                d[[i, j]] = d[[i, j]].min(adj[[i, j]]);
                if !directed {
                    d[[j, i]] = d[[j, i]].min(adj[[i, j]]);
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[[i, k]] + d[[k, j]];
                if via < d[[i, j]] {
                    d[[i, j]] = via;
                }
            }
        }
    }
    let max = d.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    d.mapv(|v| if v.is_finite() { v } else { max })
}

fn random_adjacency(r: &mut impl Rng, n: usize, density: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i != j && r.random_bool(density) {
            r.random_range(0.1..5.0)
        } else {
            0.0
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn shortest_paths_match_floyd_warshall(seed in any::<u64>(), n in 1usize..=12, directed in any::<bool>(), density in 0.05f64..0.6) {
        let mut r = rng(seed);
        let adj = random_adjacency(&mut r, n, density);
        let d = shortest_path_matrix(adj.view(), directed, Unreachable::FillMax).unwrap();
        let oracle = floyd_warshall(&adj, directed);
        for ((i, j), &v) in d.indexed_iter() {
            prop_assert!((v - oracle[[i, j]]).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        let reach = floyd_warshall_reach(&adj, directed);
        for i in 0..n {
            prop_assert_eq!(d[[i, i]], 0.0);
            for j in 0..n {
                for k in 0..n {
                    if reach[[i, k]] && reach[[k, j]] {
                        prop_assert!(d[[i, j]] <= d[[i, k]] + d[[k, j]] + 1e-12);
                    }
                }
            }
        }
    }
}

fn floyd_warshall_reach(adj: &Array2<f64>, directed: bool) -> Array2<bool> {
    let n = adj.nrows();
    let mut reach = Array2::from_shape_fn((n, n), |(i, j)| i == j || adj[[i, j]] > 0.0 || (!directed && adj[[j, i]] > 0.0));
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[[i, k]] && reach[[k, j]] {
                    reach[[i, j]] = true;
                }
            }
        }
    }
    reach
}

#[test]
fn six_node_weighted_digraph_matches_the_oracle() {
    let mut r = rng(11);
    let adj = random_adjacency(&mut r, 6, 0.4);
    let d = shortest_path_matrix(adj.view(), true, Unreachable::FillMax).unwrap();
    let oracle = floyd_warshall(&adj, true);
    assert!(d.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn strict_mode_reports_unreachable_pairs() {
    let adj = array![[0.0, 1.0], [0.0, 0.0]];
    assert!(matches!(
        shortest_path_matrix(adj.view(), true, Unreachable::Strict),
        Err(Error::Unreachable { i: 1, j: 0 })
    ));
}

#[test]
fn validation_examples() {
    let g = Graph::new(array![[0.0]], array![[0.0]], Array3::zeros((1, 1, 2)), array![1.0]);
    assert!(g.is_ok());
    let err = Graph::new(Array2::zeros((2, 1)), Array2::zeros((2, 2)), Array3::zeros((2, 2, 1)), array![0.5, 0.6])
        .unwrap_err();
    assert!(err.to_string().contains("1.1"), "{err}");
    let err = Graph::new(Array2::zeros((2, 1)), Array2::zeros((2, 3)), Array3::zeros((2, 2, 1)), array![0.5, 0.5])
        .unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
    let err = Graph::new(array![[f64::NAN]], array![[0.0]], Array3::zeros((1, 1, 1)), array![1.0]).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }));
}

#[test]
fn wl_is_permutation_equivariant() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n = r.random_range(2..9);
        let mut adj = Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(i != j && r.random_bool(0.4))));
        adj = &adj + &adj.t();
        adj.mapv_inplace(|v| v.min(1.0));
        let labels: Vec<u64> = (0..n).map(|_| r.random_range(0..3)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        // node i of the copy is node perm[i] of the original
        let adj2 = Array2::from_shape_fn((n, n), |(i, j)| adj[[perm[i], perm[j]]]);
        let labels2: Vec<u64> = perm.iter().map(|&p| labels[p]).collect();
        let out = wl_relabel(&[labels, labels2], &[adj, adj2], 3).unwrap();
        for i in 0..n {
            assert_eq!(out[1].row(i), out[0].row(perm[i]));
        }
    }
}

fn taylor_exp(m: &Array2<f64>, terms: usize) -> Array2<f64> {
    let n = m.nrows();
    let mut term = Array2::<f64>::eye(n);
    let mut sum = term.clone();
    for k in 1..terms {
        term = term.dot(m) / k as f64;
        sum += &term;
    }
    sum
}

#[test]
fn diffusion_matches_the_taylor_series() {
    let mut r = rng(13);
    for _ in 0..5 {
        let mut a = Array2::from_shape_fn((5, 5), |(i, j)| if i < j && r.random_bool(0.6) { r.random_range(0.1..2.0) } else { 0.0 });
        a = &a + &a.t();
        let f = Array2::from_shape_fn((5, 3), |_| r.random_range(-1.0..1.0));
        let lap = normalized_laplacian(a.view()).unwrap();
        let oracle = taylor_exp(&(-0.6 * &lap), 30).dot(&f);
        let got = laplacian_diffuse(f.view(), a.view(), 0.6).unwrap();
        assert!(got.iter().zip(&oracle).all(|(x, y)| (x - y).abs() < 1e-8));
    }
}

#[test]
fn diffusion_is_a_contraction() {
    let mut r = rng(14);
    let mut a = Array2::from_shape_fn((6, 6), |(i, j)| if i < j && r.random_bool(0.5) { 1.0 } else { 0.0 });
    a = &a + &a.t();
    let eye = Array2::<f64>::eye(6);
    let op = laplacian_diffuse(eye.view(), a.view(), 1.3).unwrap();
    // power iteration on a symmetric PSD operator gives its spectral norm
    let mut v = Array1::from_elem(6, 1.0);
    for _ in 0..200 {
        v = op.dot(&v);
        let norm = v.dot(&v).sqrt();
        v /= norm;
    }
    let top = v.dot(&op.dot(&v));
    assert!(top > 0.0 && top <= 1.0 + 1e-12, "{top}");
    assert_eq!(laplacian_diffuse(eye.view(), Array2::zeros((6, 6)).view(), 2.0).unwrap(), eye);
}

#[test]
fn generated_graphs_are_valid_with_unit_channel_sums() {
    for g in generate_circle_graphs(&CircleConfig::default(), 5).unwrap() {
        assert!(validate_graph(&g).is_ok());
        assert!(g.edge_features().sum_axis(Axis(2)).iter().all(|&s| s == 1.0));
    }
    let spec = SbmSpec {
        block_sizes: even_block_sizes(20, 3),
        inter_block_prob: 0.3,
        features: BlockFeatures::Gaussian { std: 1.0 },
    };
    let g = generate_sbm_graph(&spec, 1).unwrap();
    assert!(validate_graph(&g).is_ok());
    assert!(g.edge_features().sum_axis(Axis(2)).iter().all(|&s| s == 1.0));
}

#[test]
fn sbm_cross_block_edges_concentrate_around_the_binomial_mean() {
    let sizes = vec![7, 7, 6];
    let prob = 0.3;
    // candidate pairs between adjacent blocks, counted once per unordered link
    let pairs = (sizes[0] * sizes[1] + sizes[1] * sizes[2]) as f64;
    let seeds = 50;
    let mut total = 0.0;
    for seed in 0..seeds {
        let spec = SbmSpec {
            block_sizes: sizes.clone(),
            inter_block_prob: prob,
            features: BlockFeatures::BlockIndex,
        };
        let g = generate_sbm_graph(&spec, seed).unwrap();
        let blue = g.edge_channel(EdgeColor::Blue as usize);
        let green = g.edge_channel(EdgeColor::Green as usize);
        assert_eq!(blue.sum(), green.sum());
        assert_eq!(blue.t(), green);
        total += blue.sum();
    }
    let mean = seeds as f64 * pairs * prob;
    let sigma = (seeds as f64 * pairs * prob * (1.0 - prob)).sqrt();
    assert!((total - mean).abs() <= 3.0 * sigma, "total {total}, mean {mean}, sigma {sigma}");
}
