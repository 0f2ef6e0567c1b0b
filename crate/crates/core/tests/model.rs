mod common;

use common::*;
use hodgeconv::complex::SimplicialComplex;
use hodgeconv::filters::{laguerre_eval, laguerre_terms, FilterBank};
use hodgeconv::laplacian::{hodge_laplacian, spectral_filter_reference};
use hodgeconv::layers::{leaky, Branches, Model, ModelConfig, SampleInput};
use hodgeconv::signal::SimplexSignal;
use hodgeconv::train::{
    fit, generate_synthetic, history_csv, saliency_map, Dataset, SyntheticSpec, TrainConfig,
};
use rand::Rng;

/// Edge-only model whose readout is the identity filter and whose single
/// dense layer reads edge `read` with weight 1.
fn edge_reader(atlas: &SimplicialComplex, read: usize) -> Model {
    let config = ModelConfig {
        branches: Branches::EdgeOnly,
        edge_channels: vec![],
        edge_order: 2,
        head_hidden: vec![],
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, atlas).unwrap();
    let readout = model.edge_readout.as_mut().unwrap();
    readout.bank.theta = vec![1.0, 0.0];
    readout.bias = vec![0.0];
    let head = &mut model.head[0];
    head.weights.iter_mut().for_each(|w| *w = 0.0);
    head.weights[read] = 1.0;
    head.bias = vec![0.0];
    model
}

fn edge_dataset(atlas: &SimplicialComplex, rows: &[Vec<f64>]) -> Dataset {
    Dataset {
        atlas: atlas.clone(),
        samples: rows
            .iter()
            .map(|e| SampleInput { node_series: vec![0.0; atlas.n_nodes()], time_len: 1, edge_features: e.clone() })
            .collect(),
        targets: vec![0.0; rows.len()],
        planted: None,
    }
}

#[test]
fn identity_edge_model_passes_the_feature_through_leaky() {
    let atlas = SimplicialComplex::path(2);
    let model = edge_reader(&atlas, 0);
    for x in [2.0, -3.0, 0.0, 0.125] {
        let input = SampleInput { node_series: vec![0.0; 2], time_len: 1, edge_features: vec![x] };
        assert_eq!(model.predict(&input).unwrap(), leaky(x, 0.33));
    }
    let input = SampleInput { node_series: vec![0.0; 2], time_len: 1, edge_features: vec![-3.0] };
    assert!((model.predict(&input).unwrap() + 0.99).abs() < 1e-15);
}

#[test]
fn saliency_of_a_single_edge_reader() {
    let atlas = SimplicialComplex::path(4);
    let model = edge_reader(&atlas, 1);
    let data = edge_dataset(&atlas, &[vec![0.3, 0.5, -0.2], vec![-1.0, 2.0, 0.7], vec![0.1, 0.9, 0.0]]);
    let sal = saliency_map(&model, &data).unwrap();
    assert_eq!(sal.edges, vec![0.0, 1.0, 0.0]);
    assert!(sal.nodes.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_model_has_zero_saliency() {
    let spec = SyntheticSpec { n_samples: 6, n_nodes: 6, time_len: 8, density: 0.5, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec).unwrap();
    let mut model = Model::new(learning_config(0), &data.atlas).unwrap();
    model.parameters_mut().into_iter().for_each(|p| p.fill(0.0));
    let sal = saliency_map(&model, &data).unwrap();
    assert!(sal.edges.iter().chain(&sal.nodes).all(|&v| v == 0.0));
}

#[test]
fn non_finite_model_is_rejected_by_saliency() {
    let atlas = SimplicialComplex::path(3);
    let mut model = edge_reader(&atlas, 0);
    model.head[0].bias[0] = f64::NAN;
    let data = edge_dataset(&atlas, &[vec![1.0, 1.0]]);
    assert!(saliency_map(&model, &data).is_err());
}

#[test]
fn filter_gradient_matches_closed_form() {
    // loss = ½|f′|² with f′ = Σ θ_p T_p(L/s) f, so dloss/dθ_p = f′ᵀ T_p(L/s) f.
    let mut r = rng(3);
    let c = five_node_complex(3);
    let l = hodge_laplacian(&c, 1).unwrap();
    let scale = 2.0;
    let theta: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
    let bank = FilterBank::new(4, 1, 1, scale, theta.clone()).unwrap();
    let f = SimplexSignal::column((0..l.dim()).map(|_| r.random_range(-1.0..1.0)).collect());
    let out = spectral_filter_reference(&l, bank.spectrum(0, 0), &f).unwrap();
    let terms = laguerre_terms(&l, scale, &f, 4).unwrap();
    let (grad, _) = bank.backward(&l, &terms, &out).unwrap();
    for (p, g) in grad.iter().enumerate() {
        let tp = spectral_filter_reference(&l, |lam| laguerre_eval(4, lam / scale)[p], &f).unwrap();
        let expected: f64 = out.values().iter().zip(tp.values()).map(|(a, b)| a * b).sum();
        assert!(rel_err(*g, expected) < 1e-10, "p={p}: {g} vs {expected}");

        let loss = |th: &[f64]| {
            let b = FilterBank::new(4, 1, 1, scale, th.to_vec()).unwrap();
            let y = spectral_filter_reference(&l, b.spectrum(0, 0), &f).unwrap();
            0.5 * y.values().iter().map(|v| v * v).sum::<f64>()
        };
        let mut th = theta.clone();
        let numeric = central_diff(&mut th, p, loss);
        assert!(rel_err(*g, numeric) < 1e-5);
    }
}

fn small_dataset(seed: u64) -> Dataset {
    let spec = SyntheticSpec { seed, n_samples: 30, n_nodes: 8, time_len: 8, density: 0.4, ..SyntheticSpec::default() };
    generate_synthetic(&spec).unwrap()
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let data = small_dataset(1);
    let mut model = Model::new(learning_config(1), &data.atlas).unwrap();
    let before = model.clone();
    let report = fit(&mut model, &data, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
    assert!(report.history.is_empty());
    assert_eq!(report.selected_epoch, None);
    assert_eq!(model.parameters(), before.parameters());
}

#[test]
fn fixed_seed_gives_identical_histories() {
    let data = small_dataset(2);
    let mut config = learning_config(2);
    config.dropout = 0.3;
    let cfg = TrainConfig { epochs: 5, batch_size: 8, seed: 4, ..TrainConfig::default() };
    let run = || {
        let mut model = Model::new(config.clone(), &data.atlas).unwrap();
        let report = fit(&mut model, &data, &cfg).unwrap();
        (history_csv(&report.history), model.to_checkpoint())
    };
    let (h1, c1) = run();
    let (h2, c2) = run();
    assert_eq!(h1, h2);
    assert_eq!(c1, c2);
    assert_eq!(h1.lines().count(), 6);
}

#[test]
fn saliency_ranks_planted_edges_by_weight() {
    let spec = SyntheticSpec { seed: 5, planted_weights: Some(vec![2.0, 1.0]), ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec).unwrap();
    let planted = data.planted.clone().unwrap();
    let mut model = Model::new(learning_config(5), &data.atlas).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.02,
        lr_decay: 0.99,
        weight_decay: 0.0,
        epochs: 200,
        val_fraction: 0.0,
        seed: 5,
        ..TrainConfig::default()
    };
    fit(&mut model, &data, &cfg).unwrap();
    let sal = saliency_map(&model, &data).unwrap();
    let strong = planted.edges.iter().find(|p| p.weight == 2.0).unwrap().edge;
    let weak = planted.edges.iter().find(|p| p.weight == 1.0).unwrap().edge;
    assert_eq!(top_k(&sal.edges, 2), {
        let mut v = vec![strong, weak];
        v.sort_unstable();
        v
    });
    assert!(sal.edges[strong] > sal.edges[weak], "{} <= {}", sal.edges[strong], sal.edges[weak]);
}
