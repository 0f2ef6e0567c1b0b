#![allow(dead_code)]

use hodgeconv::complex::SimplicialComplex;
use hodgeconv::laplacian::HodgeLaplacian;
use hodgeconv::layers::{Branches, Model, ModelConfig, SampleInput, SpectralScale};
use hodgeconv::pooling::PoolMode;
use hodgeconv::train::random_atlas;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph on `2..=max_nodes` nodes, optionally with all 3-cliques filled.
pub fn random_complex(rng: &mut ChaCha8Rng, max_nodes: usize, fill: bool) -> SimplicialComplex {
    let n = rng.random_range(2..=max_nodes);
    let p = rng.random_range(0.1..0.9);
    let g = SimplicialComplex::erdos_renyi(n, p, rng);
    if fill {
        g.with_triangles(g.three_cliques()).unwrap()
    } else {
        g
    }
}

/// Random complex whose edge count does not exceed `max_edges`.
pub fn random_complex_max_edges(rng: &mut ChaCha8Rng, max_edges: usize) -> SimplicialComplex {
    loop {
        let fill = rng.random_bool(0.5);
        let c = random_complex(rng, 10, fill);
        if c.n_edges() <= max_edges && c.n_edges() > 0 {
            return c;
        }
    }
}

/// Graph Laplacian `D - A` built from the edge list alone.
pub fn degree_minus_adjacency(c: &SimplicialComplex) -> Vec<Vec<f64>> {
    let n = c.n_nodes();
    let mut m = vec![vec![0.0; n]; n];
    for &[u, v] in c.edges() {
        m[u][v] -= 1.0;
        m[v][u] -= 1.0;
        m[u][u] += 1.0;
        m[v][v] += 1.0;
    }
    m
}

/// Closed-form Laguerre polynomials of degree 2 and 3.
pub fn laguerre_t2(x: f64) -> f64 {
    (x * x - 4.0 * x + 2.0) / 2.0
}

pub fn laguerre_t3(x: f64) -> f64 {
    (-x * x * x + 9.0 * x * x - 18.0 * x + 6.0) / 6.0
}

/// Dense `L · x` for checking sparse products.
pub fn dense_apply(l: &HodgeLaplacian, x: &[f64]) -> Vec<f64> {
    l.matrix.to_dense().iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Relative error with a floor on the denominator so that gradients that
/// are zero up to rounding compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

pub const FD_STEP: f64 = 1e-6;

/// Central difference of `f` at `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let plus = f(x);
    x[i] = orig - FD_STEP;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Small connected 5-node complex with its 3-cliques filled.
pub fn five_node_complex(seed: u64) -> SimplicialComplex {
    let mut r = rng(seed);
    let g = random_atlas(5, 0.6, &mut r).unwrap();
    g.with_triangles(g.three_cliques()).unwrap()
}

/// Full two-branch architecture at toy size, with pooling and dropout on.
pub fn tiny_config(pool_mode: PoolMode) -> ModelConfig {
    ModelConfig {
        branches: Branches::Both,
        temporal_channels: vec![2, 2],
        temporal_kernels: vec![3, 2],
        node_channels: vec![3, 2],
        node_order: 3,
        edge_channels: vec![2, 3],
        edge_order: 3,
        head_hidden: vec![4],
        dropout: 0.3,
        dropout_conv: true,
        pool_mode,
        init_seed: 5,
        ..ModelConfig::default()
    }
}

pub fn random_input(c: &SimplicialComplex, time_len: usize, seed: u64) -> SampleInput {
    let mut r = rng(seed);
    SampleInput {
        node_series: (0..c.n_nodes() * time_len).map(|_| r.random_range(-1.0..1.0)).collect(),
        time_len,
        edge_features: (0..c.n_edges()).map(|_| r.random_range(-1.0..1.0)).collect(),
    }
}

/// Squared-error loss of one sample with dropout masks fixed by `mask_seed`.
pub fn model_loss(model: &Model, input: &SampleInput, target: f64, mask_seed: u64) -> f64 {
    let (y, _) = model.forward(input, &mut rng(mask_seed), true).unwrap();
    0.5 * (y - target) * (y - target)
}

/// Moves every parameter off its initial value. Biases start at exactly zero,
/// so a receptive field that dropout zeroes out would otherwise put a
/// pre-activation on the leaky-ReLU kink, where the loss has no derivative.
pub fn jitter_parameters(model: &mut Model, seed: u64) {
    let mut r = rng(seed ^ 0x5eed);
    for slot in model.parameters_mut() {
        for v in slot.iter_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
}

/// Largest relative error between analytic and finite-difference gradients
/// over every parameter and both inputs of a model. The target sits half a
/// unit from the prediction so the loss stays small and the central
/// difference is not dominated by cancellation in the loss value.
pub fn model_gradient_error(model: &Model, input: &SampleInput, mask_seed: u64) -> f64 {
    let (y, tape) = model.forward(input, &mut rng(mask_seed), true).unwrap();
    let target = y - 0.5;
    let back = model.backward(&tape, y - target).unwrap();
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for (slot, analytic) in back.grads.0.iter().enumerate() {
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe.parameters()[slot][i];
            probe.parameters_mut()[slot][i] = orig + FD_STEP;
            let plus = model_loss(&probe, input, target, mask_seed);
            probe.parameters_mut()[slot][i] = orig - FD_STEP;
            let minus = model_loss(&probe, input, target, mask_seed);
            probe.parameters_mut()[slot][i] = orig;
            worst = worst.max(rel_err(a, (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    let mut x = input.clone();
    for i in 0..x.edge_features.len() {
        let n = central_diff(&mut x.edge_features, i, |e| {
            let probe = SampleInput { edge_features: e.to_vec(), ..input.clone() };
            model_loss(model, &probe, target, mask_seed)
        });
        worst = worst.max(rel_err(back.edge_features[i], n));
    }
    for i in 0..x.node_series.len() {
        let n = central_diff(&mut x.node_series, i, |s| {
            let probe = SampleInput { node_series: s.to_vec(), ..input.clone() };
            model_loss(model, &probe, target, mask_seed)
        });
        worst = worst.max(rel_err(back.node_series[i], n));
    }
    worst
}

/// Scaled-down configuration used for the end-to-end learning checks:
/// both branches, node pooling on, edge pooling off, no dropout.
pub fn learning_config(seed: u64) -> ModelConfig {
    ModelConfig {
        branches: Branches::Both,
        temporal_channels: vec![2],
        temporal_kernels: vec![3],
        node_channels: vec![4],
        node_order: 2,
        node_pooling: true,
        edge_channels: vec![4],
        edge_order: 2,
        edge_pooling: false,
        head_hidden: vec![16],
        dropout: 0.0,
        spectral_scale: SpectralScale::Auto,
        init_seed: seed,
        ..ModelConfig::default()
    }
}

/// Indices of the `k` largest values, ascending.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b)));
    let mut top = idx[..k.min(values.len())].to_vec();
    top.sort_unstable();
    top
}
