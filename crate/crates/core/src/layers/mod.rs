//! Differentiable layers with hand-written reverse passes.

mod dense;
mod hlconv;
mod model;
mod temporal;

pub use dense::{DenseCache, DenseLayer};
pub use hlconv::{HLConvCache, HLConvLayer};
pub use model::{
    Backward, Branches, Checkpoint, Model, ModelConfig, ModelGrads, SampleInput, SpectralScale, Tape,
};
pub use temporal::{
    global_average_time, global_average_time_backward, max_pool_time, max_pool_time_backward, Series,
    TemporalConvLayer,
};

use rand::Rng;

/// Default negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.33;

#[inline]
pub fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Elementwise `x` for `x ≥ 0`, `α·x` otherwise.
pub fn leaky_relu(x: &[f64], slope: f64) -> Vec<f64> {
    x.iter().map(|&v| leaky(v, slope)).collect()
}

/// Gradient through the leaky ReLU given the pre-activation values.
pub fn leaky_relu_backward(pre: &[f64], grad: &[f64], slope: f64) -> Vec<f64> {
    pre.iter()
        .zip(grad)
        .map(|(&z, &g)| if z >= 0.0 { g } else { slope * g })
        .collect()
}

/// Inverted dropout. In train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the returned mask
/// holds the per-entry multiplier. Eval mode, or `rate == 0`, is the
/// identity and draws nothing from `rng`.
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    rate: f64,
    rng: &mut R,
    train: bool,
) -> (Vec<f64>, Option<Vec<f64>>) {
    if !train || rate == 0.0 {
        return (x.to_vec(), None);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let out = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
    (out, Some(mask))
}

pub fn dropout_backward(grad: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        None => grad.to_vec(),
        Some(m) => grad.iter().zip(m).map(|(g, m)| g * m).collect(),
    }
}

/// Uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot<R: Rng + ?Sized>(n: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}
