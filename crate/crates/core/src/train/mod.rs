//! Adam, RMSE, synthetic data, the training loop and saliency maps.

mod data;
mod saliency;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use data::{
    generate_synthetic, random_atlas, Dataset, Planted, PlantedEdge, SyntheticSpec, TargetKind,
};
pub use saliency::{saliency_map, Saliency};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::layers::{Model, ModelConfig, ModelGrads};

/// Optimizer and schedule settings. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub weight_decay: f64,
    /// Apply weight decay directly to the parameters instead of adding it
    /// to the gradient.
    pub decoupled_weight_decay: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
    /// Finish with the parameters of the best validation epoch.
    pub restore_best: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            lr_decay: 0.95,
            weight_decay: 0.005,
            decoupled_weight_decay: false,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            val_fraction: 0.2,
            restore_best: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a nonnegative number");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return bad("lr_decay must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// Adam moment estimates for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub decoupled: bool,
}

impl AdamState {
    /// Zero moments for tensors of the given lengths, standard betas, no decay.
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            decoupled: false,
        }
    }

    pub fn from_config(shapes: &[usize], cfg: &TrainConfig) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            weight_decay: cfg.weight_decay,
            decoupled: cfg.decoupled_weight_decay,
            ..Self::new(shapes)
        }
    }
}

/// One bias-corrected Adam update. Coupled weight decay adds `wd·p` to the
/// gradient; decoupled decay scales `p` by `1 - lr·wd` before the step.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[Vec<f64>], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape("parameter, gradient and moment lists differ in length"));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::shape("parameter and gradient tensors differ in length"));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let wd = state.weight_decay;
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let mut gi = g[i];
            if state.decoupled {
                p[i] -= lr * wd * p[i];
            } else {
                gi += wd * p[i];
            }
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "rmse needs equal nonempty inputs, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Seeded split into sorted `(train, val)` index lists. A nonzero fraction
/// keeps at least one sample on each side when there are two or more.
pub fn train_val_split(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_val = (n as f64 * val_fraction).round() as usize;
    if val_fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    } else {
        n_val = n_val.min(n);
    }
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Eval-mode predictions for the given samples.
pub fn predict_all(model: &Model, data: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    indices.iter().map(|&i| model.predict(&data.samples[i])).collect()
}

pub fn evaluate(model: &Model, data: &Dataset, indices: &[usize]) -> Result<f64> {
    let preds = predict_all(model, data, indices)?;
    let targets: Vec<f64> = indices.iter().map(|&i| data.targets[i]).collect();
    rmse(&preds, &targets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: Option<f64>,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds on return, if any training ran.
    pub selected_epoch: Option<usize>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_rmse,val_rmse,lr\n");
    for r in history {
        let val = r.val_rmse.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.epoch, fmt_f64(r.train_rmse), val, fmt_f64(r.lr));
    }
    out
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, history_csv(history))?;
    Ok(())
}

/// Trains on a seeded train/validation split of `data`.
pub fn fit(model: &mut Model, data: &Dataset, config: &TrainConfig) -> Result<FitReport> {
    config.validate()?;
    let (train, val) = train_val_split(data.len(), config.val_fraction, config.seed);
    fit_indices(model, data, &train, &val, config)
}

/// Minibatch Adam on `train`, evaluating RMSE on both index sets after
/// every epoch. Loss is the batch mean of `½(ŷ - y)²`.
pub fn fit_indices(
    model: &mut Model,
    data: &Dataset,
    train: &[usize],
    val: &[usize],
    config: &TrainConfig,
) -> Result<FitReport> {
    config.validate()?;
    data.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    if model.n_nodes != data.atlas.n_nodes() || model.n_edges != data.atlas.n_edges() {
        return Err(Error::shape("model was built for a different atlas"));
    }
    let shapes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::from_config(&shapes, config);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order = train.to_vec();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
    let mut lr = config.learning_rate;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads = ModelGrads::zeros_like(model);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (y, tape) = model.forward(&data.samples[i], &mut dropout_rng, true)?;
                let residual = y - data.targets[i];
                if !residual.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                let back = model.backward(&tape, residual * scale)?;
                grads.add_scaled(&back.grads, 1.0);
            }
            if !grads.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            adam_step(&mut model.parameters_mut(), &grads.0, &mut adam, lr)?;
        }
        let train_rmse = evaluate(model, data, train)?;
        let val_rmse = if val.is_empty() { None } else { Some(evaluate(model, data, val)?) };
        if !train_rmse.is_finite() || val_rmse.is_some_and(|v| !v.is_finite()) || !model.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(EpochRecord { epoch, train_rmse, val_rmse, lr });
        if let Some(v) = val_rmse {
            if config.restore_best && best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                let snapshot = model.parameters().iter().map(|p| p.to_vec()).collect();
                best = Some((v, epoch, snapshot));
            }
        }
        lr *= config.lr_decay;
    }

    let mut selected_epoch = history.last().map(|r| r.epoch);
    if let Some((_, epoch, snapshot)) = best {
        for (p, s) in model.parameters_mut().into_iter().zip(snapshot) {
            p.copy_from_slice(&s);
        }
        selected_epoch = Some(epoch);
    }
    Ok(FitReport { history, selected_epoch, train_indices: train.to_vec(), val_indices: val.to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub val_rmse: f64,
}

/// `repeats` rounds of `folds`-fold cross-validation, each fold trained from
/// a fresh model. The held-out fold is never used for model selection.
pub fn cross_validate(
    model_config: &ModelConfig,
    data: &Dataset,
    config: &TrainConfig,
    folds: usize,
    repeats: usize,
) -> Result<Vec<FoldResult>> {
    if folds < 2 || folds > data.len() {
        return Err(Error::InvalidParameter(format!(
            "need between 2 and {} folds, got {folds}",
            data.len()
        )));
    }
    let cfg = TrainConfig { restore_best: false, ..config.clone() };
    let mut out = Vec::with_capacity(folds * repeats);
    for repeat in 0..repeats {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(repeat as u64)));
        for fold in 0..folds {
            let (lo, hi) = (fold * data.len() / folds, (fold + 1) * data.len() / folds);
            let mut held: Vec<usize> = idx[lo..hi].to_vec();
            let mut rest: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
            held.sort_unstable();
            rest.sort_unstable();
            let mut model = Model::new(model_config.clone(), &data.atlas)?;
            fit_indices(&mut model, data, &rest, &[], &cfg)?;
            out.push(FoldResult { repeat, fold, val_rmse: evaluate(&model, data, &held)? });
        }
    }
    Ok(out)
}
