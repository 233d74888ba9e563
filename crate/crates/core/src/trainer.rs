//! Voxel-wise linear-softmax segmentation model trained with Adam.
//!
//! Each training volume is one batch element. The loss gradient with respect
//! to the probabilities is pulled back through the softmax and the linear
//! layer, averaged over the batch, and handed to Adam. The checkpoint with
//! the lowest validation loss is returned.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{LabelSetMap, ProbMap};
use crate::losses::LossSpec;
use crate::phantom::{FeatureMap, Phantom};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub num_labels: usize,
    pub num_features: usize,
    /// `num_labels × num_features`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Model {
    pub fn zeros(num_labels: usize, num_features: usize) -> Self {
        Self {
            num_labels,
            num_features,
            weights: vec![0.0; num_labels * num_features],
            bias: vec![0.0; num_labels],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights followed by biases.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn check_features(&self, features: &FeatureMap) -> Result<()> {
        if features.channels() != self.num_features {
            return Err(Error::ShapeMismatch { expected: self.num_features, found: features.channels() });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (k, z) in out.iter_mut().enumerate() {
            let w = &self.weights[k * self.num_features..(k + 1) * self.num_features];
            *z = self.bias[k] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Numerically stable softmax, in place.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

pub fn forward(model: &Model, features: &FeatureMap) -> Result<ProbMap> {
    model.check_features(features)?;
    let k = model.num_labels;
    let mut values = vec![0.0; features.dims().len() * k];
    for (i, row) in values.chunks_exact_mut(k).enumerate() {
        model.logits(features.row(i), row);
        softmax_in_place(row);
    }
    ProbMap::new_unchecked(features.dims(), k, values)
}

/// Pulls `∂loss/∂p` back to the model parameters (same layout as
/// [`Model::params`]), using `∂p_c/∂z_k = p_c (δ_ck - p_k)`.
pub fn backward(model: &Model, features: &FeatureMap, probs: &ProbMap, grad_p: &[f64]) -> Vec<f64> {
    let (k, f) = (model.num_labels, model.num_features);
    let mut grad = vec![0.0; model.num_params()];
    let (gw, gb) = grad.split_at_mut(k * f);
    let mut dz = vec![0.0; k];
    for (i, (p, gp)) in probs.rows().zip(grad_p.chunks_exact(k)).enumerate() {
        let inner: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum();
        for c in 0..k {
            dz[c] = p[c] * (gp[c] - inner);
        }
        let x = features.row(i);
        for c in 0..k {
            gb[c] += dz[c];
            let row = &mut gw[c * f..(c + 1) * f];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += dz[c] * xv;
            }
        }
    }
    grad
}

/// Loss value and parameter gradient of `spec` on one volume.
pub fn objective(
    model: &Model,
    features: &FeatureMap,
    annotation: &LabelSetMap,
    spec: &LossSpec,
) -> Result<(f64, Vec<f64>)> {
    let probs = forward(model, features)?;
    let r = spec.evaluate(&probs, annotation)?;
    Ok((r.value, backward(model, features, &probs, &r.gradient)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a better validation loss; 0 disables.
    pub early_stop_patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 3,
            max_epochs: 500,
            early_stop_patience: 50,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            split_fraction: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Seeded train/validation split of `n` volumes; both sides non-empty.
pub fn split_indices(n: usize, split_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = (((1.0 - split_fraction) * n as f64).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn mean_loss(model: &Model, volumes: &[&Phantom], spec: &LossSpec) -> Result<f64> {
    let losses = volumes
        .par_iter()
        .map(|v| Ok(spec.evaluate(&forward(model, &v.features)?, &v.partial)?.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains a fresh model on the partial annotations of `volumes`.
pub fn train(volumes: &[Phantom], spec: &LossSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if volumes.len() < 2 {
        return Err(Error::TooFewVolumes(volumes.len()));
    }
    let channels = volumes[0].features.channels();
    let num_labels = volumes[0].num_labels();
    if let Some(v) = volumes
        .iter()
        .find(|v| v.features.channels() != channels || v.num_labels() != num_labels)
    {
        return Err(Error::ShapeMismatch { expected: channels, found: v.features.channels() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut train_idx, val_idx) = split_indices(volumes.len(), cfg.split_fraction, &mut rng);
    let val_set: Vec<&Phantom> = val_idx.iter().map(|&i| &volumes[i]).collect();
    let train_set = |idx: &[usize]| idx.iter().map(|&i| &volumes[i]).collect::<Vec<_>>();

    let mut model = Model::zeros(num_labels, channels);
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), cfg);

    let initial_val = mean_loss(&model, &val_set, spec)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: mean_loss(&model, &train_set(&train_idx), spec)?,
        val_loss: initial_val,
    }];
    let mut best = (0, initial_val, params.clone());
    let mut since_best = 0;
    let mut step = 0;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| objective(&model, &volumes[i].features, &volumes[i].partial, spec))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; params.len()];
            for (value, g) in &results {
                if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteLoss { step });
                }
                for (acc, v) in grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
            let scale = 1.0 / results.len() as f64;
            grad.iter_mut().for_each(|v| *v *= scale);
            adam.step(&mut params, &grad);
            model.set_params(&params);
            step += 1;
        }
        let entry = EpochLog {
            epoch,
            train_loss: mean_loss(&model, &train_set(&train_idx), spec)?,
            val_loss: mean_loss(&model, &val_set, spec)?,
        };
        if !entry.train_loss.is_finite() || !entry.val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        log.push(entry);
        if entry.val_loss < best.1 {
            best = (epoch, entry.val_loss, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }

    model.set_params(&best.2);
    train_idx.sort_unstable();
    Ok(TrainOutcome {
        model,
        log,
        best_epoch: best.0,
        best_val_loss: best.1,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}
