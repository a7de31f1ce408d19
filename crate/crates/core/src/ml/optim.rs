//! Adam with a halving step schedule.
//!
//! The scalar head regresses shore/100 under squared error; the softmax head
//! trains under cross-entropy. Both routes share the same backward pass
//! through the network body.

use alloc::vec;
use alloc::vec::Vec;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::math;
use crate::ml::MlError;
use crate::ml::conv::{ConvModel, ForwardCache, HeadKind};
use crate::ml::seeded_split;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Learning rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            lr0: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 40,
            decay_every: 5,
            decay_factor: 0.5,
            batch_size: 32,
            val_frac: 0.1,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * math::pow(self.decay_factor, (epoch / self.decay_every) as f64)
    }

    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(MlError::BadParam("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(MlError::BadParam("betas must be in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(MlError::BadParam("eps must be positive"));
        }
        if self.epochs == 0 || self.decay_every == 0 || self.batch_size == 0 {
            return Err(MlError::BadParam("epochs, decay period, batch size must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(MlError::BadParam("decay factor must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            return Err(MlError::BadParam("validation fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Training targets; shore values are scaled to shore/100 internally to match
/// `ConvModel::predict_shore`.
#[derive(Debug, Clone, Copy)]
pub enum ConvTargets<'a> {
    Classes(&'a [usize]),
    Shores(&'a [f64]),
}

impl ConvTargets<'_> {
    fn len(&self) -> usize {
        match self {
            ConvTargets::Classes(c) => c.len(),
            ConvTargets::Shores(s) => s.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Mean per-sample loss of each epoch, measured during the pass.
    pub train_loss: Vec<f64>,
    /// Mean validation loss after each epoch; NaN when the split leaves no
    /// validation samples.
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| math::exp(z - m)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy against a class index, with its gradient in logit
/// space. Uses the log-sum-exp form, safe for extreme logits.
fn cross_entropy(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &z in logits {
        sum += math::exp(z - m);
    }
    let loss = m + math::log(sum) - logits[class];
    let grad = logits
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let p = math::exp(z - m) / sum;
            if j == class { p - 1.0 } else { p }
        })
        .collect();
    (loss, grad)
}

fn sample_loss_grad(
    model: &ConvModel,
    cache: &ForwardCache,
    targets: &ConvTargets<'_>,
    i: usize,
) -> Result<(f64, Vec<f64>), MlError> {
    match (targets, &model.spec.head) {
        (ConvTargets::Classes(cls), HeadKind::Softmax { classes }) => {
            if cls[i] >= *classes {
                return Err(MlError::BadParam("class index outside the head"));
            }
            Ok(cross_entropy(&cache.output, cls[i]))
        }
        (ConvTargets::Shores(sh), HeadKind::Scalar) => {
            let t = sh[i] / 100.0;
            let d = cache.output[0] - t;
            Ok((d * d, vec![2.0 * d]))
        }
        _ => Err(MlError::HeadMismatch),
    }
}

/// Train a copy of `model`, returning it with the per-epoch loss curves.
pub fn train_conv(
    model: &ConvModel,
    windows: &[Vec<f64>],
    targets: ConvTargets<'_>,
    schedule: &TrainSchedule,
) -> Result<(ConvModel, TrainLog), MlError> {
    schedule.validate()?;
    model.validate()?;
    if windows.is_empty() {
        return Err(MlError::EmptyInput);
    }
    if windows.len() != targets.len() {
        return Err(MlError::LengthMismatch { left: windows.len(), right: targets.len() });
    }
    let (train_idx, val_idx) = seeded_split(windows.len(), schedule.val_frac, schedule.seed);
    if train_idx.is_empty() {
        return Err(MlError::EmptyInput);
    }

    let mut model = model.clone();
    let n_params = model.params.len();
    let mut m = vec![0.0f64; n_params];
    let mut v = vec![0.0f64; n_params];
    let mut step = 0u32;
    let mut order: Vec<usize> = train_idx.clone();
    let mut log = TrainLog {
        train_loss: Vec::with_capacity(schedule.epochs),
        val_loss: Vec::with_capacity(schedule.epochs),
        lr: Vec::with_capacity(schedule.epochs),
    };

    for epoch in 0..schedule.epochs {
        let lr = schedule.lr(epoch);
        let mut rng = ChaCha12Rng::seed_from_u64(schedule.seed);
        rng.set_stream(epoch as u64 + 1);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let mut grad_acc = vec![0.0f64; n_params];
            for &i in batch {
                let cache = model.forward_cached(&windows[i])?;
                let (loss, d_out) = sample_loss_grad(&model, &cache, &targets, i)?;
                epoch_loss += loss;
                let g = model.backward(&cache, &d_out)?;
                for (a, gi) in grad_acc.iter_mut().zip(&g) {
                    *a += gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            step += 1;
            let bc1 = 1.0 - math::pow(schedule.beta1, step as f64);
            let bc2 = 1.0 - math::pow(schedule.beta2, step as f64);
            for k in 0..n_params {
                let g = grad_acc[k] * scale;
                m[k] = schedule.beta1 * m[k] + (1.0 - schedule.beta1) * g;
                v[k] = schedule.beta2 * v[k] + (1.0 - schedule.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                model.params[k] -= lr * m_hat / (math::sqrt(v_hat) + schedule.eps);
            }
        }
        log.train_loss.push(epoch_loss / order.len() as f64);

        let mut val_loss = f64::NAN;
        if !val_idx.is_empty() {
            let mut acc = 0.0;
            for &i in &val_idx {
                let cache = model.forward_cached(&windows[i])?;
                acc += sample_loss_grad(&model, &cache, &targets, i)?.0;
            }
            val_loss = acc / val_idx.len() as f64;
        }
        log.val_loss.push(val_loss);
        log.lr.push(lr);
    }
    Ok((model, log))
}
