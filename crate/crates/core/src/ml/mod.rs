//! Learning machinery: RBF kernel machines trained by sequential minimal
//! optimization, and a small 1-D convolutional network trained with Adam.
//!
//! Everything here is deterministic given its inputs and seeds, runs in 64-bit
//! arithmetic, and stores whatever preprocessing constants it needs so a
//! serialized model predicts without outside help.

use alloc::vec::Vec;
use core::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dsp::{self, WindowKind, WindowSpec};
use crate::math;
use crate::synth::GraspTrace;

pub mod conv;
pub mod eval;
pub mod kernel;
pub mod model_fmt;
pub mod optim;
pub mod smo;
pub mod svc;
pub mod svr;

pub use conv::{ConvModel, ConvSpec, HeadKind, build_conv_model};
pub use eval::EvalReport;
pub use kernel::{KernelKind, KernelModel, Prediction, rbf_kernel};
pub use model_fmt::ModelFile;
pub use optim::{ConvTargets, TrainLog, TrainSchedule, train_conv};
pub use svc::{SvcParams, train_svc};
pub use svr::{SvrParams, train_svr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MlError {
    EmptyInput,
    LengthMismatch { left: usize, right: usize },
    /// Classification needs at least two distinct labels.
    SingleClass,
    FeatureMismatch { expected: usize, got: usize },
    /// Model head does not fit the requested task or target kind.
    HeadMismatch,
    BadParam(&'static str),
    NonFinite,
    Parse { line: usize, what: &'static str },
}

impl fmt::Display for MlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MlError::EmptyInput => write!(f, "empty training input"),
            MlError::LengthMismatch { left, right } => {
                write!(f, "mismatched lengths: {left} vs {right}")
            }
            MlError::SingleClass => write!(f, "need at least two distinct classes"),
            MlError::FeatureMismatch { expected, got } => {
                write!(f, "expected {expected} features, got {got}")
            }
            MlError::HeadMismatch => write!(f, "model head does not match the task"),
            MlError::BadParam(s) => write!(f, "bad parameter: {s}"),
            MlError::NonFinite => write!(f, "non-finite value encountered"),
            MlError::Parse { line, what } => write!(f, "model parse error at line {line}: {what}"),
        }
    }
}

impl core::error::Error for MlError {}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Input normalization baked into a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preprocess {
    /// Caller hands over windows that are already normalized.
    External,
    /// Subtract the window's own mean, then divide by a global scale fitted
    /// on the training set. Makes predictions invariant to constant offsets.
    WindowMeanSigma { sigma_v: f64 },
}

impl Preprocess {
    /// Fit the global scale: pooled standard deviation of all mean-subtracted
    /// training samples, floored to keep degenerate sets usable.
    pub fn fit_window_mean_sigma(windows: &[Vec<f64>]) -> Result<Self, MlError> {
        if windows.is_empty() || windows[0].is_empty() {
            return Err(MlError::EmptyInput);
        }
        let mut acc = 0.0;
        let mut count = 0usize;
        for w in windows {
            let m = math::mean(w);
            for x in w {
                let d = x - m;
                acc += d * d;
            }
            count += w.len();
        }
        let sigma = math::sqrt(acc / count as f64).max(1e-9);
        Ok(Preprocess::WindowMeanSigma { sigma_v: sigma })
    }

    pub fn apply(&self, window: &[f64]) -> Vec<f64> {
        match *self {
            Preprocess::External => window.to_vec(),
            Preprocess::WindowMeanSigma { sigma_v } => {
                let m = math::mean(window);
                window.iter().map(|x| (x - m) / sigma_v).collect()
            }
        }
    }

    pub fn apply_all(&self, windows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        windows.iter().map(|w| self.apply(w)).collect()
    }
}

// ---------------------------------------------------------------------------
// Shared utilities
// ---------------------------------------------------------------------------

/// Deterministic shuffled split into (train, validation) index sets.
pub fn seeded_split(n: usize, val_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let n_val = ((n as f64) * val_frac) as usize;
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Default RBF width 1/(d * var), with var pooled over all features.
pub fn default_gamma(windows: &[Vec<f64>]) -> Result<f64, MlError> {
    if windows.is_empty() || windows[0].is_empty() {
        return Err(MlError::EmptyInput);
    }
    let d = windows[0].len();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut count = 0usize;
    for w in windows {
        for x in w {
            sum += x;
            sum2 += x * x;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    let var = (sum2 / count as f64 - mean * mean).max(0.0);
    if var > 0.0 { Ok(1.0 / (d as f64 * var)) } else { Ok(1.0 / d as f64) }
}

/// Post-contact stiffness windows with their shore targets, cut at the
/// ground-truth first-contact sample of each trace.
pub fn stiffness_training_set(
    traces: &[GraspTrace],
    spec: &WindowSpec,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), MlError> {
    if traces.is_empty() {
        return Err(MlError::EmptyInput);
    }
    let mut windows = Vec::with_capacity(traces.len());
    let mut shores = Vec::with_capacity(traces.len());
    for tr in traces {
        let w = dsp::extract_window(&tr.vibration, tr.t_contact1, WindowKind::Stiffness, spec)
            .map_err(|_| MlError::FeatureMismatch {
                expected: spec.stiffness_samples(),
                got: tr.vibration.len().saturating_sub(tr.t_contact1),
            })?;
        windows.push(w.to_vec());
        shores.push(tr.label.shore_a);
    }
    Ok((windows, shores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn split_is_seed_stable_and_disjoint() {
        let (tr1, va1) = seeded_split(100, 0.1, 9);
        let (tr2, va2) = seeded_split(100, 0.1, 9);
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(tr1.len(), 90);
        assert_eq!(va1.len(), 10);
        let mut all: Vec<usize> = tr1.iter().chain(&va1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (tr3, _) = seeded_split(100, 0.1, 10);
        assert_ne!(tr1, tr3);
    }

    #[test]
    fn window_mean_sigma_removes_offsets() {
        let windows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 6.0, 8.0]];
        let p = Preprocess::fit_window_mean_sigma(&windows).unwrap();
        let a = p.apply(&[1.0, 2.0, 3.0]);
        let b = p.apply(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let Preprocess::WindowMeanSigma { sigma_v } = p else { panic!() };
        // pooled: deviations 1,0,1 and 4,0,4 over 6 samples
        assert!((sigma_v - (34.0f64 / 6.0).sqrt()) < 1e-12);
    }

    #[test]
    fn default_gamma_matches_hand_arithmetic() {
        // two 2-dim points, pooled var of {0,2,1,3} = 1.25
        let windows = vec![vec![0.0, 2.0], vec![1.0, 3.0]];
        let g = default_gamma(&windows).unwrap();
        assert!((g - 1.0 / (2.0 * 1.25)).abs() < 1e-12);
        let flat = vec![vec![5.0, 5.0]];
        assert!((default_gamma(&flat).unwrap() - 0.5).abs() < 1e-15);
    }
}
