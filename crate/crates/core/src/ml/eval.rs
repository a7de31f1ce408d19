//! Held-out evaluation summaries.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::ml::MlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EvalTask {
    Discrimination,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InferenceStats {
    pub mean_ms: f64,
    pub p99_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectEval {
    pub predictions: Vec<f64>,
    pub true_shore: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub task: EvalTask,
    pub accuracy: Option<f64>,
    /// confusion[truth][predicted] counts.
    pub confusion: Option<Vec<Vec<usize>>>,
    pub mse_shore: Option<f64>,
    pub rmse_shore: Option<f64>,
    pub per_object: Option<BTreeMap<String, ObjectEval>>,
    pub inference_stats: Option<InferenceStats>,
}

impl EvalReport {
    fn empty(task: EvalTask) -> Self {
        EvalReport {
            task,
            accuracy: None,
            confusion: None,
            mse_shore: None,
            rmse_shore: None,
            per_object: None,
            inference_stats: None,
        }
    }

    pub fn with_inference_stats(mut self, stats: InferenceStats) -> Self {
        self.inference_stats = Some(stats);
        self
    }
}

/// Accuracy and confusion counts over predicted class indices.
pub fn evaluate_discrimination(
    predicted: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<EvalReport, MlError> {
    if predicted.is_empty() {
        return Err(MlError::EmptyInput);
    }
    if predicted.len() != truth.len() {
        return Err(MlError::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    if predicted.iter().chain(truth).any(|&c| c >= n_classes) {
        return Err(MlError::BadParam("class index outside the confusion matrix"));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut hits = 0usize;
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
        if p == t {
            hits += 1;
        }
    }
    let mut report = EvalReport::empty(EvalTask::Discrimination);
    report.accuracy = Some(hits as f64 / predicted.len() as f64);
    report.confusion = Some(confusion);
    Ok(report)
}

/// Mean squared error in shore units, with its square root.
pub fn evaluate_regression(
    predicted_shore: &[f64],
    truth_shore: &[f64],
) -> Result<EvalReport, MlError> {
    if predicted_shore.is_empty() {
        return Err(MlError::EmptyInput);
    }
    if predicted_shore.len() != truth_shore.len() {
        return Err(MlError::LengthMismatch {
            left: predicted_shore.len(),
            right: truth_shore.len(),
        });
    }
    let mut acc = 0.0;
    for (&p, &t) in predicted_shore.iter().zip(truth_shore) {
        let d = p - t;
        acc += d * d;
    }
    let mse = acc / predicted_shore.len() as f64;
    let mut report = EvalReport::empty(EvalTask::Regression);
    report.mse_shore = Some(mse);
    report.rmse_shore = Some(math::sqrt(mse));
    Ok(report)
}

/// Regression report grouped by named object: (name, predicted, true shore).
pub fn evaluate_objects(entries: &[(&str, f64, f64)]) -> Result<EvalReport, MlError> {
    if entries.is_empty() {
        return Err(MlError::EmptyInput);
    }
    let preds: Vec<f64> = entries.iter().map(|e| e.1).collect();
    let truths: Vec<f64> = entries.iter().map(|e| e.2).collect();
    let mut report = evaluate_regression(&preds, &truths)?;
    let mut map: BTreeMap<String, ObjectEval> = BTreeMap::new();
    for &(name, pred, truth) in entries {
        let slot = map
            .entry(String::from(name))
            .or_insert(ObjectEval { predictions: Vec::new(), true_shore: truth });
        if slot.true_shore != truth {
            return Err(MlError::BadParam("conflicting true shore for one object"));
        }
        slot.predictions.push(pred);
    }
    report.per_object = Some(map);
    Ok(report)
}
