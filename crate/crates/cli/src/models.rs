//! Model files on disk plus the adapters that turn a parsed model into
//! something the replay loop can call.

use std::fs;
use std::path::Path;

use stiffsense_core::ml::conv::HeadKind;
use stiffsense_core::ml::model_fmt::{self, ModelFile};
use stiffsense_core::ml::{KernelKind, KernelModel, MlError};
use stiffsense_core::pipeline::{LabeledConv, StiffnessModel};

use crate::error::CliError;

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    model_fmt::parse_model(&text)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<(), CliError> {
    fs::write(path, model_fmt::write_model(model)).map_err(|e| CliError::io(path, e))
}

/// Subtract the window's own mean. Removes the ADC bias level without
/// touching the ring-down amplitude; applied to conv inputs at training and
/// inference so both sides see the same conditioning. Kernel models carry
/// their normalization inside the model file instead.
pub fn center(window: &[f64]) -> Vec<f64> {
    let mean = window.iter().sum::<f64>() / window.len().max(1) as f64;
    window.iter().map(|x| x - mean).collect()
}

pub fn center_all(windows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    windows.iter().map(|w| center(w)).collect()
}

/// Distinct values ascending; the class index space for discrimination.
pub fn class_table(shores: &[f64]) -> Vec<f64> {
    let mut t = shores.to_vec();
    t.sort_by(|a, b| a.partial_cmp(b).expect("finite shore labels"));
    t.dedup();
    t
}

pub fn class_index(table: &[f64], shore: f64) -> Option<usize> {
    table.iter().position(|&s| s == shore)
}

pub fn kind_name(model: &ModelFile) -> &'static str {
    match model {
        ModelFile::Kernel(k) if k.kind == KernelKind::Classifier => "svc",
        ModelFile::Kernel(_) => "svr",
        ModelFile::Conv(c) => match c.spec.head {
            HeadKind::Softmax { .. } => "conv-class",
            HeadKind::Scalar => "conv-reg",
        },
    }
}

/// A parsed model wired up for the replay loop. Conv inputs are centered
/// here; kernel models normalize internally.
pub enum RuntimeModel<'a> {
    Kernel(&'a KernelModel),
    ConvScalar(&'a stiffsense_core::ml::ConvModel),
    ConvClasses(LabeledConv<'a>),
}

impl StiffnessModel for RuntimeModel<'_> {
    fn window_len(&self) -> usize {
        match self {
            RuntimeModel::Kernel(m) => m.window_len(),
            RuntimeModel::ConvScalar(m) => m.window_len(),
            RuntimeModel::ConvClasses(m) => m.window_len(),
        }
    }

    fn estimate(&self, window: &[f64]) -> Result<f64, MlError> {
        match self {
            RuntimeModel::Kernel(m) => m.estimate(window),
            RuntimeModel::ConvScalar(m) => m.estimate(&center(window)),
            RuntimeModel::ConvClasses(m) => m.estimate(&center(window)),
        }
    }
}

/// `class_shores` maps softmax class indices to shore values and must come
/// from the same label set the classifier was trained on.
pub fn runtime_model<'a>(
    model: &'a ModelFile,
    class_shores: &[f64],
) -> Result<RuntimeModel<'a>, CliError> {
    match model {
        ModelFile::Kernel(k) => Ok(RuntimeModel::Kernel(k)),
        ModelFile::Conv(c) => match c.spec.head {
            HeadKind::Scalar => Ok(RuntimeModel::ConvScalar(c)),
            HeadKind::Softmax { classes } => {
                if classes != class_shores.len() {
                    return Err(CliError::data(format!(
                        "classifier has {classes} classes but the shore table has {}",
                        class_shores.len()
                    )));
                }
                Ok(RuntimeModel::ConvClasses(LabeledConv {
                    model: c,
                    class_shores: class_shores.to_vec(),
                }))
            }
        },
    }
}
