//! Subcommand implementations. Each module owns its clap argument struct and
//! a `run(args, &config)` entry point returning a process-level error.

pub mod bench;
pub mod eval;
pub mod stream;
pub mod synth;
pub mod train;
pub mod wire;

use clap::ValueEnum;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKindArg {
    /// Kernel classifier over the discrete hardness labels.
    Svc,
    /// Kernel regressor over shore values.
    Svr,
    /// Convolutional classifier.
    ConvClass,
    /// Convolutional regressor.
    ConvReg,
}

impl ModelKindArg {
    pub fn parse_name(name: &str) -> Result<Self, CliError> {
        Self::from_str(name, true)
            .map_err(|_| CliError::config(format!("unknown model kind {name:?}")))
    }
}

/// Where training and evaluation windows are anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnchorArg {
    /// Ground-truth first-contact sample. Best for dataset-level studies.
    Contact,
    /// The detector's firing index, matching what the replay loop feeds the
    /// model at runtime.
    Detected,
}

impl AnchorArg {
    pub fn parse_name(name: &str) -> Result<Self, CliError> {
        Self::from_str(name, true)
            .map_err(|_| CliError::config(format!("unknown anchor {name:?}")))
    }
}

/// Stiffness windows cut from every trace of a dataset.
pub struct AnchoredSet {
    pub windows: Vec<Vec<f64>>,
    pub shores: Vec<f64>,
    /// Source trace position per window, for object lookups.
    pub trace_pos: Vec<usize>,
    /// Traces dropped because the detector never fired on them.
    pub skipped: usize,
}

pub fn anchored_windows(
    ds: &crate::dataset::LoadedDataset,
    anchor: AnchorArg,
) -> Result<AnchoredSet, CliError> {
    use stiffsense_core::detect::{DEFAULT_CALIBRATION_SAMPLES, ThresholdDetector};
    use stiffsense_core::dsp::WindowKind;

    let spec = ds.window_spec()?;
    match anchor {
        AnchorArg::Contact => {
            let (windows, shores) = stiffsense_core::ml::stiffness_training_set(&ds.traces, &spec)?;
            let trace_pos = (0..ds.traces.len()).collect();
            Ok(AnchoredSet { windows, shores, trace_pos, skipped: 0 })
        }
        AnchorArg::Detected => {
            let det = ThresholdDetector::three_sigma(&ds.manifest.synth.adc);
            let mut set = AnchoredSet {
                windows: Vec::new(),
                shores: Vec::new(),
                trace_pos: Vec::new(),
                skipped: 0,
            };
            for (pos, trace) in ds.traces.iter().enumerate() {
                let baseline = stiffsense_core::detect::calibrate_baseline(
                    &trace.vibration,
                    DEFAULT_CALIBRATION_SAMPLES,
                )?;
                let found = stiffsense_core::detect::detect_threshold(
                    &trace.vibration,
                    &baseline,
                    &spec,
                    &det,
                )?;
                let window = found.and_then(|k| {
                    stiffsense_core::dsp::extract_window(
                        &trace.vibration,
                        k,
                        WindowKind::Stiffness,
                        &spec,
                    )
                    .ok()
                });
                match window {
                    Some(w) => {
                        set.windows.push(w.to_vec());
                        set.shores.push(trace.label.shore_a);
                        set.trace_pos.push(pos);
                    }
                    None => set.skipped += 1,
                }
            }
            if set.windows.is_empty() {
                return Err(CliError::data("the detector fired on no trace in the dataset"));
            }
            Ok(set)
        }
    }
}

/// Pick a string-valued setting: flag beats file beats default.
pub fn pick_parsed<T, F>(
    flag: Option<T>,
    file: Option<&str>,
    default: T,
    parse: F,
) -> Result<T, CliError>
where
    F: FnOnce(&str) -> Result<T, CliError>,
{
    match (flag, file) {
        (Some(v), _) => Ok(v),
        (None, Some(s)) => parse(s),
        (None, None) => Ok(default),
    }
}
