//! Streamed replay: every trace runs through calibration, detection, window
//! collection, and inference, with per-grasp latency ledgers written as
//! JSONL. The wall clock times inference; detection and collection costs are
//! sample-count arithmetic, which is what they would be on the sensor head.

use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use clap::Args;
use serde::Serialize;

use stiffsense_core::detect::ThresholdDetector;
use stiffsense_core::ml::model_fmt::ModelFile;
use stiffsense_core::ml::{KernelKind, KernelModel};
use stiffsense_core::pipeline::{
    ClassifierDetector, GraspReport, PipelineConfig, run_grasp, summarize_ms,
};

use crate::clock::StdClock;
use crate::config::{RunConfig, fnv1a64, pick, settings_hash};
use crate::dataset::load_dataset;
use crate::error::CliError;
use crate::models::{kind_name, load_model, runtime_model};
use crate::report::{REPORT_FORMAT_VERSION, open_out, write_jsonl_line};

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Dataset directory from `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Stiffness model file from `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Kernel classifier to use as the contact detector instead of the
    /// threshold rule.
    #[arg(long)]
    pub detector: Option<PathBuf>,
    /// JSONL destination, "-" for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
    /// Replay at most this many traces.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Sleep each trace's real duration before replaying it.
    #[arg(long)]
    pub paced: bool,
}

#[derive(Serialize)]
struct StreamSettings {
    dataset: String,
    model: String,
    detector: String,
    limit: usize,
}

#[derive(Serialize)]
struct GraspLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    report: &'a GraspReport,
}

fn load_detector_model(path: &PathBuf) -> Result<KernelModel, CliError> {
    match load_model(path)? {
        ModelFile::Kernel(k) if k.kind == KernelKind::Classifier => Ok(k),
        _ => Err(CliError::data(format!(
            "{}: the detector must be a kernel classifier",
            path.display()
        ))),
    }
}

pub fn run(args: &StreamArgs, file: &RunConfig) -> Result<(), CliError> {
    let sec = &file.stream;
    let limit = pick(args.limit, sec.limit, usize::MAX);
    let paced = args.paced || sec.paced.unwrap_or(false);

    let ds = load_dataset(&args.dataset)?;
    let model_file = load_model(&args.model)?;
    let model_bytes = std::fs::read(&args.model).map_err(|e| CliError::io(&args.model, e))?;
    let model = runtime_model(&model_file, &ds.shore_table())?;
    let detector_model = args.detector.as_ref().map(load_detector_model).transpose()?;

    let cfg = PipelineConfig::default_at(ds.manifest.synth.sample_rate_hz)?;
    let n = ds.traces.len().min(limit);
    let hash = settings_hash(&StreamSettings {
        dataset: ds.manifest.config_hash.clone(),
        model: format!("{:016x}", fnv1a64(&model_bytes)),
        detector: match &args.detector {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
                format!("{:016x}", fnv1a64(&bytes))
            }
            None => "threshold".to_string(),
        },
        limit: n,
    })?;

    let mut out = open_out(&args.out)?;
    write_jsonl_line(
        &mut *out,
        &serde_json::json!({
            "type": "header",
            "format_version": REPORT_FORMAT_VERSION,
            "config_hash": hash,
            "model_kind": kind_name(&model_file),
            "n_traces": n,
        }),
    )?;

    let clock = StdClock;
    let threshold = ThresholdDetector::three_sigma(&ds.manifest.synth.adc);
    let learned = detector_model.map(|clf| ClassifierDetector {
        classifier: clf,
        sigma_floor_v: stiffsense_core::detect::default_sigma_floor(&ds.manifest.synth.adc),
    });
    let mut reports: Vec<GraspReport> = Vec::with_capacity(n);
    for trace in ds.traces.iter().take(n) {
        if paced {
            thread::sleep(Duration::from_secs_f64(
                trace.len() as f64 / trace.sample_rate_hz,
            ));
        }
        let report = match &learned {
            Some(det) => run_grasp(trace, det, &model, &cfg, &clock)?,
            None => run_grasp(trace, &threshold, &model, &cfg, &clock)?,
        };
        write_jsonl_line(&mut *out, &GraspLine { kind: "grasp", report: &report })?;
        reports.push(report);
    }

    let within = reports
        .iter()
        .filter(|r| r.ledger.as_ref().is_some_and(|l| l.within_budget))
        .count();
    let fraction = if reports.is_empty() { 0.0 } else { within as f64 / reports.len() as f64 };
    let inference = summarize_ms(
        reports
            .iter()
            .filter_map(|r| r.ledger.as_ref().map(|l| l.inference_ms))
            .collect(),
    );
    write_jsonl_line(
        &mut *out,
        &serde_json::json!({
            "type": "summary",
            "n": reports.len(),
            "detected": reports.iter().filter(|r| r.detection.detected).count(),
            "within_budget_fraction": fraction,
            "inference_mean_ms": inference.as_ref().map(|s| s.mean_ms),
            "inference_p99_ms": inference.as_ref().map(|s| s.p99_ms),
        }),
    )?;
    Ok(())
}
