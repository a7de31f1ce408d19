//! Single-window inference latency. The probe window is synthesized from a
//! seed, so timing runs are repeatable; for a classifier without a dataset
//! at hand, class indices stand in for shore values.

use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use stiffsense_core::dsp::{WindowKind, extract_window};
use stiffsense_core::ml::conv::HeadKind;
use stiffsense_core::ml::model_fmt::ModelFile;
use stiffsense_core::pipeline::bench_inference;
use stiffsense_core::synth::{StiffnessLabel, SynthConfig, synthesize_grasp};

use crate::clock::StdClock;
use crate::config::{RunConfig, fnv1a64, pick, settings_hash};
use crate::error::CliError;
use crate::models::{kind_name, load_model, runtime_model};
use crate::report::{REPORT_FORMAT_VERSION, write_json};

const PROBE_SHORE: f64 = 43.0;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model file from `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Timed calls; a tenth as many warmup calls run first, untimed.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Probe-window synthesis seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON destination, "-" for stdout.
    #[arg(long, default_value = "-")]
    pub report: String,
    /// Fail (exit 4) when the mean lands above this.
    #[arg(long)]
    pub max_mean_ms: Option<f64>,
}

#[derive(Serialize)]
struct BenchSettings {
    model: String,
    trials: usize,
    seed: u64,
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    format_version: u32,
    config_hash: &'a str,
    model_kind: &'a str,
    trials: usize,
    mean_ms: f64,
    p99_ms: f64,
}

pub fn run(args: &BenchArgs, file: &RunConfig) -> Result<(), CliError> {
    let sec = &file.bench;
    let trials = pick(args.trials, sec.trials, 200);
    let seed = pick(args.seed, sec.seed, 0);
    let max_mean_ms = args.max_mean_ms.or(sec.max_mean_ms);
    if trials == 0 {
        return Err(CliError::config("trials must be positive"));
    }

    let model_file = load_model(&args.model)?;
    let model_bytes = std::fs::read(&args.model).map_err(|e| CliError::io(&args.model, e))?;
    let class_shores: Vec<f64> = match &model_file {
        ModelFile::Conv(c) => match c.spec.head {
            HeadKind::Softmax { classes } => (0..classes).map(|i| i as f64).collect(),
            HeadKind::Scalar => Vec::new(),
        },
        ModelFile::Kernel(_) => Vec::new(),
    };
    let model = runtime_model(&model_file, &class_shores)?;

    let mut cfg = SynthConfig::default();
    cfg.seed = seed;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let label = StiffnessLabel::new(PROBE_SHORE).expect("fixed probe hardness");
    let trace = synthesize_grasp(&cfg, label, &mut rng)?;
    let spec = stiffsense_core::dsp::WindowSpec::default_at(cfg.sample_rate_hz)?;
    let window = extract_window(&trace.vibration, trace.t_contact1, WindowKind::Stiffness, &spec)?;

    let hash = settings_hash(&BenchSettings {
        model: format!("{:016x}", fnv1a64(&model_bytes)),
        trials,
        seed,
    })?;
    let stats = bench_inference(&model, window, trials, &StdClock)?;
    write_json(
        &args.report,
        &BenchOutput {
            format_version: REPORT_FORMAT_VERSION,
            config_hash: &hash,
            model_kind: kind_name(&model_file),
            trials,
            mean_ms: stats.mean_ms,
            p99_ms: stats.p99_ms,
        },
    )?;
    if let Some(max) = max_mean_ms {
        if stats.mean_ms > max {
            return Err(CliError::threshold(format!(
                "mean inference {:.4} ms above {max:.4} ms",
                stats.mean_ms
            )));
        }
    }
    Ok(())
}
