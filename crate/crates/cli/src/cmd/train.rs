//! Model training over a dataset directory. A holdout fraction is split off
//! by seeded shuffle before fitting so `eval` with the same split settings
//! scores on data the model never saw.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use stiffsense_core::ml::conv::{self, HeadKind};
use stiffsense_core::ml::model_fmt::ModelFile;
use stiffsense_core::ml::{
    ConvTargets, Preprocess, SvcParams, SvrParams, TrainLog, TrainSchedule, build_conv_model,
    seeded_split, train_conv, train_svc, train_svr,
};

use crate::cmd::{AnchorArg, AnchoredSet, ModelKindArg, anchored_windows, pick_parsed};
use crate::config::{RunConfig, TrainSection, pick, settings_hash};
use crate::dataset::load_dataset;
use crate::error::CliError;
use crate::models::{center_all, class_table, class_index, save_model};
use crate::report::{REPORT_FORMAT_VERSION, finite_or_null, open_out, write_jsonl_line};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory from `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub model: Option<ModelKindArg>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss log as JSONL, "-" for stdout. Conv models only.
    #[arg(long)]
    pub log: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of traces held out from training.
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long, value_enum)]
    pub anchor: Option<AnchorArg>,
    /// Penalty weight for the kernel machines.
    #[arg(long)]
    pub c: Option<f64>,
    /// RBF width; defaults to a variance heuristic fit on the training set.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Insensitive-tube half-width in shore units (svr).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
}

#[derive(Serialize)]
struct TrainSettings<'a> {
    model: &'a str,
    /// The dataset's own settings hash, so the chain of provenance survives
    /// moving directories around.
    dataset: &'a str,
    seed: u64,
    val_frac: f64,
    anchor: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lr0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_factor: Option<f64>,
}

fn model_name(kind: ModelKindArg) -> &'static str {
    match kind {
        ModelKindArg::Svc => "svc",
        ModelKindArg::Svr => "svr",
        ModelKindArg::ConvClass => "conv-class",
        ModelKindArg::ConvReg => "conv-reg",
    }
}

fn anchor_name(anchor: AnchorArg) -> &'static str {
    match anchor {
        AnchorArg::Contact => "contact",
        AnchorArg::Detected => "detected",
    }
}

fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn write_train_log(path: &str, hash: &str, kind: ModelKindArg, log: &TrainLog) -> Result<(), CliError> {
    let mut out = open_out(path)?;
    write_jsonl_line(
        &mut *out,
        &serde_json::json!({
            "type": "header",
            "format_version": REPORT_FORMAT_VERSION,
            "config_hash": hash,
            "model": model_name(kind),
            "epochs": log.train_loss.len(),
        }),
    )?;
    for (i, &loss) in log.train_loss.iter().enumerate() {
        write_jsonl_line(
            &mut *out,
            &serde_json::json!({
                "type": "epoch",
                "epoch": i,
                "train_loss": finite_or_null(loss),
                "val_loss": finite_or_null(log.val_loss[i]),
                "lr": log.lr[i],
            }),
        )?;
    }
    Ok(())
}

pub fn run(args: &TrainArgs, file: &RunConfig) -> Result<(), CliError> {
    let sec: &TrainSection = &file.train;
    let kind = pick_parsed(args.model, sec.model.as_deref(), ModelKindArg::Svr, |s| {
        ModelKindArg::parse_name(s)
    })?;
    let anchor = pick_parsed(args.anchor, sec.anchor.as_deref(), AnchorArg::Contact, |s| {
        AnchorArg::parse_name(s)
    })?;
    let seed = pick(args.seed, sec.seed, 0);
    let val_frac = pick(args.val_frac, sec.val_frac, 0.1);
    if !(0.0..1.0).contains(&val_frac) {
        return Err(CliError::config("val_frac must sit in [0, 1)"));
    }

    let ds = load_dataset(&args.dataset)?;
    let set: AnchoredSet = anchored_windows(&ds, anchor)?;
    let (train_idx, val_idx) = seeded_split(set.windows.len(), val_frac, seed);
    if train_idx.is_empty() {
        return Err(CliError::data("no training windows left after the holdout split"));
    }
    let train_w = select(&set.windows, &train_idx);
    let train_y = select(&set.shores, &train_idx);

    let is_kernel = matches!(kind, ModelKindArg::Svc | ModelKindArg::Svr);
    let c = pick(args.c, sec.c, SvcParams::default().c);
    let gamma = args.gamma.or(sec.gamma);
    let epsilon = pick(args.epsilon, sec.epsilon, SvrParams::default().epsilon);
    let epochs = pick(args.epochs, sec.epochs, TrainSchedule::default().epochs);
    let lr0 = pick(args.lr0, sec.lr0, TrainSchedule::default().lr0);
    let batch_size = pick(args.batch_size, sec.batch_size, TrainSchedule::default().batch_size);
    let decay_every = pick(args.decay_every, sec.decay_every, TrainSchedule::default().decay_every);
    let decay_factor =
        pick(args.decay_factor, sec.decay_factor, TrainSchedule::default().decay_factor);

    let hash = settings_hash(&TrainSettings {
        model: model_name(kind),
        dataset: &ds.manifest.config_hash,
        seed,
        val_frac,
        anchor: anchor_name(anchor),
        c: is_kernel.then_some(c),
        gamma: if is_kernel { gamma } else { None },
        epsilon: (kind == ModelKindArg::Svr).then_some(epsilon),
        epochs: (!is_kernel).then_some(epochs),
        lr0: (!is_kernel).then_some(lr0),
        batch_size: (!is_kernel).then_some(batch_size),
        decay_every: (!is_kernel).then_some(decay_every),
        decay_factor: (!is_kernel).then_some(decay_factor),
    })?;

    let (model_file, conv_log) = match kind {
        ModelKindArg::Svc => {
            let preprocess = Preprocess::fit_window_mean_sigma(&train_w)?;
            let params = SvcParams { c, gamma, preprocess, ..SvcParams::default() };
            (ModelFile::Kernel(train_svc(&train_w, &train_y, &params)?), None)
        }
        ModelKindArg::Svr => {
            let preprocess = Preprocess::fit_window_mean_sigma(&train_w)?;
            let params = SvrParams { c, gamma, epsilon, preprocess, ..SvrParams::default() };
            (ModelFile::Kernel(train_svr(&train_w, &train_y, &params)?), None)
        }
        ModelKindArg::ConvClass | ModelKindArg::ConvReg => {
            let inputs = center_all(&train_w);
            let head = match kind {
                ModelKindArg::ConvClass => {
                    HeadKind::Softmax { classes: class_table(&train_y).len() }
                }
                _ => HeadKind::Scalar,
            };
            let spec = conv::stiffness_spec(head);
            let model0 = build_conv_model(&spec, seed)?;
            let schedule = TrainSchedule {
                lr0,
                epochs,
                decay_every,
                decay_factor,
                batch_size,
                val_frac: 0.0,
                seed,
                ..TrainSchedule::default()
            };
            let (model, log) = match kind {
                ModelKindArg::ConvClass => {
                    let table = class_table(&train_y);
                    let classes: Vec<usize> = train_y
                        .iter()
                        .map(|&s| class_index(&table, s).expect("table built from train_y"))
                        .collect();
                    train_conv(&model0, &inputs, ConvTargets::Classes(&classes), &schedule)?
                }
                _ => train_conv(&model0, &inputs, ConvTargets::Shores(&train_y), &schedule)?,
            };
            (ModelFile::Conv(model), Some(log))
        }
    };

    save_model(&args.out, &model_file)?;
    if let Some(path) = args.log.as_deref() {
        match &conv_log {
            Some(log) => write_train_log(path, &hash, kind, log)?,
            None => return Err(CliError::config("--log applies to conv models only")),
        }
    }

    let detail = match &model_file {
        ModelFile::Kernel(k) => format!("{} support vectors", k.support_vectors.len()),
        ModelFile::Conv(c) => format!("{} parameters", c.params.len()),
    };
    let skipped = if set.skipped > 0 {
        format!(", {} undetected traces skipped", set.skipped)
    } else {
        String::new()
    };
    println!(
        "trained {} on {} windows ({} held out{}): {} -> {} (settings {})",
        model_name(kind),
        train_idx.len(),
        val_idx.len(),
        skipped,
        detail,
        args.out.display(),
        hash
    );
    Ok(())
}
