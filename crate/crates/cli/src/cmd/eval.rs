//! Model evaluation over a dataset directory. By default this scores the
//! held-out part of the train-time split; `--full` scores every trace, which
//! is the right mode for datasets the model never trained on at all.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use stiffsense_core::ml::conv::HeadKind;
use stiffsense_core::ml::eval::{
    EvalReport, evaluate_discrimination, evaluate_objects, evaluate_regression,
};
use stiffsense_core::ml::model_fmt::ModelFile;
use stiffsense_core::ml::{KernelKind, seeded_split};

use crate::cmd::{AnchorArg, AnchoredSet, anchored_windows, pick_parsed};
use crate::config::{EvalSection, RunConfig, pick, settings_hash};
use crate::dataset::{LoadedDataset, load_dataset};
use crate::error::CliError;
use crate::models::{center, class_index, class_table, kind_name, load_model};
use crate::report::{REPORT_FORMAT_VERSION, write_json};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory from `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model file from `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// JSON report destination, "-" for stdout.
    #[arg(long, default_value = "-")]
    pub report: String,
    /// Per-window predictions as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Score every trace instead of the held-out split.
    #[arg(long)]
    pub full: bool,
    /// Holdout fraction; must match the value used at train time.
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Split seed; must match the value used at train time.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub anchor: Option<AnchorArg>,
    /// Fail (exit 4) when accuracy lands below this.
    #[arg(long)]
    pub min_accuracy: Option<f64>,
    /// Fail (exit 4) when the shore RMSE lands above this.
    #[arg(long)]
    pub max_rmse: Option<f64>,
}

#[derive(Serialize)]
struct EvalSettings<'a> {
    dataset: &'a str,
    /// Hash of the model file bytes; the model text has no identity field of
    /// its own.
    model: String,
    full: bool,
    seed: u64,
    val_frac: f64,
    anchor: &'a str,
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    format_version: u32,
    config_hash: &'a str,
    model_kind: &'a str,
    n_eval: usize,
    #[serde(flatten)]
    report: &'a EvalReport,
}

struct Scored {
    report: EvalReport,
    /// (object or label name, truth, prediction) per evaluated window.
    rows: Vec<(String, f64, f64)>,
}

fn row_name(ds: &LoadedDataset, trace_pos: usize) -> String {
    match ds.object_name(trace_pos) {
        Some(name) => name.to_string(),
        None => format!("shore-{}", ds.traces[trace_pos].label.shore_a),
    }
}

fn score(
    ds: &LoadedDataset,
    model: &ModelFile,
    set: &AnchoredSet,
    eval_idx: &[usize],
) -> Result<Scored, CliError> {
    let table = class_table(&set.shores);
    let mut rows = Vec::with_capacity(eval_idx.len());
    let mut predicted = Vec::with_capacity(eval_idx.len());
    for &i in eval_idx {
        let window = &set.windows[i];
        let value = match model {
            ModelFile::Kernel(k) => k.predict(window)?.as_shore(),
            ModelFile::Conv(c) => match c.spec.head {
                HeadKind::Scalar => c.predict_shore(&center(window))?,
                HeadKind::Softmax { classes } => {
                    if classes != table.len() {
                        return Err(CliError::data(format!(
                            "classifier has {classes} classes but the dataset has {} labels",
                            table.len()
                        )));
                    }
                    table[c.predict_class(&center(window))?]
                }
            },
        };
        predicted.push(value);
        rows.push((row_name(ds, set.trace_pos[i]), set.shores[i], value));
    }

    let discrimination = match model {
        ModelFile::Kernel(k) => k.kind == KernelKind::Classifier,
        ModelFile::Conv(c) => matches!(c.spec.head, HeadKind::Softmax { .. }),
    };
    let report = if discrimination {
        let mut truth_cls = Vec::with_capacity(eval_idx.len());
        let mut pred_cls = Vec::with_capacity(eval_idx.len());
        for (&i, &value) in eval_idx.iter().zip(&predicted) {
            let t = class_index(&table, set.shores[i]).ok_or_else(|| {
                CliError::data("evaluation labels fall outside the class table")
            })?;
            let p = class_index(&table, value).ok_or_else(|| {
                CliError::data(
                    "the model predicts classes the dataset does not contain; \
                     its training labels differ from this dataset",
                )
            })?;
            truth_cls.push(t);
            pred_cls.push(p);
        }
        evaluate_discrimination(&pred_cls, &truth_cls, table.len())?
    } else if ds.manifest.objects.is_some() {
        let entries: Vec<(&str, f64, f64)> =
            rows.iter().map(|(name, truth, pred)| (name.as_str(), *pred, *truth)).collect();
        evaluate_objects(&entries)?
    } else {
        let truth: Vec<f64> = eval_idx.iter().map(|&i| set.shores[i]).collect();
        evaluate_regression(&predicted, &truth)?
    };
    Ok(Scored { report, rows })
}

fn write_csv(path: &PathBuf, rows: &[(String, f64, f64)]) -> Result<(), CliError> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CliError::io(path, e))?,
    );
    let mut emit = |line: String| -> Result<(), CliError> {
        writeln!(out, "{line}").map_err(|e| CliError::io(path, e))
    };
    emit("object,true_shore,predicted_shore".to_string())?;
    for (name, truth, pred) in rows {
        emit(format!("{name},{truth},{pred}"))?;
    }
    Ok(())
}

pub fn run(args: &EvalArgs, file: &RunConfig) -> Result<(), CliError> {
    let sec: &EvalSection = &file.eval;
    let anchor = pick_parsed(args.anchor, sec.anchor.as_deref(), AnchorArg::Contact, |s| {
        AnchorArg::parse_name(s)
    })?;
    let seed = pick(args.seed, sec.seed, 0);
    let val_frac = pick(args.val_frac, sec.val_frac, 0.1);
    let min_accuracy = args.min_accuracy.or(sec.min_accuracy);
    let max_rmse = args.max_rmse.or(sec.max_rmse);

    let ds = load_dataset(&args.dataset)?;
    let model = load_model(&args.model)?;
    let model_bytes =
        std::fs::read(&args.model).map_err(|e| CliError::io(&args.model, e))?;
    let set = anchored_windows(&ds, anchor)?;

    let eval_idx: Vec<usize> = if args.full {
        (0..set.windows.len()).collect()
    } else {
        let (_, val_idx) = seeded_split(set.windows.len(), val_frac, seed);
        if val_idx.is_empty() {
            return Err(CliError::config(
                "the holdout split is empty; pass --full to score every trace",
            ));
        }
        val_idx
    };

    let hash = settings_hash(&EvalSettings {
        dataset: &ds.manifest.config_hash,
        model: format!("{:016x}", crate::config::fnv1a64(&model_bytes)),
        full: args.full,
        seed,
        val_frac,
        anchor: match anchor {
            AnchorArg::Contact => "contact",
            AnchorArg::Detected => "detected",
        },
    })?;

    let scored = score(&ds, &model, &set, &eval_idx)?;
    if let Some(path) = &args.csv {
        write_csv(path, &scored.rows)?;
    }
    write_json(
        &args.report,
        &EvalOutput {
            format_version: REPORT_FORMAT_VERSION,
            config_hash: &hash,
            model_kind: kind_name(&model),
            n_eval: eval_idx.len(),
            report: &scored.report,
        },
    )?;

    if let (Some(min), Some(acc)) = (min_accuracy, scored.report.accuracy) {
        if acc < min {
            return Err(CliError::threshold(format!("accuracy {acc:.4} below {min:.4}")));
        }
    }
    if min_accuracy.is_some() && scored.report.accuracy.is_none() {
        return Err(CliError::config("--min-accuracy applies to classifiers only"));
    }
    if let (Some(max), Some(rmse)) = (max_rmse, scored.report.rmse_shore) {
        if rmse > max {
            return Err(CliError::threshold(format!("rmse {rmse:.3} above {max:.3}")));
        }
    }
    if max_rmse.is_some() && scored.report.rmse_shore.is_none() {
        return Err(CliError::config("--max-rmse applies to regressors only"));
    }
    Ok(())
}
