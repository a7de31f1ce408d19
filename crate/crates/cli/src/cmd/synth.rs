//! Dataset synthesis: grasp traces plus a manifest, reproducible from the
//! seed alone. The same seed and settings give byte-identical directories.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use stiffsense_core::dsp::WindowSpec;
use stiffsense_core::synth::{
    self, RealObject, SynthConfig, make_dataset, make_real_object_dataset,
};

use crate::config::{RunConfig, SynthSection, pick, settings_hash};
use crate::dataset::{DATASET_FORMAT_VERSION, DatasetManifest, distinct_shores, save_dataset};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    /// Five calibration blocks, shore 10 to 60.
    PaperBlocks,
    /// Eight everyday objects with surface texture, unseen hardness values.
    RealObjects,
}

impl PresetArg {
    fn name(self) -> &'static str {
        match self {
            PresetArg::PaperBlocks => "paper-blocks",
            PresetArg::RealObjects => "real-objects",
        }
    }

    fn parse_name(name: &str) -> Result<Self, CliError> {
        <Self as ValueEnum>::from_str(name, true)
            .map_err(|_| CliError::config(format!("unknown preset {name:?}")))
    }

    fn default_pinches(self) -> usize {
        match self {
            PresetArg::PaperBlocks => 500,
            PresetArg::RealObjects => 50,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset recipe.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Output directory for manifest.toml and traces.bin.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pinches per label (blocks) or per object.
    #[arg(long)]
    pub pinches: Option<usize>,
}

/// The generative settings that define a dataset. Output paths stay out so
/// the hash survives relocation.
#[derive(Serialize)]
struct SynthSettings<'a> {
    preset: &'a str,
    seed: u64,
    pinches_per_label: usize,
    synth: &'a SynthConfig,
}

fn apply_overrides(cfg: &mut SynthConfig, sec: &SynthSection) {
    if let Some(v) = sec.noise_std_v {
        cfg.noise_std_v = v;
    }
    if let Some(v) = sec.hum_amp_v {
        cfg.hum_amp_v = v;
    }
    if let Some(v) = sec.texture_frac {
        cfg.texture_frac = v;
    }
    if let Some(v) = sec.delta_mean_ms {
        cfg.delta_mean_ms = v;
    }
    if let Some(v) = sec.delta_std_ms {
        cfg.delta_std_ms = v;
    }
    if let Some(v) = sec.contact_jitter_ms {
        cfg.contact_jitter_ms = v;
    }
}

pub fn run(args: &SynthArgs, file: &RunConfig) -> Result<(), CliError> {
    let sec = &file.synth;
    let preset = match (args.preset, sec.preset.as_deref()) {
        (Some(p), _) => p,
        (None, Some(name)) => PresetArg::parse_name(name)?,
        (None, None) => PresetArg::PaperBlocks,
    };
    let seed = pick(args.seed, sec.seed, 0);
    let pinches = pick(args.pinches, sec.pinches, preset.default_pinches());
    if pinches == 0 {
        return Err(CliError::config("pinches must be positive"));
    }

    let mut cfg = SynthConfig::default();
    apply_overrides(&mut cfg, sec);
    cfg.seed = seed;
    cfg.validate().map_err(|e| CliError::config(format!("synthesis settings: {e}")))?;

    let hash = settings_hash(&SynthSettings {
        preset: preset.name(),
        seed,
        pinches_per_label: pinches,
        synth: &cfg,
    })?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (traces, objects): (_, Option<Vec<RealObject>>) = match preset {
        PresetArg::PaperBlocks => {
            (make_dataset(&cfg, &synth::block_labels(), pinches, &mut rng)?, None)
        }
        PresetArg::RealObjects => {
            let objs = synth::real_object_preset();
            (make_real_object_dataset(&cfg, &objs, pinches, &mut rng)?, Some(objs))
        }
    };
    // Generation order is object-major, so the object index is positional.
    let object_idx: Vec<Option<usize>> = match preset {
        PresetArg::PaperBlocks => vec![None; traces.len()],
        PresetArg::RealObjects => (0..traces.len()).map(|i| Some(i / pinches)).collect(),
    };

    let spec = WindowSpec::default_at(cfg.sample_rate_hz)?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        created_by: format!("stiffsense {}", env!("CARGO_PKG_VERSION")),
        config_hash: hash.clone(),
        seed,
        preset: preset.name().to_string(),
        pinches_per_label: pinches,
        labels: distinct_shores(&traces),
        objects,
        n_traces: traces.len(),
        detect_window_samples: spec.detect_total_samples(),
        stiffness_window_samples: spec.stiffness_samples(),
        synth: cfg,
    };
    save_dataset(&args.out, &manifest, &traces, &object_idx)?;
    println!(
        "wrote {} traces to {} (preset {}, seed {}, settings {})",
        traces.len(),
        args.out.display(),
        preset.name(),
        seed,
        hash
    );
    Ok(())
}
