//! Run configuration. One TOML file with a section per subcommand; command
//! flags override file values, file values override built-in defaults.
//! Unknown keys are rejected so a typo fails loudly instead of silently
//! running with defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub stream: StreamSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub pinches: Option<usize>,
    pub noise_std_v: Option<f64>,
    pub hum_amp_v: Option<f64>,
    pub texture_frac: Option<f64>,
    pub delta_mean_ms: Option<f64>,
    pub delta_std_ms: Option<f64>,
    pub contact_jitter_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub val_frac: Option<f64>,
    pub anchor: Option<String>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub epochs: Option<usize>,
    pub lr0: Option<f64>,
    pub batch_size: Option<usize>,
    pub decay_every: Option<usize>,
    pub decay_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub val_frac: Option<f64>,
    pub seed: Option<u64>,
    pub anchor: Option<String>,
    pub min_accuracy: Option<f64>,
    pub max_rmse: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub limit: Option<usize>,
    pub paced: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub max_mean_ms: Option<f64>,
}

/// Missing path means built-in defaults everywhere.
pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash of the effective settings a command ran with, after flag and file
/// merging. Output paths are excluded by construction: callers hash a struct
/// of generative parameters only, so reruns into different directories still
/// match. Embedded in every manifest and report.
pub fn settings_hash<T: Serialize>(value: &T) -> Result<String, CliError> {
    let text = toml::to_string(value)
        .map_err(|e| CliError::config(format!("unhashable settings: {e}")))?;
    Ok(format!("{:016x}", fnv1a64(text.as_bytes())))
}

/// Flag beats file beats default.
pub fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
