//! Process-level error taxonomy. Each variant maps to a distinct exit code so
//! scripts can tell a bad invocation from bad input from a failed gate.

use std::fmt;
use std::io;
use std::path::Path;

use stiffsense_core::detect::DetectError;
use stiffsense_core::dsp::DspError;
use stiffsense_core::pipeline::PipelineError;
use stiffsense_core::synth::SynthError;
use stiffsense_core::wire::WireError;

#[derive(Debug)]
pub enum CliError {
    /// Unusable invocation: bad flag value, malformed or contradictory config.
    Config(String),
    /// Unusable input: missing or corrupt dataset, model, or frame stream.
    Data(String),
    /// The run finished but a requested quality gate did not hold.
    Threshold(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn threshold(msg: impl Into<String>) -> Self {
        CliError::Threshold(msg.into())
    }

    /// 2 config, 3 data, 4 threshold. 0 is success; clap's own usage errors
    /// also exit 2.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Threshold(_) => 4,
        }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Threshold(m) => write!(f, "threshold: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Data(format!("synthesis: {e}"))
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        CliError::Data(format!("signal path: {e}"))
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        CliError::Data(format!("detection: {e}"))
    }
}

impl From<stiffsense_core::ml::MlError> for CliError {
    fn from(e: stiffsense_core::ml::MlError) -> Self {
        CliError::Data(format!("model: {e}"))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Data(format!("replay: {e}"))
    }
}

impl From<WireError> for CliError {
    fn from(e: WireError) -> Self {
        CliError::Data(format!("frame stream: {e}"))
    }
}
