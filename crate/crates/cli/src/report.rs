//! Report plumbing: JSON documents and JSONL streams, all stamped with a
//! format version and the settings hash of the run that produced them.
//! The path "-" means stdout.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub fn open_out(path: &str) -> Result<Box<dyn Write>, CliError> {
    if path == "-" {
        Ok(Box::new(io::stdout()))
    } else {
        let f = File::create(path).map_err(|e| CliError::io(Path::new(path), e))?;
        Ok(Box::new(BufWriter::new(f)))
    }
}

/// Pretty JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &str, value: &T) -> Result<(), CliError> {
    let mut out = open_out(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("report serialization: {e}")))?;
    writeln!(out, "{text}").map_err(|e| CliError::data(format!("{path}: {e}")))?;
    out.flush().map_err(|e| CliError::data(format!("{path}: {e}")))?;
    Ok(())
}

pub fn write_jsonl_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value)
        .map_err(|e| CliError::data(format!("report serialization: {e}")))?;
    writeln!(out, "{text}").map_err(|e| CliError::data(format!("stream output: {e}")))?;
    Ok(())
}

/// NaN-tolerant number for log streams; JSON has no NaN, so absent values
/// become null.
pub fn finite_or_null(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}
