//! Frame-stream tooling: encode a trace as the sensor head would send it,
//! decode and audit a captured stream, and fuzz the decoder with byte flips.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use stiffsense_core::synth::{StiffnessLabel, SynthConfig, synthesize_grasp};
use stiffsense_core::wire::{FRAME_WIRE_LEN, FrameParser, parse_to_trace, stream_trace};

use crate::config::{RunConfig, settings_hash};
use crate::dataset::load_dataset;
use crate::error::CliError;
use crate::report::{REPORT_FORMAT_VERSION, open_out, write_json};

#[derive(Debug, Subcommand)]
pub enum WireCmd {
    /// Serialize one trace as a sync-framed byte stream.
    Encode(EncodeArgs),
    /// Parse a byte stream, report counters, optionally dump channels.
    Decode(DecodeArgs),
    /// Corrupt a known stream and check the decoder contains the damage.
    Fuzz(FuzzArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Dataset directory from `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub trace_id: u64,
    /// Byte-stream destination, "-" for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Byte-stream source, "-" for stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
    /// JSON counter report, "-" for stdout.
    #[arg(long, default_value = "-")]
    pub report: String,
    /// Decoded channel samples as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    /// Frames in the probe stream.
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    /// Distinct byte positions to flip.
    #[arg(long, default_value_t = 10)]
    pub flips: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report, "-" for stdout.
    #[arg(long, default_value = "-")]
    pub report: String,
}

#[derive(Serialize)]
struct Counters {
    frames_ok: u64,
    crc_fail_count: u64,
    resync_count: u64,
    seq_gap_count: u64,
    missed_frames: u64,
    bytes_discarded: u64,
}

impl Counters {
    fn from(parser: &FrameParser) -> Self {
        Counters {
            frames_ok: parser.frames_ok,
            crc_fail_count: parser.crc_fail_count,
            resync_count: parser.resync_count,
            seq_gap_count: parser.seq_gap_count,
            missed_frames: parser.missed_frames,
            bytes_discarded: parser.bytes_discarded,
        }
    }
}

fn read_input(path: &str) -> Result<Vec<u8>, CliError> {
    if path == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| CliError::data(format!("stdin: {e}")))?;
        Ok(buf)
    } else {
        std::fs::read(path).map_err(|e| CliError::io(Path::new(path), e))
    }
}

fn run_encode(args: &EncodeArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.dataset)?;
    let trace = ds
        .traces
        .iter()
        .find(|t| t.trace_id == args.trace_id)
        .ok_or_else(|| {
            CliError::data(format!("trace {} is not in the dataset", args.trace_id))
        })?;
    let bytes = stream_trace(trace, &ds.manifest.synth.adc)?;
    let mut out = open_out(&args.out)?;
    out.write_all(&bytes).map_err(|e| CliError::data(format!("{}: {e}", args.out)))?;
    out.flush().map_err(|e| CliError::data(format!("{}: {e}", args.out)))?;
    Ok(())
}

fn run_decode(args: &DecodeArgs) -> Result<(), CliError> {
    let bytes = read_input(&args.input)?;
    let (channels, parser) = parse_to_trace(&bytes);
    if let Some(path) = &args.csv {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| CliError::io(path, e))?,
        );
        writeln!(out, "timestamp_us,piezo,f0,f1,f2,f3,f4,f5")
            .map_err(|e| CliError::io(path, e))?;
        for i in 0..channels.timestamps_us.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                channels.timestamps_us[i],
                channels.piezo[i],
                channels.force[0][i],
                channels.force[1][i],
                channels.force[2][i],
                channels.force[3][i],
                channels.force[4][i],
                channels.force[5][i],
            )
            .map_err(|e| CliError::io(path, e))?;
        }
    }
    #[derive(Serialize)]
    struct DecodeOutput {
        format_version: u32,
        input_bytes: usize,
        samples: usize,
        #[serde(flatten)]
        counters: Counters,
    }
    write_json(
        &args.report,
        &DecodeOutput {
            format_version: REPORT_FORMAT_VERSION,
            input_bytes: bytes.len(),
            samples: channels.piezo.len(),
            counters: Counters::from(&parser),
        },
    )
}

fn run_fuzz(args: &FuzzArgs) -> Result<(), CliError> {
    if args.frames == 0 {
        return Err(CliError::config("frames must be positive"));
    }

    let mut cfg = SynthConfig::default();
    cfg.seed = args.seed;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let label = StiffnessLabel::new(43.0).expect("fixed probe hardness");
    let trace = synthesize_grasp(&cfg, label, &mut rng)?;
    let mut bytes = stream_trace(&trace, &cfg.adc)?;
    let available = bytes.len() / FRAME_WIRE_LEN;
    let frames = args.frames.min(available);
    bytes.truncate(frames * FRAME_WIRE_LEN);
    if args.flips > bytes.len() {
        return Err(CliError::config(format!(
            "cannot flip {} distinct bytes in a {}-byte stream",
            args.flips,
            bytes.len()
        )));
    }

    let mut positions = Vec::with_capacity(args.flips);
    while positions.len() < args.flips {
        let p = rng.random_range(0..bytes.len());
        if !positions.contains(&p) {
            positions.push(p);
        }
    }
    for &p in &positions {
        let bit = rng.random_range(0..8);
        bytes[p] ^= 1u8 << bit;
    }

    let (channels, parser) = parse_to_trace(&bytes);
    let lost = frames as u64 - parser.frames_ok;
    let bound = 2 * args.flips as u64;

    #[derive(Serialize)]
    struct FuzzSettings {
        frames: usize,
        flips: usize,
        seed: u64,
    }
    #[derive(Serialize)]
    struct FuzzOutput {
        format_version: u32,
        config_hash: String,
        frames: usize,
        flips: usize,
        frames_lost: u64,
        loss_bound: u64,
        samples: usize,
        #[serde(flatten)]
        counters: Counters,
    }
    write_json(
        &args.report,
        &FuzzOutput {
            format_version: REPORT_FORMAT_VERSION,
            config_hash: settings_hash(&FuzzSettings {
                frames,
                flips: args.flips,
                seed: args.seed,
            })?,
            frames,
            flips: args.flips,
            frames_lost: lost,
            loss_bound: bound,
            samples: channels.piezo.len(),
            counters: Counters::from(&parser),
        },
    )?;
    if lost > bound {
        return Err(CliError::threshold(format!(
            "{lost} frames lost, more than {bound} for {} flips",
            args.flips
        )));
    }
    Ok(())
}

pub fn run(cmd: &WireCmd, _file: &RunConfig) -> Result<(), CliError> {
    match cmd {
        WireCmd::Encode(a) => run_encode(a),
        WireCmd::Decode(a) => run_decode(a),
        WireCmd::Fuzz(a) => run_fuzz(a),
    }
}
