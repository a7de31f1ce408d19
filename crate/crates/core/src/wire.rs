//! Framed serial protocol for the sensor link: one frame per sample tick
//! carrying the piezo code and the six multiplexed force codes, with a CRC
//! and a parser that re-locks after corruption or truncation.
//!
//! This layout is the protocol's source of truth. A frame body is 22 bytes,
//! CRC-16/CCITT-FALSE over the body trails it little-endian, 24 bytes on the
//! wire:
//!
//! ```text
//! AA 55 | seq u16 | timestamp_us u32 | piezo u16 | force[6] u16 | crc u16
//! ```
//!
//! Multi-byte fields are little-endian. Force channels are row-major
//! (row0,col0), (row0,col1), (row1,col0), ... for the 3x2 array. Codes are
//! 10-bit, so values above 1023 never appear in a valid frame.

use alloc::vec::Vec;
use core::fmt;

use crate::dsp::{self, AdcSpec, DspError};
use crate::synth::GraspTrace;

pub const SYNC: [u8; 2] = [0xAA, 0x55];
/// CRC-covered prefix: sync + seq + timestamp + piezo + 6 force codes.
pub const FRAME_BODY_LEN: usize = 22;
/// Body plus trailing CRC.
pub const FRAME_WIRE_LEN: usize = 24;
pub const MAX_CODE: u16 = 1023;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireError {
    CodeOutOfRange { field: &'static str, code: u16 },
    WrongLength { expected: usize, got: usize },
    BadSync,
    BadCrc { expected: u16, got: u16 },
    Adc(DspError),
}

impl fmt::Display for WireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireError::CodeOutOfRange { field, code } => {
                write!(f, "{field} code {code} exceeds 10 bits")
            }
            WireError::WrongLength { expected, got } => {
                write!(f, "frame image must be {expected} bytes, got {got}")
            }
            WireError::BadSync => write!(f, "missing AA 55 sync"),
            WireError::BadCrc { expected, got } => {
                write!(f, "crc mismatch: computed {expected:#06x}, frame says {got:#06x}")
            }
            WireError::Adc(e) => write!(f, "adc conversion: {e}"),
        }
    }
}

impl core::error::Error for WireError {}

impl From<DspError> for WireError {
    fn from(e: DspError) -> Self {
        WireError::Adc(e)
    }
}

// ---------------------------------------------------------------------------
// CRC
// ---------------------------------------------------------------------------

const fn build_crc_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC_TABLE: [u16; 256] = build_crc_table();

/// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection.
pub fn crc16(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc = (crc << 8) ^ CRC_TABLE[((crc >> 8) ^ b as u16) as usize];
    }
    crc
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// One sample tick on the link. `seq` wraps at 16 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Frame {
    pub seq: u16,
    pub timestamp_us: u32,
    pub piezo: u16,
    pub force: [u16; 6],
}

fn check_code(field: &'static str, code: u16) -> Result<(), WireError> {
    if code > MAX_CODE {
        return Err(WireError::CodeOutOfRange { field, code });
    }
    Ok(())
}

const FORCE_FIELDS: [&str; 6] = ["force r0c0", "force r0c1", "force r1c0", "force r1c1",
    "force r2c0", "force r2c1"];

pub fn encode_frame(frame: &Frame) -> Result<[u8; FRAME_WIRE_LEN], WireError> {
    check_code("piezo", frame.piezo)?;
    for (ch, &code) in frame.force.iter().enumerate() {
        check_code(FORCE_FIELDS[ch], code)?;
    }
    let mut out = [0u8; FRAME_WIRE_LEN];
    out[0..2].copy_from_slice(&SYNC);
    out[2..4].copy_from_slice(&frame.seq.to_le_bytes());
    out[4..8].copy_from_slice(&frame.timestamp_us.to_le_bytes());
    out[8..10].copy_from_slice(&frame.piezo.to_le_bytes());
    for (ch, &code) in frame.force.iter().enumerate() {
        out[10 + 2 * ch..12 + 2 * ch].copy_from_slice(&code.to_le_bytes());
    }
    let crc = crc16(&out[..FRAME_BODY_LEN]);
    out[FRAME_BODY_LEN..].copy_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Body fields without sync or CRC checks; callers verify those first.
fn decode_body(body: &[u8]) -> Result<Frame, WireError> {
    let seq = u16::from_le_bytes([body[2], body[3]]);
    let timestamp_us = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
    let piezo = u16::from_le_bytes([body[8], body[9]]);
    check_code("piezo", piezo)?;
    let mut force = [0u16; 6];
    for (ch, slot) in force.iter_mut().enumerate() {
        *slot = u16::from_le_bytes([body[10 + 2 * ch], body[11 + 2 * ch]]);
        check_code(FORCE_FIELDS[ch], *slot)?;
    }
    Ok(Frame { seq, timestamp_us, piezo, force })
}

/// Strict single-frame decode: exact length, sync, CRC, code ranges.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    if bytes.len() != FRAME_WIRE_LEN {
        return Err(WireError::WrongLength { expected: FRAME_WIRE_LEN, got: bytes.len() });
    }
    if bytes[0..2] != SYNC {
        return Err(WireError::BadSync);
    }
    let expected = crc16(&bytes[..FRAME_BODY_LEN]);
    let got = u16::from_le_bytes([bytes[FRAME_BODY_LEN], bytes[FRAME_BODY_LEN + 1]]);
    if expected != got {
        return Err(WireError::BadCrc { expected, got });
    }
    decode_body(&bytes[..FRAME_BODY_LEN])
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParserMode {
    Hunting,
    Synced,
}

/// Incremental stream parser. Feed arbitrary chunks; decoded frames come out
/// identically however the stream is split. Corruption never aborts: bad
/// bytes are skipped one at a time and show up in the counters. All counters
/// are monotone.
#[derive(Debug, Clone)]
pub struct FrameParser {
    buf: Vec<u8>,
    prev_seq: Option<u16>,
    discarded_since_frame: bool,
    pub mode: ParserMode,
    pub frames_ok: u64,
    /// Sync candidates whose CRC or code range check failed.
    pub crc_fail_count: u64,
    /// Discard episodes that ended in a good frame, the initial lock included
    /// when it had to skip bytes.
    pub resync_count: u64,
    /// Jumps in the sequence numbers of good frames; one per gap.
    pub seq_gap_count: u64,
    /// Total frames the sequence jumps say were lost.
    pub missed_frames: u64,
    /// Bytes skipped while hunting for a frame head.
    pub bytes_discarded: u64,
}

impl Default for FrameParser {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameParser {
    pub fn new() -> Self {
        FrameParser {
            buf: Vec::new(),
            prev_seq: None,
            discarded_since_frame: false,
            mode: ParserMode::Hunting,
            frames_ok: 0,
            crc_fail_count: 0,
            resync_count: 0,
            seq_gap_count: 0,
            missed_frames: 0,
            bytes_discarded: 0,
        }
    }

    fn skip_byte(&mut self, cur: &mut usize) {
        *cur += 1;
        self.bytes_discarded += 1;
        self.discarded_since_frame = true;
        self.mode = ParserMode::Hunting;
    }

    pub fn feed(&mut self, chunk: &[u8]) -> Vec<Frame> {
        self.buf.extend_from_slice(chunk);
        let mut out = Vec::new();
        let mut cur = 0usize;
        loop {
            let rem = self.buf.len() - cur;
            if rem == 0 {
                break;
            }
            if self.buf[cur] != SYNC[0] {
                self.skip_byte(&mut cur);
                continue;
            }
            if rem < 2 {
                // lone AA at the tail could start a frame, wait
                break;
            }
            if self.buf[cur + 1] != SYNC[1] {
                self.skip_byte(&mut cur);
                continue;
            }
            if rem < FRAME_WIRE_LEN {
                break;
            }
            let body = &self.buf[cur..cur + FRAME_BODY_LEN];
            let claimed = u16::from_le_bytes([
                self.buf[cur + FRAME_BODY_LEN],
                self.buf[cur + FRAME_BODY_LEN + 1],
            ]);
            if crc16(body) != claimed {
                self.crc_fail_count += 1;
                self.skip_byte(&mut cur);
                continue;
            }
            let Ok(frame) = decode_body(body) else {
                self.crc_fail_count += 1;
                self.skip_byte(&mut cur);
                continue;
            };
            if self.discarded_since_frame {
                self.resync_count += 1;
                self.discarded_since_frame = false;
            }
            if let Some(prev) = self.prev_seq {
                let gap = frame.seq.wrapping_sub(prev).wrapping_sub(1);
                if gap != 0 {
                    self.seq_gap_count += 1;
                    self.missed_frames += gap as u64;
                }
            }
            self.prev_seq = Some(frame.seq);
            self.frames_ok += 1;
            self.mode = ParserMode::Synced;
            out.push(frame);
            cur += FRAME_WIRE_LEN;
        }
        self.buf.drain(..cur);
        out
    }
}

// ---------------------------------------------------------------------------
// Trace streaming
// ---------------------------------------------------------------------------

/// Channel codes recovered from a stream, one entry per good frame.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StreamChannels {
    pub timestamps_us: Vec<u32>,
    pub piezo: Vec<u16>,
    pub force: [Vec<u16>; 6],
}

/// Serialize a trace as one frame per sample: seq counts from zero and
/// wraps, timestamps tick at the sample rate.
pub fn stream_trace(trace: &GraspTrace, adc: &AdcSpec) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(trace.len() * FRAME_WIRE_LEN);
    for i in 0..trace.len() {
        let mut force = [0u16; 6];
        for (ch, slot) in force.iter_mut().enumerate() {
            *slot = dsp::quantize(trace.force[ch][i], adc)?;
        }
        let frame = Frame {
            seq: (i & 0xFFFF) as u16,
            timestamp_us: (i as f64 * 1.0e6 / trace.sample_rate_hz + 0.5) as u32,
            piezo: dsp::quantize(trace.vibration[i], adc)?,
            force,
        };
        out.extend_from_slice(&encode_frame(&frame)?);
    }
    Ok(out)
}

/// Parse a whole stream into per-channel code series. Corruption shows up in
/// the returned parser's counters, not as an error.
pub fn parse_to_trace(bytes: &[u8]) -> (StreamChannels, FrameParser) {
    let mut parser = FrameParser::new();
    let frames = parser.feed(bytes);
    let mut channels = StreamChannels::default();
    for f in &frames {
        channels.timestamps_us.push(f.timestamp_us);
        channels.piezo.push(f.piezo);
        for ch in 0..6 {
            channels.force[ch].push(f.force[ch]);
        }
    }
    (channels, parser)
}
