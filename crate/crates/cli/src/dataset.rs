//! On-disk dataset layout: a directory holding `manifest.toml` plus
//! `traces.bin`. The manifest is the readable record of how the data was
//! made; the binary file carries raw ADC codes so a round trip through disk
//! reproduces the synthesized samples bit for bit.
//!
//! `traces.bin`, all little-endian:
//!   magic "SSTRACE1" | record count u64 | records...
//! each record:
//!   trace_id u64 | object_idx u32 (0xFFFFFFFF = none) | t_contact1 u32 |
//!   t_contact2 u32 | sample count u32 | shore f64 | piezo codes u16 * n |
//!   force codes u16 * n, channel by channel in row-major channel order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stiffsense_core::dsp::{self, WindowSpec};
use stiffsense_core::synth::{GraspTrace, RealObject, StiffnessLabel, SynthConfig};

use crate::error::CliError;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRACES_FILE: &str = "traces.bin";
const TRACES_MAGIC: &[u8; 8] = b"SSTRACE1";
const NO_OBJECT: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub created_by: String,
    /// Hash of the effective synthesis settings; reruns with the same
    /// settings produce the same hash regardless of output directory.
    pub config_hash: String,
    pub seed: u64,
    pub preset: String,
    pub pinches_per_label: usize,
    /// Distinct shore values present, ascending.
    pub labels: Vec<f64>,
    /// Present only for object-style datasets; order matches object_idx.
    pub objects: Option<Vec<RealObject>>,
    pub n_traces: usize,
    pub detect_window_samples: usize,
    pub stiffness_window_samples: usize,
    /// Full generator snapshot, enough to re-synthesize from scratch.
    pub synth: SynthConfig,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub traces: Vec<GraspTrace>,
    /// Per trace, an index into `manifest.objects` when present.
    pub object_idx: Vec<Option<usize>>,
}

impl LoadedDataset {
    pub fn window_spec(&self) -> Result<WindowSpec, CliError> {
        Ok(WindowSpec::default_at(self.manifest.synth.sample_rate_hz)?)
    }

    /// Distinct shore values, ascending. Matches the manifest label list.
    pub fn shore_table(&self) -> Vec<f64> {
        self.manifest.labels.clone()
    }

    pub fn object_name(&self, trace_pos: usize) -> Option<&str> {
        let idx = self.object_idx.get(trace_pos).copied().flatten()?;
        let objects = self.manifest.objects.as_deref()?;
        objects.get(idx).map(|o| o.name.as_str())
    }
}

pub fn distinct_shores(traces: &[GraspTrace]) -> Vec<f64> {
    let mut shores: Vec<f64> = traces.iter().map(|t| t.label.shore_a).collect();
    shores.sort_by(|a, b| a.partial_cmp(b).expect("finite shore labels"));
    shores.dedup();
    shores
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_channel(out: &mut Vec<u8>, samples: &[f64], cfg: &SynthConfig) -> Result<(), CliError> {
    for &v in samples {
        push_u16(out, dsp::quantize(v, &cfg.adc)?);
    }
    Ok(())
}

pub fn save_dataset(
    dir: &Path,
    manifest: &DatasetManifest,
    traces: &[GraspTrace],
    object_idx: &[Option<usize>],
) -> Result<(), CliError> {
    assert_eq!(traces.len(), object_idx.len());
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let manifest_text = toml::to_string_pretty(manifest)
        .map_err(|e| CliError::data(format!("manifest serialization: {e}")))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest_text).map_err(|e| CliError::io(&manifest_path, e))?;

    let mut bin = Vec::new();
    bin.extend_from_slice(TRACES_MAGIC);
    push_u64(&mut bin, traces.len() as u64);
    for (trace, obj) in traces.iter().zip(object_idx) {
        push_u64(&mut bin, trace.trace_id);
        push_u32(&mut bin, obj.map_or(NO_OBJECT, |i| i as u32));
        push_u32(&mut bin, trace.t_contact1 as u32);
        push_u32(&mut bin, trace.t_contact2 as u32);
        push_u32(&mut bin, trace.len() as u32);
        bin.extend_from_slice(&trace.label.shore_a.to_le_bytes());
        push_channel(&mut bin, &trace.vibration, &manifest.synth)?;
        for ch in &trace.force {
            push_channel(&mut bin, ch, &manifest.synth)?;
        }
    }
    let bin_path = dir.join(TRACES_FILE);
    fs::write(&bin_path, bin).map_err(|e| CliError::io(&bin_path, e))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CliError::data(format!("{}: truncated at byte {}", self.path.display(), self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CliError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("sized slice")))
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("sized slice")))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("sized slice")))
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("sized slice")))
    }

    fn channel(&mut self, n: usize, cfg: &SynthConfig) -> Result<Vec<f64>, CliError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(dsp::dequantize(self.u16()?, &cfg.adc)?);
        }
        Ok(out)
    }
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: DatasetManifest =
        toml::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(CliError::data(format!(
            "{}: format version {} (expected {})",
            path.display(),
            manifest.format_version,
            DATASET_FORMAT_VERSION
        )));
    }
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, CliError> {
    let manifest = load_manifest(dir)?;
    let bin_path: PathBuf = dir.join(TRACES_FILE);
    let bytes = fs::read(&bin_path).map_err(|e| CliError::io(&bin_path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0, path: &bin_path };

    if r.take(TRACES_MAGIC.len())? != TRACES_MAGIC {
        return Err(CliError::data(format!("{}: bad magic", bin_path.display())));
    }
    let n_records = r.u64()? as usize;
    if n_records != manifest.n_traces {
        return Err(CliError::data(format!(
            "{}: {} records but the manifest says {}",
            bin_path.display(),
            n_records,
            manifest.n_traces
        )));
    }

    let mut traces = Vec::with_capacity(n_records);
    let mut object_idx = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        let trace_id = r.u64()?;
        let obj = r.u32()?;
        let t1 = r.u32()? as usize;
        let t2 = r.u32()? as usize;
        let n = r.u32()? as usize;
        let shore = r.f64()?;
        let label = StiffnessLabel::new(shore)
            .map_err(|e| CliError::data(format!("trace {trace_id}: {e}")))?;
        let vibration = r.channel(n, &manifest.synth)?;
        let mut force: [Vec<f64>; 6] = Default::default();
        for ch in &mut force {
            *ch = r.channel(n, &manifest.synth)?;
        }
        if t1 >= n || t2 >= n || t2 < t1 {
            return Err(CliError::data(format!(
                "trace {trace_id}: contact marks {t1}/{t2} outside {n} samples"
            )));
        }
        let obj = match obj {
            NO_OBJECT => None,
            i => {
                let count = manifest.objects.as_ref().map_or(0, Vec::len);
                if (i as usize) < count {
                    Some(i as usize)
                } else {
                    return Err(CliError::data(format!(
                        "trace {trace_id}: object index {i} outside the manifest"
                    )));
                }
            }
        };
        object_idx.push(obj);
        traces.push(GraspTrace {
            trace_id,
            label,
            sample_rate_hz: manifest.synth.sample_rate_hz,
            vibration,
            force,
            t_contact1: t1,
            t_contact2: t2,
        });
    }
    if r.pos != bytes.len() {
        return Err(CliError::data(format!(
            "{}: {} trailing bytes",
            bin_path.display(),
            bytes.len() - r.pos
        )));
    }
    Ok(LoadedDataset { manifest, traces, object_idx })
}
