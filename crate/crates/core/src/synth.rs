//! Synthetic pinch-grasp traces.
//!
//! Each trace emulates one two-finger pinch recorded by a fingertip piezo
//! (vibration channel) and a 3x2 piezoresistive force array, both behind a
//! 10-bit ADC. The timeline:
//!
//! ```text
//!   [baseline: hum + noise] t1 [ring-down 1] t2 [ring-down 2 + force ramp] end
//! ```
//!
//! The first-contact ring-down is a damped sinusoid whose amplitude is affine
//! in Shore A hardness and whose ring frequency rises mildly with hardness
//! (contact resonance). Trace-to-trace variation: lognormal amplitude jitter
//! per fingertip (placement), a few percent of damping/frequency jitter, and
//! a random hum phase. Force channels stay silent until the second contact,
//! then ramp to a plateau.
//!
//! All randomness flows through caller-supplied RNGs; dataset builders derive
//! one counter-addressed stream per trace, so generation is reproducible and
//! safe to parallelize by trace.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dsp::{self, AdcSpec, DspError};
use crate::math;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthError {
    BadConfig(&'static str),
    BadLabel,
    /// Burst placement that would land outside the pre-contact region.
    BurstOutOfRange,
    Dsp(DspError),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::BadConfig(s) => write!(f, "bad synth config: {s}"),
            SynthError::BadLabel => write!(f, "stiffness label must be finite and in [0, 100]"),
            SynthError::BurstOutOfRange => write!(f, "burst must fit before first contact"),
            SynthError::Dsp(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SynthError {}

impl From<DspError> for SynthError {
    fn from(e: DspError) -> Self {
        SynthError::Dsp(e)
    }
}

// ---------------------------------------------------------------------------
// Labels and objects
// ---------------------------------------------------------------------------

/// Shore A hardness of the grasped object.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StiffnessLabel {
    pub shore_a: f64,
}

impl StiffnessLabel {
    pub fn new(shore_a: f64) -> Result<Self, SynthError> {
        if !shore_a.is_finite() || !(0.0..=100.0).contains(&shore_a) {
            return Err(SynthError::BadLabel);
        }
        Ok(StiffnessLabel { shore_a })
    }
}

/// The five silicone calibration blocks used for training sets.
pub const BLOCK_SHORES: [f64; 5] = [10.0, 20.0, 29.0, 43.0, 60.0];

pub fn block_labels() -> Vec<StiffnessLabel> {
    BLOCK_SHORES.iter().map(|&s| StiffnessLabel { shore_a: s }).collect()
}

/// A held-out everyday object: its hardness plus a fixed seed for the
/// surface-texture component that distinguishes it from the training blocks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RealObject {
    pub name: String,
    pub shore_a: f64,
    pub texture_seed: u64,
}

/// Two apples, two oranges, two tennis balls, two avocados.
pub fn real_object_preset() -> Vec<RealObject> {
    let spec: [(&str, f64); 8] = [
        ("apple-a", 28.0),
        ("apple-b", 26.0),
        ("orange-a", 35.0),
        ("orange-b", 37.0),
        ("tennis-a", 45.0),
        ("tennis-b", 46.0),
        ("avocado-a", 59.0),
        ("avocado-b", 67.0),
    ];
    spec.iter()
        .enumerate()
        .map(|(i, &(name, shore_a))| RealObject {
            name: String::from(name),
            shore_a,
            texture_seed: 101 + i as u64,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthConfig {
    pub sample_rate_hz: f64,

    /// Contact-gap model: Normal(mean, std) floored at delta_min_ms. The
    /// generator compensates the Normal parameters so the floored draws
    /// reproduce the configured mean/std exactly; see [`GapModel`].
    pub delta_mean_ms: f64,
    pub delta_std_ms: f64,
    pub delta_min_ms: f64,

    /// Ring-down amplitude = amp_offset_v + amp_gain_per_shore * shore.
    pub amp_gain_per_shore: f64,
    pub amp_offset_v: f64,

    /// Ring frequency = osc_freq_hz + osc_freq_gain_hz_per_shore * shore.
    pub osc_freq_hz: f64,
    pub osc_freq_gain_hz_per_shore: f64,
    pub damping_per_s: f64,

    /// White-noise level on every channel. Draws are clamped at 3 sigma so
    /// per-trace bounds stay deterministic.
    pub noise_std_v: f64,
    /// Mains pickup on the piezo channel: peak amplitude and frequency.
    pub hum_amp_v: f64,
    pub hum_freq_hz: f64,

    /// Lognormal sigma of the per-fingertip placement jitter.
    pub amp_jitter_sigma: f64,
    /// Damping multiplier drawn uniformly from 1 +/- this fraction.
    pub damping_jitter_frac: f64,
    /// Lognormal sigma of the ring-frequency jitter.
    pub freq_jitter_sigma: f64,

    /// Second-finger ring-down amplitude relative to the first.
    pub second_contact_atten: f64,

    pub pre_contact_ms: f64,
    /// First contact is placed uniformly inside [pre_contact, pre_contact + jitter].
    pub contact_jitter_ms: f64,
    pub post_contact_ms: f64,

    pub force_rise_ms: f64,
    pub force_plateau_v: f64,
    pub force_offset_v: f64,

    /// Texture amplitude for real-object traces, as a fraction of the
    /// ring-down amplitude. Ignored for plain block traces.
    pub texture_frac: f64,

    pub adc: AdcSpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sample_rate_hz: 4936.0,
            delta_mean_ms: 16.65,
            delta_std_ms: 10.35,
            delta_min_ms: 1.0,
            amp_gain_per_shore: 0.008,
            amp_offset_v: 0.02,
            osc_freq_hz: 400.0,
            osc_freq_gain_hz_per_shore: 3.0,
            damping_per_s: 200.0,
            noise_std_v: 0.002,
            hum_amp_v: 0.010,
            hum_freq_hz: 50.0,
            amp_jitter_sigma: 0.1,
            damping_jitter_frac: 0.1,
            freq_jitter_sigma: 0.01,
            second_contact_atten: 0.6,
            pre_contact_ms: 150.0,
            contact_jitter_ms: 10.0,
            post_contact_ms: 60.0,
            force_rise_ms: 20.0,
            force_plateau_v: 0.8,
            force_offset_v: 0.1,
            texture_frac: 0.1,
            adc: AdcSpec::default_10bit(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let c = self;
        if !(c.sample_rate_hz > 0.0) || !c.sample_rate_hz.is_finite() {
            return Err(SynthError::BadConfig("sample_rate_hz must be positive"));
        }
        if !(c.delta_min_ms > 0.0) {
            return Err(SynthError::BadConfig("delta_min_ms must be > 0"));
        }
        if c.delta_std_ms < 0.0 || !c.delta_mean_ms.is_finite() {
            return Err(SynthError::BadConfig("gap parameters must be finite, std >= 0"));
        }
        if !(c.amp_gain_per_shore > 0.0) {
            return Err(SynthError::BadConfig("amp_gain_per_shore must be > 0"));
        }
        if c.amp_offset_v < 0.0 {
            return Err(SynthError::BadConfig("amp_offset_v must be >= 0"));
        }
        if !(c.osc_freq_hz > 0.0) || !(c.damping_per_s > 0.0) {
            return Err(SynthError::BadConfig("oscillation parameters must be > 0"));
        }
        let top_freq = c.osc_freq_hz + c.osc_freq_gain_hz_per_shore * 100.0;
        if top_freq >= c.sample_rate_hz / 2.0 {
            return Err(SynthError::BadConfig("ring frequency exceeds Nyquist"));
        }
        if c.noise_std_v < 0.0 || c.hum_amp_v < 0.0 || c.hum_freq_hz < 0.0 {
            return Err(SynthError::BadConfig("noise parameters must be >= 0"));
        }
        if c.amp_jitter_sigma < 0.0 || c.freq_jitter_sigma < 0.0 {
            return Err(SynthError::BadConfig("jitter sigmas must be >= 0"));
        }
        if !(0.0..1.0).contains(&c.damping_jitter_frac) {
            return Err(SynthError::BadConfig("damping_jitter_frac must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&c.second_contact_atten) {
            return Err(SynthError::BadConfig("second_contact_atten must be in [0, 1]"));
        }
        if !(c.pre_contact_ms > 0.0) || c.contact_jitter_ms < 0.0 || !(c.post_contact_ms > 0.0) {
            return Err(SynthError::BadConfig("timeline durations must be positive"));
        }
        if !(c.force_rise_ms > 0.0) || c.force_plateau_v < 0.0 || c.force_offset_v < 0.0 {
            return Err(SynthError::BadConfig("force parameters must be positive"));
        }
        if c.texture_frac < 0.0 {
            return Err(SynthError::BadConfig("texture_frac must be >= 0"));
        }
        AdcSpec::new(self.adc.bits, self.adc.ref_v, self.adc.offset_v)?;
        Ok(())
    }

    pub fn gap_model(&self) -> GapModel {
        GapModel::from_config(self.delta_mean_ms, self.delta_std_ms, self.delta_min_ms)
    }

    /// Expected baseline standard deviation on the vibration channel
    /// (hum RMS plus white noise), before quantization.
    pub fn baseline_sigma_v(&self) -> f64 {
        math::sqrt(self.hum_amp_v * self.hum_amp_v / 2.0 + self.noise_std_v * self.noise_std_v)
    }
}

// ---------------------------------------------------------------------------
// Contact-gap model
// ---------------------------------------------------------------------------

/// Floored-Normal gap generator with moment compensation.
///
/// Draws are `max(floor_ms, Normal(mu_g, sigma_g))`. A plain
/// `max(floor, Normal(mean, std))` does NOT realize the configured moments:
/// at the default (16.65, 10.35, floor 1.0) the censored sd is 9.77 ms, off
/// by more than half a millisecond. `from_config` therefore solves the
/// censored-moment equations for (mu_g, sigma_g) so the floored draws hit the
/// configured mean/std exactly. Above the floor the distribution is exactly
/// Normal(mu_g, sigma_g), which is what `tail_prob` reports.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapModel {
    pub mu_g: f64,
    pub sigma_g: f64,
    pub floor_ms: f64,
}

/// Mean and sd of max(a, X), X ~ Normal(mu, sigma).
fn censored_moments(mu: f64, sigma: f64, a: f64) -> (f64, f64) {
    if sigma == 0.0 {
        return (if mu > a { mu } else { a }, 0.0);
    }
    let z = (a - mu) / sigma;
    let cdf = math::normal_cdf(z);
    let pdf = math::normal_pdf(z);
    let m = a * cdf + mu * (1.0 - cdf) + sigma * pdf;
    let m2 = a * a * cdf + (mu * mu + sigma * sigma) * (1.0 - cdf) + sigma * (mu + a) * pdf;
    (m, math::sqrt((m2 - m * m).max(0.0)))
}

impl GapModel {
    pub fn from_config(mean_ms: f64, std_ms: f64, floor_ms: f64) -> Self {
        // Degenerate or floor-dominated targets keep the literal parameters:
        // a mean at or below the floor cannot be realized by any floored draw.
        if std_ms == 0.0 || mean_ms <= floor_ms {
            return GapModel { mu_g: mean_ms, sigma_g: std_ms, floor_ms };
        }
        // If the floor is effectively never hit there is nothing to correct.
        if math::normal_cdf((floor_ms - mean_ms) / std_ms) < 1e-12 {
            return GapModel { mu_g: mean_ms, sigma_g: std_ms, floor_ms };
        }
        // 2-D Newton on the censored-moment equations, numeric Jacobian.
        let mut mu = mean_ms;
        let mut sig = std_ms;
        let h = 1e-6;
        for _ in 0..100 {
            let (m, s) = censored_moments(mu, sig, floor_ms);
            let (m1, s1) = censored_moments(mu + h, sig, floor_ms);
            let (m2, s2) = censored_moments(mu, sig + h, floor_ms);
            let j00 = (m1 - m) / h;
            let j01 = (m2 - m) / h;
            let j10 = (s1 - s) / h;
            let j11 = (s2 - s) / h;
            let det = j00 * j11 - j01 * j10;
            if math::fabs(det) < 1e-14 {
                break;
            }
            let dm = mean_ms - m;
            let ds = std_ms - s;
            let dmu = (j11 * dm - j01 * ds) / det;
            let dsg = (-j10 * dm + j00 * ds) / det;
            mu += dmu;
            sig += dsg;
            if !mu.is_finite() || !sig.is_finite() {
                return GapModel { mu_g: mean_ms, sigma_g: std_ms, floor_ms };
            }
            if sig < 1e-9 {
                sig = 1e-9;
            }
            if math::fabs(dmu) < 1e-12 && math::fabs(dsg) < 1e-12 {
                break;
            }
        }
        GapModel { mu_g: mu, sigma_g: sig, floor_ms }
    }

    pub fn draw(&self, rng: &mut impl rand::Rng) -> f64 {
        if self.sigma_g == 0.0 {
            return if self.mu_g > self.floor_ms { self.mu_g } else { self.floor_ms };
        }
        let n = Normal::new(self.mu_g, self.sigma_g).expect("finite gap parameters");
        let x = n.sample(rng);
        if x > self.floor_ms { x } else { self.floor_ms }
    }

    /// P(gap > t_ms). Exact for t_ms >= floor_ms, where the distribution is
    /// the plain Normal(mu_g, sigma_g) tail.
    pub fn tail_prob(&self, t_ms: f64) -> f64 {
        if t_ms < self.floor_ms {
            return 1.0;
        }
        if self.sigma_g == 0.0 {
            return if self.mu_g > t_ms { 1.0 } else { 0.0 };
        }
        1.0 - math::normal_cdf((t_ms - self.mu_g) / self.sigma_g)
    }
}

/// One gap draw in milliseconds.
pub fn draw_contact_gap(cfg: &SynthConfig, rng: &mut impl rand::Rng) -> f64 {
    cfg.gap_model().draw(rng)
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// One synthesized pinch. Channel samples are volts as reconstructed after
/// the ADC (quantize-then-dequantize), so they sit exactly on code levels.
/// Force channels are the 3x2 array flattened row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraspTrace {
    pub trace_id: u64,
    pub label: StiffnessLabel,
    pub sample_rate_hz: f64,
    pub vibration: Vec<f64>,
    pub force: [Vec<f64>; 6],
    pub t_contact1: usize,
    pub t_contact2: usize,
}

impl GraspTrace {
    pub fn len(&self) -> usize {
        self.vibration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vibration.is_empty()
    }

    pub fn gap_ms(&self) -> f64 {
        (self.t_contact2 - self.t_contact1) as f64 * 1000.0 / self.sample_rate_hz
    }
}

/// Per-object texture: band-limited noise (roughly 200-800 Hz) with unit
/// standard deviation, deterministic in the object's texture seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturePattern {
    pub samples: Vec<f64>,
}

impl TexturePattern {
    pub fn for_object(object: &RealObject, cfg: &SynthConfig) -> Self {
        let fs = cfg.sample_rate_hz;
        let len = ((0.025 * fs) as usize).max(8);
        let mut rng = ChaCha12Rng::seed_from_u64(object.texture_seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let white: Vec<f64> = (0..len).map(|_| unit.sample(&mut rng)).collect();
        let hi = ((fs / 800.0) as usize).max(1);
        let lo = ((fs / 200.0) as usize).max(hi + 1);
        let smooth_hi = dsp::moving_average(&white, hi).expect("nonempty");
        let smooth_lo = dsp::moving_average(&white, lo).expect("nonempty");
        let mut band: Vec<f64> = smooth_hi.iter().zip(&smooth_lo).map(|(a, b)| a - b).collect();
        let sd = math::std_dev(&band);
        if sd > 0.0 {
            for b in band.iter_mut() {
                *b /= sd;
            }
        }
        TexturePattern { samples: band }
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct TraceDraws {
    gap_ms: f64,
    contact_jitter_ms: f64,
    amp_jitter1: f64,
    amp_jitter2: f64,
    damping_mult: f64,
    freq_mult: f64,
    hum_phase: f64,
    texture_scale: f64,
    force_scales: [f64; 6],
}

/// Multiplicative lognormal jitter, median 1.
fn jitter_mult(sigma: f64, rng: &mut impl rand::Rng) -> f64 {
    if sigma > 0.0 {
        LogNormal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        1.0
    }
}

/// All per-trace randomness, drawn in one fixed order so traces are
/// reproducible regardless of which optional pieces are in play.
fn draw_trace_params(cfg: &SynthConfig, rng: &mut impl rand::Rng) -> TraceDraws {
    let gap_ms = cfg.gap_model().draw(rng);
    let contact_jitter_ms = if cfg.contact_jitter_ms > 0.0 {
        rng.random_range(0.0..cfg.contact_jitter_ms)
    } else {
        0.0
    };
    let amp_jitter1 = jitter_mult(cfg.amp_jitter_sigma, rng);
    let amp_jitter2 = jitter_mult(cfg.amp_jitter_sigma, rng);
    let damping_mult = if cfg.damping_jitter_frac > 0.0 {
        rng.random_range(1.0 - cfg.damping_jitter_frac..1.0 + cfg.damping_jitter_frac)
    } else {
        1.0
    };
    let freq_mult = jitter_mult(cfg.freq_jitter_sigma, rng);
    let hum_phase = rng.random_range(0.0..core::f64::consts::TAU);
    let texture_scale = rng.random_range(0.8..1.2);
    let mut force_scales = [1.0f64; 6];
    for s in force_scales.iter_mut() {
        *s = rng.random_range(0.9..1.1);
    }
    TraceDraws {
        gap_ms,
        contact_jitter_ms,
        amp_jitter1,
        amp_jitter2,
        damping_mult,
        freq_mult,
        hum_phase,
        texture_scale,
        force_scales,
    }
}

/// White noise clamped at 3 sigma, so worst-case channel deviations are
/// bounded per trace instead of merely probable.
fn clamped_noise(std_v: f64, rng: &mut impl rand::Rng) -> f64 {
    if std_v == 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, std_v).expect("finite noise std").sample(rng);
    n.clamp(-3.0 * std_v, 3.0 * std_v)
}

fn synthesize_inner(
    cfg: &SynthConfig,
    label: StiffnessLabel,
    trace_id: u64,
    texture: Option<&TexturePattern>,
    rng: &mut impl rand::Rng,
) -> Result<GraspTrace, SynthError> {
    cfg.validate()?;
    StiffnessLabel::new(label.shore_a)?;
    let fs = cfg.sample_rate_hz;
    let per = draw_trace_params(cfg, rng);

    let t1 = math::round((cfg.pre_contact_ms + per.contact_jitter_ms) / 1000.0 * fs) as usize;
    let gap_samples = (math::round(per.gap_ms / 1000.0 * fs) as usize).max(1);
    let t2 = t1 + gap_samples;
    let n = t2 + (math::round(cfg.post_contact_ms / 1000.0 * fs) as usize).max(1);

    let amp_base = cfg.amp_offset_v + cfg.amp_gain_per_shore * label.shore_a;
    let amp1 = amp_base * per.amp_jitter1;
    let amp2 = amp_base * per.amp_jitter2 * cfg.second_contact_atten;
    let freq = (cfg.osc_freq_hz + cfg.osc_freq_gain_hz_per_shore * label.shore_a) * per.freq_mult;
    let lambda = cfg.damping_per_s * per.damping_mult;

    let ring = |k: usize, t0: usize, amp: f64| -> f64 {
        if k < t0 {
            return 0.0;
        }
        let t = (k - t0) as f64 / fs;
        amp * math::exp(-lambda * t) * math::sin(core::f64::consts::TAU * freq * t)
    };

    let mut vibration = vec![0.0f64; n];
    for (k, v) in vibration.iter_mut().enumerate() {
        let t = k as f64 / fs;
        let hum = cfg.hum_amp_v * math::sin(core::f64::consts::TAU * cfg.hum_freq_hz * t + per.hum_phase);
        let mut x = cfg.adc.offset_v + hum + clamped_noise(cfg.noise_std_v, rng);
        x += ring(k, t1, amp1) + ring(k, t2, amp2);
        if let Some(tex) = texture {
            if k >= t1 && k - t1 < tex.samples.len() {
                let env = math::exp(-lambda * (k - t1) as f64 / fs);
                x += cfg.texture_frac * amp1 * per.texture_scale * tex.samples[k - t1] * env;
            }
        }
        *v = dsp::dequantize(dsp::quantize(x, &cfg.adc)?, &cfg.adc)?;
    }

    let rise_samples = (math::round(cfg.force_rise_ms / 1000.0 * fs) as usize).max(1);
    let mut force: [Vec<f64>; 6] = Default::default();
    for (ch, chan) in force.iter_mut().enumerate() {
        let mut samples = vec![0.0f64; n];
        for (k, s) in samples.iter_mut().enumerate() {
            let ramp = if k < t2 {
                0.0
            } else {
                let frac = ((k - t2) as f64 / rise_samples as f64).min(1.0);
                frac * cfg.force_plateau_v * per.force_scales[ch]
            };
            let x = cfg.force_offset_v + ramp + clamped_noise(cfg.noise_std_v, rng);
            *s = dsp::dequantize(dsp::quantize(x, &cfg.adc)?, &cfg.adc)?;
        }
        *chan = samples;
    }

    Ok(GraspTrace {
        trace_id,
        label,
        sample_rate_hz: fs,
        vibration,
        force,
        t_contact1: t1,
        t_contact2: t2,
    })
}

/// Synthesize one grasp of a plain (texture-free) object.
pub fn synthesize_grasp(
    cfg: &SynthConfig,
    label: StiffnessLabel,
    rng: &mut impl rand::Rng,
) -> Result<GraspTrace, SynthError> {
    synthesize_inner(cfg, label, 0, None, rng)
}

fn trace_rng(dataset_seed: u64, trace_id: u64) -> ChaCha12Rng {
    let mut r = ChaCha12Rng::seed_from_u64(dataset_seed);
    r.set_stream(trace_id);
    r
}

/// Block dataset: `pinches_per_label` traces for each label, grouped by label
/// in the given order, trace ids sequential from 0. One RNG stream per trace.
pub fn make_dataset(
    cfg: &SynthConfig,
    labels: &[StiffnessLabel],
    pinches_per_label: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<GraspTrace>, SynthError> {
    if labels.is_empty() || pinches_per_label == 0 {
        return Err(SynthError::BadConfig("dataset needs labels and a positive pinch count"));
    }
    let dataset_seed: u64 = rng.random();
    let mut traces = Vec::with_capacity(labels.len() * pinches_per_label);
    let mut next_id = 0u64;
    for &label in labels {
        for _ in 0..pinches_per_label {
            let mut r = trace_rng(dataset_seed, next_id);
            traces.push(synthesize_inner(cfg, label, next_id, None, &mut r)?);
            next_id += 1;
        }
    }
    Ok(traces)
}

/// Real-object dataset: traces grouped by object in preset order. Each object
/// contributes its fixed texture pattern on top of the usual ring-down, so
/// held-out objects are not just re-labeled training blocks.
pub fn make_real_object_dataset(
    cfg: &SynthConfig,
    objects: &[RealObject],
    pinches_per_object: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<GraspTrace>, SynthError> {
    if objects.is_empty() || pinches_per_object == 0 {
        return Err(SynthError::BadConfig("dataset needs objects and a positive pinch count"));
    }
    let dataset_seed: u64 = rng.random();
    let mut traces = Vec::with_capacity(objects.len() * pinches_per_object);
    let mut next_id = 0u64;
    for object in objects {
        let label = StiffnessLabel::new(object.shore_a)?;
        let texture = TexturePattern::for_object(object, cfg);
        for _ in 0..pinches_per_object {
            let mut r = trace_rng(dataset_seed, next_id);
            traces.push(synthesize_inner(cfg, label, next_id, Some(&texture), &mut r)?);
            next_id += 1;
        }
    }
    Ok(traces)
}

/// Add a half-sine interference pulse to the vibration channel, peaking at
/// `amp_v`, starting at `at`. The pulse must end before first contact; it is
/// re-quantized so the trace stays on ADC code levels.
pub fn inject_burst(
    trace: &mut GraspTrace,
    at: usize,
    amp_v: f64,
    width_samples: usize,
    adc: &AdcSpec,
) -> Result<(), SynthError> {
    if width_samples == 0 || at + width_samples >= trace.t_contact1 {
        return Err(SynthError::BurstOutOfRange);
    }
    for i in 0..width_samples {
        let pulse = amp_v * math::sin(core::f64::consts::PI * (i as f64 + 0.5) / width_samples as f64);
        let x = trace.vibration[at + i] + pulse;
        trace.vibration[at + i] = dsp::dequantize(dsp::quantize(x, adc)?, adc)?;
    }
    Ok(())
}
