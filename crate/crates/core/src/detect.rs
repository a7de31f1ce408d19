//! First-contact detection on the vibration channel.
//!
//! Both detectors walk the same causal window grid: a window of
//! `detect_total_samples` ending at sample `e`, advanced by
//! `detect_new_samples` (the hop) per step, with the first window ending at
//! index `total - 1`. New-region samples tile the stream contiguously from
//! `total - hop` on, so every sample past the initial history is examined
//! exactly once.
//!
//! The threshold detector fires at the first sample whose deviation from the
//! calibrated baseline mean exceeds `max(multiplier * sigma, floor)`. The
//! classifier-backed detector normalizes whole windows against the baseline
//! and fires at the end of the first window the classifier accepts. Trailing
//! samples that do not fill a whole hop are never scanned.

use alloc::vec::Vec;
use core::fmt;

use crate::dsp::{AdcSpec, WindowSpec};
use crate::math;
use crate::synth::GraspTrace;

/// Fewer calibration samples than this cannot pin the noise floor.
pub const MIN_CALIBRATION_SAMPLES: usize = 100;

/// Default calibration span, about 100 ms at the native sample rate.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 493;

/// Detection tolerance used when scoring against ground truth.
pub const DEFAULT_TOLERANCE_MS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectError {
    ShortCalibration { needed: usize, got: usize },
    ShortTrace { needed: usize, got: usize },
    /// Window length fed to a classifier differs from what it was trained on.
    FeatureMismatch { expected: usize, got: usize },
    /// First contact falls inside the initial window history, so no
    /// pre-contact training window exists.
    ContactTooEarly { t_contact: usize },
    LengthMismatch { left: usize, right: usize },
    EmptyInput,
    /// A model structurally unfit for detection duty.
    BadModel(&'static str),
}

impl fmt::Display for DetectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectError::ShortCalibration { needed, got } => {
                write!(f, "calibration needs {needed} samples, got {got}")
            }
            DetectError::ShortTrace { needed, got } => {
                write!(f, "trace needs {needed} samples, got {got}")
            }
            DetectError::FeatureMismatch { expected, got } => {
                write!(f, "classifier expects {expected}-sample windows, got {got}")
            }
            DetectError::ContactTooEarly { t_contact } => {
                write!(f, "contact at sample {t_contact} is inside the initial window")
            }
            DetectError::LengthMismatch { left, right } => {
                write!(f, "mismatched lengths: {left} vs {right}")
            }
            DetectError::EmptyInput => write!(f, "empty input"),
            DetectError::BadModel(s) => write!(f, "bad detection model: {s}"),
        }
    }
}

impl core::error::Error for DetectError {}

// ---------------------------------------------------------------------------
// Baseline calibration
// ---------------------------------------------------------------------------

/// Mean and spread of the pre-contact signal, from the first `n` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineStats {
    pub mean_v: f64,
    pub sigma_v: f64,
    pub n: usize,
}

pub fn calibrate_baseline(samples: &[f64], n: usize) -> Result<BaselineStats, DetectError> {
    if n < MIN_CALIBRATION_SAMPLES {
        return Err(DetectError::ShortCalibration { needed: MIN_CALIBRATION_SAMPLES, got: n });
    }
    if samples.len() < n {
        return Err(DetectError::ShortCalibration { needed: n, got: samples.len() });
    }
    let head = &samples[..n];
    Ok(BaselineStats { mean_v: math::mean(head), sigma_v: math::std_dev(head), n })
}

/// Normalization floor: quantized baselines can report near-zero sigma.
pub fn default_sigma_floor(adc: &AdcSpec) -> f64 {
    2.0 * adc.lsb_v()
}

/// Shift-and-scale a window by the baseline, with a floored scale.
pub fn normalize_window(window: &[f64], baseline: &BaselineStats, sigma_floor_v: f64) -> Vec<f64> {
    let s = baseline.sigma_v.max(sigma_floor_v);
    window.iter().map(|x| (x - baseline.mean_v) / s).collect()
}

// ---------------------------------------------------------------------------
// Detectors
// ---------------------------------------------------------------------------

/// Amplitude-threshold detector.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdDetector {
    pub multiplier: f64,
    /// Absolute lower bound on the threshold, keeps quantization steps on a
    /// silent channel from counting as contact.
    pub floor_v: f64,
}

impl ThresholdDetector {
    pub fn new(multiplier: f64, floor_v: f64) -> Self {
        ThresholdDetector { multiplier, floor_v }
    }

    /// The usual 3-sigma rule with a two-step ADC floor.
    pub fn three_sigma(adc: &AdcSpec) -> Self {
        ThresholdDetector { multiplier: 3.0, floor_v: default_sigma_floor(adc) }
    }

    pub fn threshold_v(&self, baseline: &BaselineStats) -> f64 {
        (self.multiplier * baseline.sigma_v).max(self.floor_v)
    }
}

/// Binary decision on one baseline-normalized window.
pub trait WindowClassifier {
    /// Expected window length in samples.
    fn window_len(&self) -> usize;

    /// True when the window holds a contact onset.
    fn classify_window(&self, window: &[f64]) -> Result<bool, DetectError>;
}

fn check_trace_len(samples: &[f64], total: usize) -> Result<(), DetectError> {
    if samples.len() < total {
        return Err(DetectError::ShortTrace { needed: total, got: samples.len() });
    }
    Ok(())
}

/// First sample whose deviation from the baseline mean exceeds the threshold,
/// scanning each window's new region in stream order.
pub fn detect_threshold(
    samples: &[f64],
    baseline: &BaselineStats,
    spec: &WindowSpec,
    det: &ThresholdDetector,
) -> Result<Option<usize>, DetectError> {
    let total = spec.detect_total_samples();
    let hop = spec.detect_new_samples();
    check_trace_len(samples, total)?;
    let thr = det.threshold_v(baseline);
    let mut e = total - 1;
    while e < samples.len() {
        for k in (e + 1 - hop)..=e {
            if math::fabs(samples[k] - baseline.mean_v) > thr {
                return Ok(Some(k));
            }
        }
        e += hop;
    }
    Ok(None)
}

/// End index of the first window the classifier accepts.
pub fn detect_with_classifier<C: WindowClassifier>(
    samples: &[f64],
    baseline: &BaselineStats,
    spec: &WindowSpec,
    clf: &C,
    sigma_floor_v: f64,
) -> Result<Option<usize>, DetectError> {
    let total = spec.detect_total_samples();
    let hop = spec.detect_new_samples();
    check_trace_len(samples, total)?;
    if clf.window_len() != total {
        return Err(DetectError::FeatureMismatch { expected: clf.window_len(), got: total });
    }
    let mut e = total - 1;
    while e < samples.len() {
        let z = normalize_window(&samples[e + 1 - total..=e], baseline, sigma_floor_v);
        if clf.classify_window(&z)? {
            return Ok(Some(e));
        }
        e += hop;
    }
    Ok(None)
}

/// Outcome of running a detector over one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionResult {
    pub detected: bool,
    pub detect_index: Option<usize>,
}

impl DetectionResult {
    pub fn from_index(detect_index: Option<usize>) -> Self {
        DetectionResult { detected: detect_index.is_some(), detect_index }
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// True positives over all traces; every trace lands in exactly one bin.
    pub accuracy: f64,
    /// Mean signed detection delay over true positives, zero when there are none.
    pub mean_lag_ms: f64,
}

/// Score detections against ground-truth contact indices. A detection within
/// `tolerance_ms` of the truth is a true positive, any other detection is a
/// false positive, a miss is a false negative.
pub fn score_detections(
    detections: &[Option<usize>],
    contacts: &[usize],
    tolerance_ms: f64,
    sample_rate_hz: f64,
) -> Result<DetectionScore, DetectError> {
    if detections.len() != contacts.len() {
        return Err(DetectError::LengthMismatch { left: detections.len(), right: contacts.len() });
    }
    if detections.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    let ms_per_sample = 1000.0 / sample_rate_hz;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    let mut lag_sum = 0.0;
    for (&det, &truth) in detections.iter().zip(contacts) {
        match det {
            None => fneg += 1,
            Some(k) => {
                let lag_ms = (k as f64 - truth as f64) * ms_per_sample;
                if math::fabs(lag_ms) <= tolerance_ms {
                    tp += 1;
                    lag_sum += lag_ms;
                } else {
                    fp += 1;
                }
            }
        }
    }
    Ok(DetectionScore {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        accuracy: tp as f64 / detections.len() as f64,
        mean_lag_ms: if tp > 0 { lag_sum / tp as f64 } else { 0.0 },
    })
}

// ---------------------------------------------------------------------------
// Training windows
// ---------------------------------------------------------------------------

/// Baseline-normalized windows with binary contact labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

/// One positive and one negative window per trace: the grid window whose new
/// region holds first contact, and a uniformly drawn grid window that ends
/// before it.
pub fn build_detection_training(
    traces: &[GraspTrace],
    spec: &WindowSpec,
    calibration_samples: usize,
    sigma_floor_v: f64,
    rng: &mut impl rand::Rng,
) -> Result<WindowSet, DetectError> {
    use rand::RngExt as _;
    if traces.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    let total = spec.detect_total_samples();
    let hop = spec.detect_new_samples();
    let mut windows = Vec::with_capacity(traces.len() * 2);
    let mut labels = Vec::with_capacity(traces.len() * 2);
    for tr in traces {
        let baseline = calibrate_baseline(&tr.vibration, calibration_samples)?;
        let t1 = tr.t_contact1;
        if t1 < total {
            return Err(DetectError::ContactTooEarly { t_contact: t1 });
        }
        // Window index whose new region [total-hop+j*hop, total-1+j*hop]
        // contains the contact sample.
        let j = (t1 - (total - hop)) / hop;
        let e = total - 1 + j * hop;
        if e >= tr.vibration.len() {
            return Err(DetectError::ShortTrace { needed: e + 1, got: tr.vibration.len() });
        }
        windows.push(normalize_window(&tr.vibration[e + 1 - total..=e], &baseline, sigma_floor_v));
        labels.push(true);

        let j_neg = rng.random_range(0..=(t1 - total) / hop);
        let e_neg = total - 1 + j_neg * hop;
        windows.push(normalize_window(
            &tr.vibration[e_neg + 1 - total..=e_neg],
            &baseline,
            sigma_floor_v,
        ));
        labels.push(false);
    }
    Ok(WindowSet { windows, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, StiffnessLabel, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Normal};

    fn spec() -> WindowSpec {
        WindowSpec::default_at(4936.0).unwrap()
    }

    #[test]
    fn calibration_reports_exact_moments() {
        // 0.1 V square wave: mean 0, unbiased sd sqrt(n/(n-1))*0.1
        let samples: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let b = calibrate_baseline(&samples, 200).unwrap();
        assert!((b.mean_v - 0.0).abs() < 1e-15);
        let expect = 0.1 * (200.0f64 / 199.0).sqrt();
        assert!((b.sigma_v - expect).abs() < 1e-12);
        assert_eq!(b.n, 200);
    }

    #[test]
    fn calibration_rejects_short_inputs() {
        let samples = alloc::vec![0.0; 150];
        assert_eq!(
            calibrate_baseline(&samples, 99),
            Err(DetectError::ShortCalibration { needed: 100, got: 99 })
        );
        assert_eq!(
            calibrate_baseline(&samples, 151),
            Err(DetectError::ShortCalibration { needed: 151, got: 150 })
        );
    }

    #[test]
    fn calibration_sigma_concentrates_on_truth() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let dist = Normal::new(1.65, 0.01).unwrap();
        let samples: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let b = calibrate_baseline(&samples, 10_000).unwrap();
        assert!((b.mean_v - 1.65).abs() < 3.0 * 0.01 / 100.0, "mean {}", b.mean_v);
        assert!(b.sigma_v > 0.0097 && b.sigma_v < 0.0103, "sigma {}", b.sigma_v);
    }

    #[test]
    fn threshold_respects_floor() {
        let adc = AdcSpec::default_10bit();
        let det = ThresholdDetector::three_sigma(&adc);
        let quiet = BaselineStats { mean_v: 1.65, sigma_v: 1e-6, n: 500 };
        assert_eq!(det.threshold_v(&quiet), det.floor_v);
        let noisy = BaselineStats { mean_v: 1.65, sigma_v: 0.01, n: 500 };
        assert!((det.threshold_v(&noisy) - 0.03).abs() < 1e-15);
    }

    fn make_traces(cfg: &SynthConfig, count: usize, seed: u64) -> Vec<synth::GraspTrace> {
        let labels = synth::block_labels();
        let per = count.div_ceil(labels.len());
        let mut traces =
            synth::make_dataset(cfg, &labels, per, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap();
        traces.truncate(count);
        traces
    }

    #[test]
    fn clean_transient_is_caught_almost_immediately() {
        let cfg = SynthConfig {
            noise_std_v: 0.0,
            hum_amp_v: 0.0,
            amp_jitter_sigma: 0.0,
            ..SynthConfig::default()
        };
        let label = StiffnessLabel::new(10.0).unwrap();
        let tr = synth::synthesize_grasp(&cfg, label, &mut ChaCha12Rng::seed_from_u64(33)).unwrap();
        let base = calibrate_baseline(&tr.vibration, DEFAULT_CALIBRATION_SAMPLES).unwrap();
        let det = ThresholdDetector::three_sigma(&cfg.adc);
        let k = detect_threshold(&tr.vibration, &base, &spec(), &det).unwrap().unwrap();
        assert!(k > tr.t_contact1 && k <= tr.t_contact1 + 2, "fired at {k} vs {}", tr.t_contact1);
    }

    #[test]
    fn detection_is_reliable_and_prompt_on_plain_traces() {
        let cfg = SynthConfig::default();
        let traces = make_traces(&cfg, 50, 40);
        let det = ThresholdDetector::three_sigma(&cfg.adc);
        let mut dets = Vec::new();
        let mut truths = Vec::new();
        for tr in &traces {
            let base = calibrate_baseline(&tr.vibration, DEFAULT_CALIBRATION_SAMPLES).unwrap();
            dets.push(detect_threshold(&tr.vibration, &base, &spec(), &det).unwrap());
            truths.push(tr.t_contact1);
        }
        let score =
            score_detections(&dets, &truths, DEFAULT_TOLERANCE_MS, cfg.sample_rate_hz).unwrap();
        assert_eq!(score.true_positives, 50);
        assert_eq!(score.accuracy, 1.0);
        assert!(score.mean_lag_ms >= 0.0 && score.mean_lag_ms < 1.0, "lag {}", score.mean_lag_ms);
    }

    #[test]
    fn baseline_alone_never_fires() {
        let cfg = SynthConfig::default();
        for seed in 50..60 {
            let label = StiffnessLabel::new(43.0).unwrap();
            let tr =
                synth::synthesize_grasp(&cfg, label, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap();
            let pre = &tr.vibration[..tr.t_contact1 - 5];
            let base = calibrate_baseline(pre, DEFAULT_CALIBRATION_SAMPLES).unwrap();
            let det = ThresholdDetector::three_sigma(&cfg.adc);
            assert_eq!(detect_threshold(pre, &base, &spec(), &det).unwrap(), None);
        }
    }

    #[test]
    fn interference_burst_triggers_a_false_positive() {
        let cfg = SynthConfig::default();
        let label = StiffnessLabel::new(29.0).unwrap();
        let mut tr =
            synth::synthesize_grasp(&cfg, label, &mut ChaCha12Rng::seed_from_u64(77)).unwrap();
        // 6x the baseline sigma: tall enough to clear the threshold even from
        // the bottom of a hum half-cycle, so the firing is deterministic
        let burst_at = 550;
        let amp = 6.0 * cfg.baseline_sigma_v();
        synth::inject_burst(&mut tr, burst_at, amp, 8, &cfg.adc).unwrap();
        let base = calibrate_baseline(&tr.vibration, DEFAULT_CALIBRATION_SAMPLES).unwrap();
        let det = ThresholdDetector::three_sigma(&cfg.adc);
        let k = detect_threshold(&tr.vibration, &base, &spec(), &det).unwrap().unwrap();
        assert!(k >= burst_at && k < burst_at + 8, "fired at {k}");
        let score = score_detections(&[Some(k)], &[tr.t_contact1], 5.0, cfg.sample_rate_hz).unwrap();
        assert_eq!(score.false_positives, 1);
    }

    #[test]
    fn higher_thresholds_never_fire_earlier() {
        let cfg = SynthConfig::default();
        let mut traces = make_traces(&cfg, 10, 60);
        for (i, tr) in traces.iter_mut().enumerate() {
            if i % 2 == 0 {
                synth::inject_burst(tr, 520, 4.0 * cfg.baseline_sigma_v(), 8, &cfg.adc).unwrap();
            }
            let base = calibrate_baseline(&tr.vibration, DEFAULT_CALIBRATION_SAMPLES).unwrap();
            let lo = detect_threshold(
                &tr.vibration,
                &base,
                &spec(),
                &ThresholdDetector::new(3.0, default_sigma_floor(&cfg.adc)),
            )
            .unwrap();
            let hi = detect_threshold(
                &tr.vibration,
                &base,
                &spec(),
                &ThresholdDetector::new(5.0, default_sigma_floor(&cfg.adc)),
            )
            .unwrap();
            match (lo, hi) {
                (Some(a), Some(b)) => assert!(a <= b, "3-sigma at {a}, 5-sigma at {b}"),
                (None, Some(b)) => panic!("5-sigma fired at {b} without 3-sigma"),
                _ => {}
            }
        }
    }

    struct PeakClassifier {
        len: usize,
        z_thr: f64,
    }

    impl WindowClassifier for PeakClassifier {
        fn window_len(&self) -> usize {
            self.len
        }

        fn classify_window(&self, window: &[f64]) -> Result<bool, DetectError> {
            if window.len() != self.len {
                return Err(DetectError::FeatureMismatch { expected: self.len, got: window.len() });
            }
            Ok(window.iter().any(|z| math::fabs(*z) > self.z_thr))
        }
    }

    #[test]
    fn classifier_detector_fires_at_window_end() {
        let cfg = SynthConfig::default();
        let label = StiffnessLabel::new(60.0).unwrap();
        let tr = synth::synthesize_grasp(&cfg, label, &mut ChaCha12Rng::seed_from_u64(88)).unwrap();
        let base = calibrate_baseline(&tr.vibration, DEFAULT_CALIBRATION_SAMPLES).unwrap();
        let ws = spec();
        let clf = PeakClassifier { len: ws.detect_total_samples(), z_thr: 5.0 };
        let e = detect_with_classifier(&tr.vibration, &base, &ws, &clf, default_sigma_floor(&cfg.adc))
            .unwrap()
            .unwrap();
        // fires at a grid window end, at or just past the contact sample
        assert_eq!((e + 1 - ws.detect_total_samples()) % ws.detect_new_samples(), 0);
        assert!(e >= tr.t_contact1);
        assert!(e < tr.t_contact1 + ws.detect_new_samples() + 2);

        let bad = PeakClassifier { len: 64, z_thr: 5.0 };
        assert_eq!(
            detect_with_classifier(&tr.vibration, &base, &ws, &bad, 0.001),
            Err(DetectError::FeatureMismatch { expected: 64, got: 99 })
        );
    }

    #[test]
    fn training_windows_are_balanced_and_separable() {
        let cfg = SynthConfig::default();
        let traces = make_traces(&cfg, 30, 70);
        let ws = spec();
        let set = build_detection_training(
            &traces,
            &ws,
            DEFAULT_CALIBRATION_SAMPLES,
            default_sigma_floor(&cfg.adc),
            &mut ChaCha12Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(set.windows.len(), 60);
        assert_eq!(set.labels.iter().filter(|&&l| l).count(), 30);
        for (w, &positive) in set.windows.iter().zip(&set.labels) {
            assert_eq!(w.len(), ws.detect_total_samples());
            let peak = w.iter().fold(0.0f64, |m, z| m.max(math::fabs(*z)));
            if positive {
                assert!(peak > 5.0, "positive window peak {peak}");
            } else {
                assert!(peak < 3.5, "negative window peak {peak}");
            }
        }
    }

    #[test]
    fn scoring_arithmetic_is_exact() {
        let dets = [Some(1002), Some(1100), None];
        let truths = [1000, 1000, 1000];
        let s = score_detections(&dets, &truths, 5.0, 1000.0).unwrap();
        assert_eq!(s.true_positives, 1);
        assert_eq!(s.false_positives, 1);
        assert_eq!(s.false_negatives, 1);
        assert!((s.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.mean_lag_ms - 2.0).abs() < 1e-12);
        assert!(score_detections(&dets, &truths[..2], 5.0, 1000.0).is_err());
        assert!(score_detections(&[], &[], 5.0, 1000.0).is_err());
    }

    #[test]
    fn short_traces_are_rejected() {
        let base = BaselineStats { mean_v: 0.0, sigma_v: 0.01, n: 100 };
        let det = ThresholdDetector::new(3.0, 0.001);
        let short = alloc::vec![0.0; 50];
        assert_eq!(
            detect_threshold(&short, &base, &spec(), &det),
            Err(DetectError::ShortTrace { needed: 99, got: 50 })
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // the detector reports the first scanned offender, never anything
            // in the scanned region before it
            #[test]
            fn first_crossing_semantics(seed in 0u64..64, mult in 2.5..6.0f64) {
                let cfg = SynthConfig::default();
                let label = StiffnessLabel::new(43.0).unwrap();
                let tr = synth::synthesize_grasp(&cfg, label, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap();
                let base = calibrate_baseline(&tr.vibration, DEFAULT_CALIBRATION_SAMPLES).unwrap();
                let ws = spec();
                let det = ThresholdDetector::new(mult, default_sigma_floor(&cfg.adc));
                if let Some(k) = detect_threshold(&tr.vibration, &base, &ws, &det).unwrap() {
                    let thr = det.threshold_v(&base);
                    prop_assert!(math::fabs(tr.vibration[k] - base.mean_v) > thr);
                    let scan_start = ws.detect_total_samples() - ws.detect_new_samples();
                    prop_assert!(k >= scan_start);
                    for x in &tr.vibration[scan_start..k] {
                        prop_assert!(math::fabs(x - base.mean_v) <= thr);
                    }
                }
            }
        }
    }
}
