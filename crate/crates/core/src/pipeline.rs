//! Per-grasp streaming engine: replay a trace in time order, detect first
//! contact, fill the post-contact window, run a stiffness model, and settle
//! the latency account against that grasp's own contact gap.

use alloc::vec::Vec;
use core::fmt;

use crate::detect::{
    BaselineStats, DetectError, DetectionResult, ThresholdDetector, WindowClassifier,
    calibrate_baseline, detect_threshold, detect_with_classifier,
};
use crate::dsp::{self, DspError, WindowKind, WindowSpec};
use crate::ml::eval::InferenceStats;
use crate::ml::{ConvModel, HeadKind, KernelModel, MlError};
use crate::synth::GraspTrace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PipelineError {
    EmptyCorpus,
    ZeroTrials,
    Detect(DetectError),
    Dsp(DspError),
    Ml(MlError),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::EmptyCorpus => write!(f, "corpus holds no traces"),
            PipelineError::ZeroTrials => write!(f, "benchmark needs at least one trial"),
            PipelineError::Detect(e) => write!(f, "detection: {e}"),
            PipelineError::Dsp(e) => write!(f, "windowing: {e}"),
            PipelineError::Ml(e) => write!(f, "model: {e}"),
        }
    }
}

impl core::error::Error for PipelineError {}

impl From<DetectError> for PipelineError {
    fn from(e: DetectError) -> Self {
        PipelineError::Detect(e)
    }
}

impl From<DspError> for PipelineError {
    fn from(e: DspError) -> Self {
        PipelineError::Dsp(e)
    }
}

impl From<MlError> for PipelineError {
    fn from(e: MlError) -> Self {
        PipelineError::Ml(e)
    }
}

// ---------------------------------------------------------------------------
// Clock
// ---------------------------------------------------------------------------

/// Monotonic time source. Replay itself is logically timestamped; the clock
/// is consulted only around model inference.
pub trait MonotonicClock {
    type Instant: Copy;

    fn now(&self) -> Self::Instant;

    /// Milliseconds elapsed since `since`. Never negative.
    fn elapsed_ms(&self, since: Self::Instant) -> f64;
}

/// Clock that always reads zero. Keeps replay fully deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl MonotonicClock for NullClock {
    type Instant = ();

    fn now(&self) {}

    fn elapsed_ms(&self, _since: ()) -> f64 {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Detector and model fronts
// ---------------------------------------------------------------------------

/// First-contact search over one vibration stream. Implementations scan
/// forward and may read a sample only once its window has been consumed.
pub trait ContactDetector {
    fn detect(
        &self,
        samples: &[f64],
        baseline: &BaselineStats,
        spec: &WindowSpec,
    ) -> Result<Option<usize>, DetectError>;
}

impl ContactDetector for ThresholdDetector {
    fn detect(
        &self,
        samples: &[f64],
        baseline: &BaselineStats,
        spec: &WindowSpec,
    ) -> Result<Option<usize>, DetectError> {
        detect_threshold(samples, baseline, spec, self)
    }
}

/// Learned detector: a window classifier applied on the detection grid.
#[derive(Debug, Clone)]
pub struct ClassifierDetector<C> {
    pub classifier: C,
    pub sigma_floor_v: f64,
}

impl<C: WindowClassifier> ContactDetector for ClassifierDetector<C> {
    fn detect(
        &self,
        samples: &[f64],
        baseline: &BaselineStats,
        spec: &WindowSpec,
    ) -> Result<Option<usize>, DetectError> {
        detect_with_classifier(samples, baseline, spec, &self.classifier, self.sigma_floor_v)
    }
}

/// Shore-valued prediction on one stiffness window.
pub trait StiffnessModel {
    fn window_len(&self) -> usize;

    fn estimate(&self, window: &[f64]) -> Result<f64, MlError>;
}

impl StiffnessModel for KernelModel {
    fn window_len(&self) -> usize {
        self.n_features
    }

    fn estimate(&self, window: &[f64]) -> Result<f64, MlError> {
        Ok(self.predict(window)?.as_shore())
    }
}

impl StiffnessModel for ConvModel {
    fn window_len(&self) -> usize {
        self.spec.input_len
    }

    fn estimate(&self, window: &[f64]) -> Result<f64, MlError> {
        match self.spec.head {
            HeadKind::Scalar => self.predict_shore(window),
            // a bare class index carries no shore value; wrap in LabeledConv
            HeadKind::Softmax { .. } => Err(MlError::HeadMismatch),
        }
    }
}

/// Softmax head plus the shore value each class index stands for.
#[derive(Debug, Clone)]
pub struct LabeledConv<'a> {
    pub model: &'a ConvModel,
    pub class_shores: Vec<f64>,
}

impl StiffnessModel for LabeledConv<'_> {
    fn window_len(&self) -> usize {
        self.model.spec.input_len
    }

    fn estimate(&self, window: &[f64]) -> Result<f64, MlError> {
        let idx = self.model.predict_class(window)?;
        self.class_shores
            .get(idx)
            .copied()
            .ok_or(MlError::BadParam("class index outside the shore table"))
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Where the grasp's time went. `total_ms` is always the exact sum of the
/// three parts; `within_budget` is `total_ms <= budget_ms`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyLedger {
    /// Detection index minus true first contact, may be negative on a false
    /// early fire.
    pub detect_lag_ms: f64,
    /// Window fill time, fixed by the stiffness window length.
    pub collect_ms: f64,
    /// Wall-clock around the predict call only.
    pub inference_ms: f64,
    pub total_ms: f64,
    /// This grasp's actual first-to-second-contact gap.
    pub budget_ms: f64,
    pub within_budget: bool,
}

impl LatencyLedger {
    pub fn new(detect_lag_ms: f64, collect_ms: f64, inference_ms: f64, budget_ms: f64) -> Self {
        let total_ms = detect_lag_ms + collect_ms + inference_ms;
        LatencyLedger {
            detect_lag_ms,
            collect_ms,
            inference_ms,
            total_ms,
            budget_ms,
            within_budget: total_ms <= budget_ms,
        }
    }
}

/// Outcome of one replayed grasp. The ledger and prediction exist exactly
/// when contact was detected.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraspReport {
    pub trace_id: u64,
    pub detection: DetectionResult,
    pub predicted_shore: Option<f64>,
    pub true_shore: f64,
    pub ledger: Option<LatencyLedger>,
}

/// Corpus aggregate. The fraction counts undetected grasps as over budget;
/// inference statistics cover the grasps that actually ran the model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorpusReport {
    pub reports: Vec<GraspReport>,
    pub within_budget_fraction: f64,
    pub inference: Option<InferenceStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub calibration_samples: usize,
}

impl PipelineConfig {
    pub fn default_at(sample_rate_hz: f64) -> Result<Self, DspError> {
        Ok(PipelineConfig {
            window: WindowSpec::default_at(sample_rate_hz)?,
            calibration_samples: crate::detect::DEFAULT_CALIBRATION_SAMPLES,
        })
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Replay one grasp. Samples are consumed strictly in time order: baseline
/// statistics come from the head of the trace, the detector scans forward
/// reading nothing past each window's end, and the stiffness window starts
/// at the detection index. Only the predict call is wall-clock timed.
///
/// A detection can land after the second contact; the prediction is still
/// emitted and the ledger then shows the overrun.
pub fn run_grasp<D, M, K>(
    trace: &GraspTrace,
    detector: &D,
    model: &M,
    cfg: &PipelineConfig,
    clock: &K,
) -> Result<GraspReport, PipelineError>
where
    D: ContactDetector,
    M: StiffnessModel,
    K: MonotonicClock,
{
    let want = cfg.window.stiffness_samples();
    if model.window_len() != want {
        return Err(PipelineError::Ml(MlError::FeatureMismatch {
            expected: model.window_len(),
            got: want,
        }));
    }
    let baseline = calibrate_baseline(&trace.vibration, cfg.calibration_samples)?;
    let found = detector.detect(&trace.vibration, &baseline, &cfg.window)?;
    let detection = DetectionResult::from_index(found);
    let Some(k) = found else {
        return Ok(GraspReport {
            trace_id: trace.trace_id,
            detection,
            predicted_shore: None,
            true_shore: trace.label.shore_a,
            ledger: None,
        });
    };

    let window = dsp::extract_window(&trace.vibration, k, WindowKind::Stiffness, &cfg.window)?;
    let start = clock.now();
    let shore = model.estimate(window)?;
    let inference_ms = clock.elapsed_ms(start);

    let detect_lag_ms = (k as f64 - trace.t_contact1 as f64) * cfg.window.ms_per_sample();
    let ledger =
        LatencyLedger::new(detect_lag_ms, cfg.window.stiffness_ms, inference_ms, trace.gap_ms());
    Ok(GraspReport {
        trace_id: trace.trace_id,
        detection,
        predicted_shore: Some(shore),
        true_shore: trace.label.shore_a,
        ledger: Some(ledger),
    })
}

/// Index of the 99th percentile in an ascending sort of `n` values.
fn p99_index(n: usize) -> usize {
    let k = (0.99 * n as f64) as usize;
    if k * 100 < 99 * n { k } else { k.saturating_sub(1) }
}

/// Mean and p99 of a latency sample set, None when empty.
pub fn summarize_ms(mut times: Vec<f64>) -> Option<InferenceStats> {
    if times.is_empty() {
        return None;
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    Some(InferenceStats { mean_ms: mean, p99_ms: times[p99_index(times.len())] })
}

/// Replay every trace. Models are immutable, so callers may shard a corpus
/// and merge the per-grasp reports in any order; this routine itself runs
/// single-threaded per trace and is deterministic apart from clock fields.
pub fn run_corpus<D, M, K>(
    traces: &[GraspTrace],
    detector: &D,
    model: &M,
    cfg: &PipelineConfig,
    clock: &K,
) -> Result<CorpusReport, PipelineError>
where
    D: ContactDetector,
    M: StiffnessModel,
    K: MonotonicClock,
{
    if traces.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut reports = Vec::with_capacity(traces.len());
    for tr in traces {
        reports.push(run_grasp(tr, detector, model, cfg, clock)?);
    }
    let within = reports.iter().filter(|r| r.ledger.is_some_and(|l| l.within_budget)).count();
    let times: Vec<f64> = reports.iter().filter_map(|r| r.ledger.map(|l| l.inference_ms)).collect();
    Ok(CorpusReport {
        within_budget_fraction: within as f64 / reports.len() as f64,
        inference: summarize_ms(times),
        reports,
    })
}

/// Time repeated predictions on one window, single-threaded. The first tenth
/// of the trials is warm-up and stays out of the statistics.
pub fn bench_inference<M, K>(
    model: &M,
    window: &[f64],
    n_trials: usize,
    clock: &K,
) -> Result<InferenceStats, PipelineError>
where
    M: StiffnessModel,
    K: MonotonicClock,
{
    if n_trials == 0 {
        return Err(PipelineError::ZeroTrials);
    }
    let warmup = n_trials / 10;
    let mut times = Vec::with_capacity(n_trials - warmup);
    for trial in 0..n_trials {
        let start = clock.now();
        let shore = model.estimate(window)?;
        let elapsed = clock.elapsed_ms(start);
        // keep the call observable so the optimizer cannot drop it
        if !shore.is_finite() {
            return Err(PipelineError::Ml(MlError::NonFinite));
        }
        if trial >= warmup {
            times.push(elapsed);
        }
    }
    Ok(summarize_ms(times).expect("at least one timed trial"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{KernelKind, Preprocess, SvrParams, train_svr};
    use crate::synth::{StiffnessLabel, SynthConfig, make_dataset, synthesize_grasp};
    use alloc::vec;
    use core::cell::Cell;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn pipeline_cfg(fs: f64) -> PipelineConfig {
        PipelineConfig::default_at(fs).unwrap()
    }

    /// Regressor that always answers with its bias. Cheap stand-in when the
    /// test only cares about timing and budget arithmetic.
    fn constant_model(shore: f64) -> KernelModel {
        KernelModel {
            kind: KernelKind::Regressor,
            n_features: 74,
            gamma: 1.0,
            c_penalty: 1.0,
            epsilon: Some(1.0),
            classes: None,
            preprocess: Preprocess::External,
            support_vectors: vec![],
            dual_coefs: vec![],
            bias: shore,
            pair_models: None,
        }
    }

    /// Fake clock: each elapsed_ms call reads the next value of an arithmetic
    /// progression, ignoring the instant.
    struct StepClock {
        next_ms: Cell<f64>,
        step_ms: f64,
    }

    impl StepClock {
        fn new(step_ms: f64) -> Self {
            StepClock { next_ms: Cell::new(0.0), step_ms }
        }
    }

    impl MonotonicClock for StepClock {
        type Instant = ();

        fn now(&self) {}

        fn elapsed_ms(&self, _s: ()) -> f64 {
            let t = self.next_ms.get();
            self.next_ms.set(t + self.step_ms);
            t
        }
    }

    fn noiseless_cfg(gap_ms: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            delta_mean_ms: gap_ms,
            delta_std_ms: 0.0,
            noise_std_v: 0.0,
            hum_amp_v: 0.0,
            amp_jitter_sigma: 0.0,
            damping_jitter_frac: 0.0,
            freq_jitter_sigma: 0.0,
            contact_jitter_ms: 0.0,
            seed,
            ..SynthConfig::default()
        }
    }

    proptest! {
        #[test]
        fn ledger_addition_is_exact(
            lag in -5.0f64..20.0,
            collect in 0.1f64..30.0,
            inf in 0.0f64..10.0,
            budget in 1.0f64..60.0,
        ) {
            let l = LatencyLedger::new(lag, collect, inf, budget);
            prop_assert_eq!(l.total_ms, lag + collect + inf);
            prop_assert_eq!(l.within_budget, l.total_ms <= budget);
        }
    }

    /// Windows anchored where the detector fires, matching what the replay
    /// hands the model.
    fn detected_training_set(
        traces: &[GraspTrace],
        cfg: &PipelineConfig,
        det: &ThresholdDetector,
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut windows = Vec::new();
        let mut shores = Vec::new();
        for tr in traces {
            let baseline = calibrate_baseline(&tr.vibration, cfg.calibration_samples).unwrap();
            let k = detect_threshold(&tr.vibration, &baseline, &cfg.window, det).unwrap().unwrap();
            let w =
                dsp::extract_window(&tr.vibration, k, WindowKind::Stiffness, &cfg.window).unwrap();
            windows.push(w.to_vec());
            shores.push(tr.label.shore_a);
        }
        (windows, shores)
    }

    #[test]
    fn clean_grasp_lands_in_budget_and_near_truth() {
        let syn = noiseless_cfg(30.0, 41);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let labels: Vec<StiffnessLabel> =
            [40.0, 50.0, 60.0, 70.0, 80.0].iter().map(|&s| StiffnessLabel::new(s).unwrap()).collect();
        let traces = make_dataset(&syn, &labels, 8, &mut rng).unwrap();
        let cfg = pipeline_cfg(syn.sample_rate_hz);
        let det = ThresholdDetector::three_sigma(&syn.adc);
        let (windows, shores) = detected_training_set(&traces, &cfg, &det);
        let model = train_svr(&windows, &shores, &SvrParams::default()).unwrap();

        let probe = synthesize_grasp(&syn, StiffnessLabel::new(60.0).unwrap(), &mut rng).unwrap();
        let report = run_grasp(&probe, &det, &model, &cfg, &NullClock).unwrap();

        assert!(report.detection.detected);
        let ledger = report.ledger.unwrap();
        assert!(ledger.within_budget, "ledger {ledger:?}");
        assert!((ledger.budget_ms - 30.0).abs() < 0.5, "budget {}", ledger.budget_ms);
        let predicted = report.predicted_shore.unwrap();
        assert!((predicted - 60.0).abs() <= 5.0, "predicted {predicted}");
    }

    #[test]
    fn two_millisecond_gap_cannot_fit_the_window() {
        let syn = noiseless_cfg(2.0, 42);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let probe = synthesize_grasp(&syn, StiffnessLabel::new(60.0).unwrap(), &mut rng).unwrap();
        assert!((probe.gap_ms() - 2.0).abs() < 0.3);

        let cfg = pipeline_cfg(syn.sample_rate_hz);
        let det = ThresholdDetector::three_sigma(&syn.adc);
        let report = run_grasp(&probe, &det, &constant_model(50.0), &cfg, &NullClock).unwrap();
        let ledger = report.ledger.unwrap();
        assert!(!ledger.within_budget);
        assert!(report.predicted_shore.is_some());
    }

    #[test]
    fn no_contact_means_no_prediction_and_no_ledger() {
        let offset = 1.65;
        let trace = GraspTrace {
            trace_id: 9,
            label: StiffnessLabel::new(50.0).unwrap(),
            sample_rate_hz: 4936.0,
            vibration: vec![offset; 2000],
            force: Default::default(),
            t_contact1: 0,
            t_contact2: 0,
        };
        let cfg = pipeline_cfg(4936.0);
        let det = ThresholdDetector::three_sigma(&crate::dsp::AdcSpec::default_10bit());
        let report = run_grasp(&trace, &det, &constant_model(50.0), &cfg, &NullClock).unwrap();
        assert!(!report.detection.detected);
        assert_eq!(report.predicted_shore, None);
        assert_eq!(report.ledger, None);
    }

    #[test]
    fn late_detection_still_predicts_but_blows_the_budget() {
        struct FixedIndex(usize);
        impl ContactDetector for FixedIndex {
            fn detect(
                &self,
                _samples: &[f64],
                _baseline: &BaselineStats,
                _spec: &WindowSpec,
            ) -> Result<Option<usize>, DetectError> {
                Ok(Some(self.0))
            }
        }

        let syn = noiseless_cfg(20.0, 43);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let probe = synthesize_grasp(&syn, StiffnessLabel::new(30.0).unwrap(), &mut rng).unwrap();
        let cfg = pipeline_cfg(syn.sample_rate_hz);
        let det = FixedIndex(probe.t_contact2 + 25);
        let report = run_grasp(&probe, &det, &constant_model(30.0), &cfg, &NullClock).unwrap();
        let ledger = report.ledger.unwrap();
        assert!(!ledger.within_budget);
        assert!(ledger.detect_lag_ms > ledger.budget_ms);
        assert!(report.predicted_shore.is_some());
    }

    #[test]
    fn truncation_after_the_window_changes_nothing() {
        let syn = noiseless_cfg(30.0, 44);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let probe = synthesize_grasp(&syn, StiffnessLabel::new(55.0).unwrap(), &mut rng).unwrap();
        let cfg = pipeline_cfg(syn.sample_rate_hz);
        let det = ThresholdDetector::three_sigma(&syn.adc);
        let model = constant_model(55.0);

        let full = run_grasp(&probe, &det, &model, &cfg, &NullClock).unwrap();
        let k = full.detection.detect_index.unwrap();

        let mut cut = probe.clone();
        cut.vibration.truncate(k + cfg.window.stiffness_samples() + 1);
        let short = run_grasp(&cut, &det, &model, &cfg, &NullClock).unwrap();

        assert_eq!(short.detection, full.detection);
        assert_eq!(short.predicted_shore, full.predicted_shore);
        assert_eq!(short.ledger, full.ledger);
    }

    #[test]
    fn budget_fraction_tracks_the_gap_tail() {
        let syn = SynthConfig { seed: 17, ..SynthConfig::default() };
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let labels = vec![StiffnessLabel::new(43.0).unwrap()];
        let traces = make_dataset(&syn, &labels, 1200, &mut rng).unwrap();
        let cfg = pipeline_cfg(syn.sample_rate_hz);
        let det = ThresholdDetector::three_sigma(&syn.adc);
        let corpus = run_corpus(&traces, &det, &constant_model(43.0), &cfg, &NullClock).unwrap();

        let gap = syn.gap_model();
        let mut expect = 0.0;
        let mut n = 0usize;
        for r in &corpus.reports {
            let l = r.ledger.expect("every clean trace detects");
            expect += gap.tail_prob(l.total_ms);
            n += 1;
        }
        expect /= n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        let diff = (corpus.within_budget_fraction - expect).abs();
        assert!(diff <= 3.0 * se, "fraction {} expected {expect} se {se}", corpus.within_budget_fraction);
    }

    #[test]
    fn corpus_runs_are_deterministic_without_a_real_clock() {
        let syn = SynthConfig { seed: 23, ..SynthConfig::default() };
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let labels = vec![StiffnessLabel::new(29.0).unwrap(), StiffnessLabel::new(60.0).unwrap()];
        let traces = make_dataset(&syn, &labels, 20, &mut rng).unwrap();
        let cfg = pipeline_cfg(syn.sample_rate_hz);
        let det = ThresholdDetector::three_sigma(&syn.adc);
        let model = constant_model(40.0);

        let a = run_corpus(&traces, &det, &model, &cfg, &NullClock).unwrap();
        let b = run_corpus(&traces, &det, &model, &cfg, &NullClock).unwrap();
        assert_eq!(a, b);
        let stats = a.inference.unwrap();
        assert_eq!(stats.mean_ms, 0.0);
        assert_eq!(stats.p99_ms, 0.0);
    }

    #[test]
    fn bench_drops_the_first_tenth_as_warmup() {
        let clock = StepClock::new(1.0);
        let window = vec![0.0; 74];
        let stats = bench_inference(&constant_model(10.0), &window, 20, &clock).unwrap();
        // trials read 0,1,...,19 ms; the first two are warm-up
        let kept: Vec<f64> = (2..20).map(|k| k as f64).collect();
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        assert!((stats.mean_ms - mean).abs() < 1e-12);
        assert_eq!(stats.p99_ms, 19.0);
    }

    #[test]
    fn bench_rejects_zero_trials() {
        let window = vec![0.0; 74];
        let err = bench_inference(&constant_model(10.0), &window, 0, &NullClock).unwrap_err();
        assert_eq!(err, PipelineError::ZeroTrials);
    }

    #[test]
    fn mismatched_model_window_is_rejected_up_front() {
        let trace = GraspTrace {
            trace_id: 1,
            label: StiffnessLabel::new(10.0).unwrap(),
            sample_rate_hz: 4936.0,
            vibration: vec![1.65; 1000],
            force: Default::default(),
            t_contact1: 0,
            t_contact2: 0,
        };
        let mut model = constant_model(10.0);
        model.n_features = 50;
        let cfg = pipeline_cfg(4936.0);
        let det = ThresholdDetector::three_sigma(&crate::dsp::AdcSpec::default_10bit());
        let err = run_grasp(&trace, &det, &model, &cfg, &NullClock).unwrap_err();
        assert!(matches!(err, PipelineError::Ml(MlError::FeatureMismatch { .. })));
    }
}
