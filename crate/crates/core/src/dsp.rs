//! Causal DSP primitives shared by synthesis, detection, and the pipeline.
//!
//! Everything here is sample-oriented and allocation-light. The streaming
//! types (`ExpSmoother`, `MovingAverage`) are the exact counterparts of the
//! batch functions; the batch form is defined as "feed the stream one sample
//! at a time", and tests hold the two to bit equality.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DspError {
    EmptyInput,
    /// Smoothing factor outside (0, 1].
    BadAlpha,
    ZeroWindow,
    WindowExceedsData { window: usize, len: usize },
    BadSampleRate,
    /// quantize() refuses NaN/inf instead of propagating it into codes.
    NonFiniteSample,
    BadSpec(&'static str),
    CodeOutOfRange { code: u16, max: u16 },
    WindowOutOfRange { index: usize, len: usize },
}

impl fmt::Display for DspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DspError::EmptyInput => write!(f, "empty input"),
            DspError::BadAlpha => write!(f, "smoothing factor must be in (0, 1]"),
            DspError::ZeroWindow => write!(f, "window length must be >= 1"),
            DspError::WindowExceedsData { window, len } => {
                write!(f, "window of {window} samples exceeds data length {len}")
            }
            DspError::BadSampleRate => write!(f, "sample rate must be positive and finite"),
            DspError::NonFiniteSample => write!(f, "non-finite sample"),
            DspError::BadSpec(s) => write!(f, "bad spec: {s}"),
            DspError::CodeOutOfRange { code, max } => {
                write!(f, "code {code} exceeds ADC max {max}")
            }
            DspError::WindowOutOfRange { index, len } => {
                write!(f, "window anchored at {index} out of range for {len} samples")
            }
        }
    }
}

impl core::error::Error for DspError {}

// ---------------------------------------------------------------------------
// ADC
// ---------------------------------------------------------------------------

/// Converter geometry: unsigned codes over [0, ref_v], idle point at offset_v.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdcSpec {
    pub bits: u32,
    pub ref_v: f64,
    /// Where the idle (zero-signal) level sits, e.g. mid-rail for a biased
    /// piezo front end. Not applied by quantize(); carried for consumers.
    pub offset_v: f64,
}

impl AdcSpec {
    pub fn new(bits: u32, ref_v: f64, offset_v: f64) -> Result<Self, DspError> {
        if !(1..=16).contains(&bits) {
            return Err(DspError::BadSpec("adc bits must be in 1..=16"));
        }
        if !(ref_v > 0.0) || !ref_v.is_finite() || !offset_v.is_finite() {
            return Err(DspError::BadSpec("adc reference must be positive and finite"));
        }
        Ok(AdcSpec { bits, ref_v, offset_v })
    }

    /// 10-bit, 3.3 V, mid-rail idle.
    pub fn default_10bit() -> Self {
        AdcSpec { bits: 10, ref_v: 3.3, offset_v: 1.65 }
    }

    pub fn max_code(&self) -> u16 {
        ((1u32 << self.bits) - 1) as u16
    }

    /// Volts per code step.
    pub fn lsb_v(&self) -> f64 {
        self.ref_v / self.max_code() as f64
    }
}

/// Volts to code: round half away from zero, saturate at the rails.
pub fn quantize(x_v: f64, adc: &AdcSpec) -> Result<u16, DspError> {
    if !x_v.is_finite() {
        return Err(DspError::NonFiniteSample);
    }
    let max = adc.max_code() as f64;
    let code = math::round(x_v / adc.ref_v * max);
    Ok(code.clamp(0.0, max) as u16)
}

/// Code back to volts. Codes above the converter's range are rejected.
pub fn dequantize(code: u16, adc: &AdcSpec) -> Result<f64, DspError> {
    let max = adc.max_code();
    if code > max {
        return Err(DspError::CodeOutOfRange { code, max });
    }
    Ok(code as f64 / max as f64 * adc.ref_v)
}

// ---------------------------------------------------------------------------
// Exponential smoothing
// ---------------------------------------------------------------------------

/// One-pole smoother y[n] = alpha*x[n] + (1-alpha)*y[n-1].
///
/// Unseeded, the first sample passes through unchanged (y[0] = x[0]).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSmoother {
    alpha: f64,
    state: Option<f64>,
}

impl ExpSmoother {
    pub fn new(alpha: f64) -> Result<Self, DspError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(DspError::BadAlpha);
        }
        Ok(ExpSmoother { alpha, state: None })
    }

    /// Start from a known output level instead of passing the first sample
    /// through. A smoother seeded at 0 fed a unit step yields 1 - (1-alpha)^(n+1).
    pub fn with_state(alpha: f64, y0: f64) -> Result<Self, DspError> {
        let mut s = Self::new(alpha)?;
        s.state = Some(y0);
        Ok(s)
    }

    pub fn push(&mut self, x: f64) -> f64 {
        let y = match self.state {
            None => x,
            Some(prev) => self.alpha * x + (1.0 - self.alpha) * prev,
        };
        self.state = Some(y);
        y
    }
}

/// Batch form of [`ExpSmoother`].
pub fn exp_smooth(xs: &[f64], alpha: f64) -> Result<Vec<f64>, DspError> {
    if xs.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let mut sm = ExpSmoother::new(alpha)?;
    Ok(xs.iter().map(|&x| sm.push(x)).collect())
}

// ---------------------------------------------------------------------------
// Moving average
// ---------------------------------------------------------------------------

/// Causal mean over the last `window_len` samples; shorter prefixes average
/// whatever has arrived so far (no lookahead, no padding).
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window_len: usize,
    buf: Vec<f64>,
    next: usize,
    filled: usize,
    sum: f64,
}

impl MovingAverage {
    pub fn new(window_len: usize) -> Result<Self, DspError> {
        if window_len == 0 {
            return Err(DspError::ZeroWindow);
        }
        Ok(MovingAverage {
            window_len,
            buf: vec![0.0; window_len],
            next: 0,
            filled: 0,
            sum: 0.0,
        })
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.filled == self.window_len {
            self.sum -= self.buf[self.next];
        } else {
            self.filled += 1;
        }
        self.buf[self.next] = x;
        self.next = (self.next + 1) % self.window_len;
        self.sum += x;
        self.sum / self.filled as f64
    }
}

/// Batch form of [`MovingAverage`].
pub fn moving_average(xs: &[f64], window_len: usize) -> Result<Vec<f64>, DspError> {
    if xs.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let mut ma = MovingAverage::new(window_len)?;
    Ok(xs.iter().map(|&x| ma.push(x)).collect())
}

// ---------------------------------------------------------------------------
// Savitzky-Golay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SavGolSpec {
    pub window_len: usize,
    pub poly_order: usize,
}

impl SavGolSpec {
    pub fn new(window_len: usize, poly_order: usize) -> Result<Self, DspError> {
        if window_len < 3 || window_len % 2 == 0 {
            return Err(DspError::BadSpec("savgol window must be odd and >= 3"));
        }
        if poly_order >= window_len {
            return Err(DspError::BadSpec("savgol order must be < window length"));
        }
        Ok(SavGolSpec { window_len, poly_order })
    }

    /// Window 11, cubic: the offline smoothing used on force traces.
    pub fn default_force() -> Self {
        SavGolSpec { window_len: 11, poly_order: 3 }
    }
}

/// Weights w such that w . x equals the least-squares polynomial of
/// `poly_order` fitted to x (abscissae 0..window_len) evaluated at `eval_at`.
fn fit_eval_weights(window_len: usize, poly_order: usize, eval_at: f64) -> Vec<f64> {
    let p = poly_order + 1;
    // Normal equations G c = A^T x with A[j][k] = j^k. The evaluation
    // y(eval) = t . c = t . G^-1 A^T x, so the weight row is (G^-1 t) A.
    let mut g = vec![0.0f64; p * p];
    for j in 0..window_len {
        let d = j as f64;
        for a in 0..p {
            for b in 0..p {
                g[a * p + b] += math::pow(d, (a + b) as f64);
            }
        }
    }
    let mut t = vec![0.0f64; p];
    for (a, slot) in t.iter_mut().enumerate() {
        *slot = math::pow(eval_at, a as f64);
    }
    let gt = solve_sym(&mut g, &mut t, p);
    let mut w = vec![0.0f64; window_len];
    for (j, slot) in w.iter_mut().enumerate() {
        let d = j as f64;
        let mut acc = 0.0;
        for (a, &c) in gt.iter().enumerate() {
            acc += c * math::pow(d, a as f64);
        }
        *slot = acc;
    }
    w
}

/// Gaussian elimination with partial pivoting; g is n*n row-major, b length n.
/// Sized for savgol normal equations (n <= ~8), not general use.
fn solve_sym(g: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if math::fabs(g[r * n + col]) > math::fabs(g[piv * n + col]) {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..n {
                g.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = g[col * n + col];
        for r in col + 1..n {
            let f = g[r * n + col] / d;
            for c in col..n {
                g[r * n + c] -= f * g[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for c in col + 1..n {
            acc -= g[col * n + c] * x[c];
        }
        x[col] = acc / g[col * n + col];
    }
    x
}

/// Offline Savitzky-Golay smoothing.
///
/// Interior samples get the usual symmetric convolution. The half-window at
/// each boundary is evaluated from the least-squares fit over the first/last
/// full window, which keeps polynomials up to `poly_order` exact end to end.
pub fn savgol(xs: &[f64], spec: &SavGolSpec) -> Result<Vec<f64>, DspError> {
    SavGolSpec::new(spec.window_len, spec.poly_order)?;
    if xs.is_empty() {
        return Err(DspError::EmptyInput);
    }
    if spec.window_len > xs.len() {
        return Err(DspError::WindowExceedsData { window: spec.window_len, len: xs.len() });
    }
    let w = spec.window_len;
    let half = w / 2;
    let n = xs.len();
    let mut out = vec![0.0f64; n];

    let center = fit_eval_weights(w, spec.poly_order, half as f64);
    for i in half..n - half {
        let seg = &xs[i - half..i + half + 1];
        out[i] = dot(&center, seg);
    }
    for i in 0..half {
        let wl = fit_eval_weights(w, spec.poly_order, i as f64);
        out[i] = dot(&wl, &xs[..w]);
        let wr = fit_eval_weights(w, spec.poly_order, (w - 1 - i) as f64);
        out[n - 1 - i] = dot(&wr, &xs[n - w..]);
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Analysis windows
// ---------------------------------------------------------------------------

/// Window geometry in milliseconds plus the sample rate that grounds it.
///
/// Detection looks at `detect_history_ms` of context plus `detect_new_ms` of
/// fresh samples; stiffness estimation consumes `stiffness_ms` from contact.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowSpec {
    pub detect_history_ms: f64,
    pub detect_new_ms: f64,
    pub stiffness_ms: f64,
    pub sample_rate_hz: f64,
}

impl WindowSpec {
    pub fn new(
        detect_history_ms: f64,
        detect_new_ms: f64,
        stiffness_ms: f64,
        sample_rate_hz: f64,
    ) -> Result<Self, DspError> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(DspError::BadSampleRate);
        }
        if detect_history_ms < 0.0 || detect_new_ms <= 0.0 || stiffness_ms <= 0.0 {
            return Err(DspError::BadSpec("window durations must be positive"));
        }
        Ok(WindowSpec { detect_history_ms, detect_new_ms, stiffness_ms, sample_rate_hz })
    }

    /// 17 ms history + 3 ms new, 15 ms stiffness.
    pub fn default_at(sample_rate_hz: f64) -> Result<Self, DspError> {
        Self::new(17.0, 3.0, 15.0, sample_rate_hz)
    }

    fn count(&self, ms: f64) -> usize {
        (math::round(ms * self.sample_rate_hz / 1000.0) as usize).max(1)
    }

    pub fn detect_history_samples(&self) -> usize {
        self.count(self.detect_history_ms)
    }

    pub fn detect_new_samples(&self) -> usize {
        self.count(self.detect_new_ms)
    }

    pub fn detect_total_samples(&self) -> usize {
        self.detect_history_samples() + self.detect_new_samples()
    }

    pub fn stiffness_samples(&self) -> usize {
        self.count(self.stiffness_ms)
    }

    pub fn ms_per_sample(&self) -> f64 {
        1000.0 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// History+new samples ending at the anchor index (inclusive).
    Detect,
    /// Stiffness samples beginning at the anchor index.
    Stiffness,
}

/// Borrow an analysis window out of a trace.
pub fn extract_window<'a>(
    xs: &'a [f64],
    anchor: usize,
    kind: WindowKind,
    spec: &WindowSpec,
) -> Result<&'a [f64], DspError> {
    match kind {
        WindowKind::Detect => {
            let total = spec.detect_total_samples();
            if anchor >= xs.len() || anchor + 1 < total {
                return Err(DspError::WindowOutOfRange { index: anchor, len: xs.len() });
            }
            Ok(&xs[anchor + 1 - total..anchor + 1])
        }
        WindowKind::Stiffness => {
            let total = spec.stiffness_samples();
            if anchor >= xs.len() || anchor + total > xs.len() {
                return Err(DspError::WindowOutOfRange { index: anchor, len: xs.len() });
            }
            Ok(&xs[anchor..anchor + total])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn adc() -> AdcSpec {
        AdcSpec::default_10bit()
    }

    #[test]
    fn quantize_midrail_rounds_up() {
        // 1.65/3.3 * 1023 = 511.5, ties away from zero
        assert_eq!(quantize(1.65, &adc()).unwrap(), 512);
    }

    #[test]
    fn quantize_rails() {
        assert_eq!(quantize(0.0, &adc()).unwrap(), 0);
        assert_eq!(quantize(3.3, &adc()).unwrap(), 1023);
        assert_eq!(quantize(-0.7, &adc()).unwrap(), 0);
        assert_eq!(quantize(12.0, &adc()).unwrap(), 1023);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        assert_eq!(quantize(f64::NAN, &adc()), Err(DspError::NonFiniteSample));
        assert_eq!(quantize(f64::INFINITY, &adc()), Err(DspError::NonFiniteSample));
    }

    #[test]
    fn code_round_trip_exhaustive() {
        let a = adc();
        for code in 0..=a.max_code() {
            let v = dequantize(code, &a).unwrap();
            assert_eq!(quantize(v, &a).unwrap(), code, "code {code}");
        }
        assert!(dequantize(1024, &a).is_err());
    }

    #[test]
    fn exp_smooth_worked_example() {
        let y = exp_smooth(&[0.0, 1.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 0.75, 0.875]);
    }

    #[test]
    fn exp_smooth_step_closed_form_exact() {
        // Seeded at 0 and fed ones, y[n] = 1 - 0.5^(n+1) exactly: every
        // intermediate is a dyadic rational well inside the mantissa.
        let mut sm = ExpSmoother::with_state(0.5, 0.0).unwrap();
        for n in 0..=52u32 {
            let y = sm.push(1.0);
            assert_eq!(y, 1.0 - math::pow(0.5, (n + 1) as f64), "n={n}");
        }
    }

    #[test]
    fn exp_smooth_alpha_validation() {
        assert!(exp_smooth(&[1.0], 0.0).is_err());
        assert!(exp_smooth(&[1.0], 1.1).is_err());
        assert!(exp_smooth(&[], 0.5).is_err());
        // alpha = 1 passes input through
        assert_eq!(exp_smooth(&[3.0, -1.0], 1.0).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn moving_average_worked_example() {
        let y = moving_average(&[0.0, 0.0, 2.0, 2.0], 2).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn moving_average_window_one_is_identity() {
        let xs = [4.0, -2.0, 0.5];
        assert_eq!(moving_average(&xs, 1).unwrap(), xs.to_vec());
        assert!(moving_average(&xs, 0).is_err());
    }

    fn poly(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    #[test]
    fn savgol_exact_on_cubic_everywhere() {
        let spec = SavGolSpec::default_force();
        let coef = [0.7, -1.3, 0.02, 0.004];
        let xs: Vec<f64> = (0..80).map(|i| poly(&coef, i as f64)).collect();
        let ys = savgol(&xs, &spec).unwrap();
        for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
            assert!(math::fabs(x - y) < 1e-9, "i={i} diff={}", x - y);
        }
    }

    #[test]
    fn savgol_exact_on_quadratic() {
        let spec = SavGolSpec::new(7, 2).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| poly(&[2.0, 0.5, -0.1], i as f64)).collect();
        let ys = savgol(&xs, &spec).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!(math::fabs(x - y) < 1e-9);
        }
    }

    #[test]
    fn savgol_is_linear() {
        let spec = SavGolSpec::default_force();
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            // xorshift, plenty for test fixtures
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let xs: Vec<f64> = (0..60).map(|_| next()).collect();
        let ys: Vec<f64> = (0..60).map(|_| next()).collect();
        let (a, b) = (1.7, -0.4);
        let combo: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
        let lhs = savgol(&combo, &spec).unwrap();
        let fx = savgol(&xs, &spec).unwrap();
        let fy = savgol(&ys, &spec).unwrap();
        for i in 0..60 {
            assert!(math::fabs(lhs[i] - (a * fx[i] + b * fy[i])) < 1e-9);
        }
    }

    #[test]
    fn savgol_shrinks_white_noise() {
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let xs: Vec<f64> = (0..10_000).map(|_| next()).collect();
        let ys = savgol(&xs, &SavGolSpec::default_force()).unwrap();
        assert!(math::std_dev(&ys) < math::std_dev(&xs));
    }

    #[test]
    fn savgol_spec_validation() {
        assert!(SavGolSpec::new(4, 2).is_err());
        assert!(SavGolSpec::new(5, 5).is_err());
        let xs = [1.0; 5];
        assert!(savgol(&xs, &SavGolSpec::default_force()).is_err()); // window 11 > 5 samples
    }

    #[test]
    fn window_counts_at_default_rate() {
        let w = WindowSpec::default_at(4936.0).unwrap();
        assert_eq!(w.detect_history_samples(), 84);
        assert_eq!(w.detect_new_samples(), 15);
        assert_eq!(w.detect_total_samples(), 99);
        assert_eq!(w.stiffness_samples(), 74);
    }

    #[test]
    fn window_counts_floor_at_one() {
        let w = WindowSpec::new(17.0, 3.0, 15.0, 20.0).unwrap();
        assert_eq!(w.detect_new_samples(), 1); // round(0.06) floored
        assert!(w.stiffness_samples() >= 1);
        assert!(WindowSpec::new(17.0, 3.0, 15.0, 0.0).is_err());
        assert!(WindowSpec::new(17.0, 3.0, 15.0, -5.0).is_err());
    }

    #[test]
    fn extract_window_bounds() {
        let w = WindowSpec::default_at(4936.0).unwrap();
        let xs: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let d = extract_window(&xs, 98, WindowKind::Detect, &w).unwrap();
        assert_eq!(d.len(), 99);
        assert_eq!((d[0], d[98]), (0.0, 98.0));
        assert!(extract_window(&xs, 97, WindowKind::Detect, &w).is_err());
        let s = extract_window(&xs, 200, WindowKind::Stiffness, &w).unwrap();
        assert_eq!(s.len(), 74);
        assert_eq!((s[0], s[73]), (200.0, 273.0));
        assert!(extract_window(&xs, 227, WindowKind::Stiffness, &w).is_err());
        assert!(extract_window(&xs, 300, WindowKind::Stiffness, &w).is_err());
    }

    proptest! {
        #[test]
        fn quantize_dequantize_idempotent(x in -1.0f64..5.0) {
            let a = adc();
            let c = quantize(x, &a).unwrap();
            let v = dequantize(c, &a).unwrap();
            prop_assert_eq!(quantize(v, &a).unwrap(), c);
        }

        #[test]
        fn quantize_monotone(x in 0.0f64..3.3, y in 0.0f64..3.3) {
            let a = adc();
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(quantize(lo, &a).unwrap() <= quantize(hi, &a).unwrap());
        }

        #[test]
        fn smoothers_are_causal(xs in proptest::collection::vec(-5.0f64..5.0, 2..60),
                                cut in 1usize..59) {
            // Output over a prefix equals the prefix of the output: no sample
            // after the cut can influence anything before it.
            prop_assume!(cut < xs.len());
            let full_e = exp_smooth(&xs, 0.5).unwrap();
            let pre_e = exp_smooth(&xs[..cut], 0.5).unwrap();
            prop_assert_eq!(&full_e[..cut], &pre_e[..]);
            let full_m = moving_average(&xs, 25).unwrap();
            let pre_m = moving_average(&xs[..cut], 25).unwrap();
            prop_assert_eq!(&full_m[..cut], &pre_m[..]);
        }

        #[test]
        fn moving_average_stream_matches_batch(
            xs in proptest::collection::vec(-100.0f64..100.0, 1..120),
            w in 1usize..30,
        ) {
            let batch = moving_average(&xs, w).unwrap();
            let mut ma = MovingAverage::new(w).unwrap();
            let streamed: Vec<f64> = xs.iter().map(|&x| ma.push(x)).collect();
            prop_assert_eq!(batch, streamed);
        }
    }
}
