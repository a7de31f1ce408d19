//! Compact 1-D convolutional network with hand-rolled backprop.
//!
//! Architecture: repeated (conv1d / relu / max-pool) blocks, one dense relu
//! layer, then a softmax-logit or scalar head. Parameters live in one flat
//! vector; `Layout` maps segments to offsets so forward and backward walk the
//! same memory.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::math;
use crate::ml::MlError;

/// Desk-scale ceiling on trainable parameters.
pub const PARAM_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvBlockSpec {
    pub channels: usize,
    pub kernel_len: usize,
    pub stride: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HeadKind {
    Softmax { classes: usize },
    Scalar,
}

impl HeadKind {
    pub fn out_len(&self) -> usize {
        match self {
            HeadKind::Softmax { classes } => *classes,
            HeadKind::Scalar => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvSpec {
    pub input_len: usize,
    pub blocks: Vec<ConvBlockSpec>,
    pub dense_units: usize,
    pub head: HeadKind,
}

/// Stiffness duty: 74-sample window through two conv blocks and a small
/// dense layer. About 8.6k parameters with the five-class head.
pub fn stiffness_spec(head: HeadKind) -> ConvSpec {
    ConvSpec {
        input_len: 74,
        blocks: vec![
            ConvBlockSpec { channels: 8, kernel_len: 7, stride: 1, pool: 2 },
            ConvBlockSpec { channels: 16, kernel_len: 5, stride: 1, pool: 2 },
        ],
        dense_units: 32,
        head,
    }
}

/// Miniature instance for finite-difference verification (73 parameters).
pub fn micro_spec() -> ConvSpec {
    ConvSpec {
        input_len: 16,
        blocks: vec![ConvBlockSpec { channels: 2, kernel_len: 3, stride: 1, pool: 2 }],
        dense_units: 4,
        head: HeadKind::Scalar,
    }
}

#[derive(Debug, Clone, Copy)]
struct BlockShape {
    in_ch: usize,
    in_len: usize,
    out_ch: usize,
    conv_len: usize,
    pool_len: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    blocks: Vec<BlockShape>,
    flat_len: usize,
    dense_w: usize,
    dense_b: usize,
    head_w: usize,
    head_b: usize,
    head_out: usize,
    total: usize,
}

impl ConvSpec {
    fn layout(&self) -> Result<Layout, MlError> {
        if self.input_len == 0 {
            return Err(MlError::BadParam("input length must be positive"));
        }
        if self.dense_units == 0 {
            return Err(MlError::BadParam("dense layer needs at least one unit"));
        }
        if let HeadKind::Softmax { classes } = self.head {
            if classes < 2 {
                return Err(MlError::BadParam("softmax head needs at least two classes"));
            }
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut in_ch = 1usize;
        let mut in_len = self.input_len;
        let mut off = 0usize;
        for b in &self.blocks {
            if b.channels == 0 || b.kernel_len == 0 || b.stride == 0 || b.pool == 0 {
                return Err(MlError::BadParam("block dimensions must be positive"));
            }
            if b.kernel_len > in_len {
                return Err(MlError::BadParam("kernel longer than its input"));
            }
            let conv_len = (in_len - b.kernel_len) / b.stride + 1;
            let pool_len = conv_len / b.pool;
            if pool_len == 0 {
                return Err(MlError::BadParam("pool wider than the conv output"));
            }
            let w_off = off;
            off += b.channels * in_ch * b.kernel_len;
            let b_off = off;
            off += b.channels;
            blocks.push(BlockShape {
                in_ch,
                in_len,
                out_ch: b.channels,
                conv_len,
                pool_len,
                w_off,
                b_off,
            });
            in_ch = b.channels;
            in_len = pool_len;
        }
        let flat_len = in_ch * in_len;
        let dense_w = off;
        off += self.dense_units * flat_len;
        let dense_b = off;
        off += self.dense_units;
        let head_out = self.head.out_len();
        let head_w = off;
        off += head_out * self.dense_units;
        let head_b = off;
        off += head_out;
        if off > PARAM_BUDGET {
            return Err(MlError::BadParam("parameter count exceeds the budget"));
        }
        Ok(Layout {
            blocks,
            flat_len,
            dense_w,
            dense_b,
            head_w,
            head_b,
            head_out,
            total: off,
        })
    }

    pub fn validate(&self) -> Result<(), MlError> {
        self.layout().map(|_| ())
    }

    pub fn param_count(&self) -> Result<usize, MlError> {
        self.layout().map(|l| l.total)
    }

    pub fn output_len(&self) -> usize {
        self.head.out_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvModel {
    pub spec: ConvSpec,
    pub params: Vec<f64>,
}

/// Activations recorded by a forward pass, enough to run backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    block_in: Vec<Vec<f64>>,
    conv_pre: Vec<Vec<f64>>,
    pool_src: Vec<Vec<usize>>,
    flat: Vec<f64>,
    dense_pre: Vec<f64>,
    dense_out: Vec<f64>,
    pub output: Vec<f64>,
}

/// Seeded He-style initialization, zero biases.
pub fn build_conv_model(spec: &ConvSpec, seed: u64) -> Result<ConvModel, MlError> {
    let layout = spec.layout()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut params = vec![0.0f64; layout.total];
    for (bs, b) in layout.blocks.iter().zip(&spec.blocks) {
        let fan_in = (bs.in_ch * b.kernel_len) as f64;
        let dist = Normal::new(0.0, math::sqrt(2.0 / fan_in)).unwrap();
        for w in &mut params[bs.w_off..bs.b_off] {
            *w = dist.sample(&mut rng);
        }
    }
    let dense_dist = Normal::new(0.0, math::sqrt(2.0 / layout.flat_len as f64)).unwrap();
    for w in &mut params[layout.dense_w..layout.dense_b] {
        *w = dense_dist.sample(&mut rng);
    }
    let head_dist = Normal::new(0.0, math::sqrt(1.0 / spec.dense_units as f64)).unwrap();
    for w in &mut params[layout.head_w..layout.head_b] {
        *w = head_dist.sample(&mut rng);
    }
    Ok(ConvModel { spec: spec.clone(), params })
}

impl ConvModel {
    pub fn validate(&self) -> Result<(), MlError> {
        let layout = self.spec.layout()?;
        if self.params.len() != layout.total {
            return Err(MlError::LengthMismatch {
                left: self.params.len(),
                right: layout.total,
            });
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(MlError::NonFinite);
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Forward pass keeping the intermediates needed by `backward`.
    pub fn forward_cached(&self, window: &[f64]) -> Result<ForwardCache, MlError> {
        let layout = self.spec.layout()?;
        if window.len() != self.spec.input_len {
            return Err(MlError::FeatureMismatch {
                expected: self.spec.input_len,
                got: window.len(),
            });
        }
        let p = &self.params;
        let mut block_in = Vec::with_capacity(layout.blocks.len());
        let mut conv_pre = Vec::with_capacity(layout.blocks.len());
        let mut pool_src = Vec::with_capacity(layout.blocks.len());
        let mut cur: Vec<f64> = window.to_vec();
        for (bs, b) in layout.blocks.iter().zip(&self.spec.blocks) {
            let mut pre = vec![0.0f64; bs.out_ch * bs.conv_len];
            for oc in 0..bs.out_ch {
                let bias = p[bs.b_off + oc];
                for i in 0..bs.conv_len {
                    let mut acc = bias;
                    let start = i * b.stride;
                    for ic in 0..bs.in_ch {
                        let w0 = bs.w_off + (oc * bs.in_ch + ic) * b.kernel_len;
                        let x0 = ic * bs.in_len + start;
                        for k in 0..b.kernel_len {
                            acc += p[w0 + k] * cur[x0 + k];
                        }
                    }
                    pre[oc * bs.conv_len + i] = acc;
                }
            }
            // relu then non-overlapping max-pool, remembering the winner
            let mut pooled = vec![0.0f64; bs.out_ch * bs.pool_len];
            let mut src = vec![0usize; bs.out_ch * bs.pool_len];
            for oc in 0..bs.out_ch {
                for j in 0..bs.pool_len {
                    let base = oc * bs.conv_len + j * b.pool;
                    let mut best = base;
                    for t in 1..b.pool {
                        if pre[base + t] > pre[best] {
                            best = base + t;
                        }
                    }
                    let v = pre[best];
                    pooled[oc * bs.pool_len + j] = if v > 0.0 { v } else { 0.0 };
                    src[oc * bs.pool_len + j] = best;
                }
            }
            block_in.push(cur);
            conv_pre.push(pre);
            pool_src.push(src);
            cur = pooled;
        }
        let flat = cur;
        let mut dense_pre = vec![0.0f64; self.spec.dense_units];
        for (u, d) in dense_pre.iter_mut().enumerate() {
            let mut acc = p[layout.dense_b + u];
            let w0 = layout.dense_w + u * layout.flat_len;
            for (f, x) in flat.iter().enumerate() {
                acc += p[w0 + f] * x;
            }
            *d = acc;
        }
        let dense_out: Vec<f64> = dense_pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let mut output = vec![0.0f64; layout.head_out];
        for (o, out) in output.iter_mut().enumerate() {
            let mut acc = p[layout.head_b + o];
            let w0 = layout.head_w + o * self.spec.dense_units;
            for (u, h) in dense_out.iter().enumerate() {
                acc += p[w0 + u] * h;
            }
            *out = acc;
        }
        Ok(ForwardCache { block_in, conv_pre, pool_src, flat, dense_pre, dense_out, output })
    }

    /// Head output: logits for a softmax head, a single raw value otherwise.
    pub fn forward(&self, window: &[f64]) -> Result<Vec<f64>, MlError> {
        self.forward_cached(window).map(|c| c.output)
    }

    /// Gradient of a scalar objective with respect to every parameter, given
    /// its gradient `d_out` with respect to the head output.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Result<Vec<f64>, MlError> {
        let layout = self.spec.layout()?;
        if d_out.len() != layout.head_out {
            return Err(MlError::LengthMismatch { left: d_out.len(), right: layout.head_out });
        }
        let p = &self.params;
        let mut grad = vec![0.0f64; layout.total];

        let mut d_dense_out = vec![0.0f64; self.spec.dense_units];
        for (o, &g) in d_out.iter().enumerate() {
            grad[layout.head_b + o] += g;
            let w0 = layout.head_w + o * self.spec.dense_units;
            for u in 0..self.spec.dense_units {
                grad[w0 + u] += g * cache.dense_out[u];
                d_dense_out[u] += g * p[w0 + u];
            }
        }
        let mut d_flat = vec![0.0f64; layout.flat_len];
        for u in 0..self.spec.dense_units {
            let g = if cache.dense_pre[u] > 0.0 { d_dense_out[u] } else { 0.0 };
            if g == 0.0 {
                continue;
            }
            grad[layout.dense_b + u] += g;
            let w0 = layout.dense_w + u * layout.flat_len;
            for (f, x) in cache.flat.iter().enumerate() {
                grad[w0 + f] += g * x;
                d_flat[f] += g * p[w0 + f];
            }
        }

        let mut d_cur = d_flat;
        for (bi, (bs, b)) in layout.blocks.iter().zip(&self.spec.blocks).enumerate().rev() {
            let pre = &cache.conv_pre[bi];
            let src = &cache.pool_src[bi];
            let input = &cache.block_in[bi];
            // undo pool and relu: route each pooled gradient to its winner
            let mut d_pre = vec![0.0f64; bs.out_ch * bs.conv_len];
            for (slot, &g) in d_cur.iter().enumerate() {
                let s = src[slot];
                if pre[s] > 0.0 {
                    d_pre[s] += g;
                }
            }
            let mut d_in = vec![0.0f64; bs.in_ch * bs.in_len];
            for oc in 0..bs.out_ch {
                for i in 0..bs.conv_len {
                    let g = d_pre[oc * bs.conv_len + i];
                    if g == 0.0 {
                        continue;
                    }
                    grad[bs.b_off + oc] += g;
                    let start = i * b.stride;
                    for ic in 0..bs.in_ch {
                        let w0 = bs.w_off + (oc * bs.in_ch + ic) * b.kernel_len;
                        let x0 = ic * bs.in_len + start;
                        for k in 0..b.kernel_len {
                            grad[w0 + k] += g * input[x0 + k];
                            d_in[x0 + k] += g * p[w0 + k];
                        }
                    }
                }
            }
            d_cur = d_in;
        }
        Ok(grad)
    }

    /// Class index by highest logit, ties to the lowest index.
    pub fn predict_class(&self, window: &[f64]) -> Result<usize, MlError> {
        match self.spec.head {
            HeadKind::Softmax { .. } => {}
            HeadKind::Scalar => return Err(MlError::HeadMismatch),
        }
        let out = self.forward(window)?;
        let mut best = 0usize;
        for (i, &v) in out.iter().enumerate().skip(1) {
            if v > out[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Scalar head read out in shore units: 100x the raw output, clamped.
    pub fn predict_shore(&self, window: &[f64]) -> Result<f64, MlError> {
        match self.spec.head {
            HeadKind::Scalar => {}
            HeadKind::Softmax { .. } => return Err(MlError::HeadMismatch),
        }
        let out = self.forward(window)?;
        Ok((out[0] * 100.0).clamp(0.0, 100.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::RngExt as _;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn default_specs_fit_the_parameter_budget() {
        let cls = stiffness_spec(HeadKind::Softmax { classes: 5 });
        assert_eq!(cls.param_count().unwrap(), 8597);
        let reg = stiffness_spec(HeadKind::Scalar);
        assert_eq!(reg.param_count().unwrap(), 8465);
        assert_eq!(micro_spec().param_count().unwrap(), 73);
    }

    #[test]
    fn zero_weights_scalar_head_outputs_zero() {
        let spec = stiffness_spec(HeadKind::Scalar);
        let model =
            ConvModel { params: vec![0.0; spec.param_count().unwrap()], spec };
        let window: Vec<f64> = (0..74).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
        let out = model.forward(&window).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn delta_kernel_and_identity_dense_reduce_to_a_dot_product() {
        let n = 8;
        let spec = ConvSpec {
            input_len: n,
            blocks: vec![ConvBlockSpec { channels: 1, kernel_len: 1, stride: 1, pool: 1 }],
            dense_units: n,
            head: HeadKind::Scalar,
        };
        let mut model = build_conv_model(&spec, 0).unwrap();
        for p in &mut model.params {
            *p = 0.0;
        }
        // conv: single delta tap; dense: identity matrix; head: probe weights
        model.params[0] = 1.0;
        let dense_w = 2;
        for u in 0..n {
            model.params[dense_w + u * n + u] = 1.0;
        }
        let head_w = dense_w + n * n + n;
        let probe: Vec<f64> = (0..n).map(|i| 0.3 - 0.1 * i as f64).collect();
        model.params[head_w..head_w + n].copy_from_slice(&probe);
        let window: Vec<f64> = (0..n).map(|i| 0.5 + 0.2 * i as f64).collect();
        let expect: f64 = probe.iter().zip(&window).map(|(a, b)| a * b).sum();
        let out = model.forward(&window).unwrap();
        assert!((out[0] - expect).abs() < 1e-12, "{} vs {expect}", out[0]);
    }

    #[test]
    fn micro_net_gradients_match_finite_differences() {
        for seed in 0..10u64 {
            let model = build_conv_model(&micro_spec(), 100 + seed).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let window: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..3.3)).collect();
            let cache = model.forward_cached(&window).unwrap();
            let analytic = model.backward(&cache, &[1.0]).unwrap();
            let numeric = oracle::numeric_gradient(
                |theta| {
                    let m = ConvModel { spec: model.spec.clone(), params: theta.to_vec() };
                    m.forward(&window).unwrap()[0]
                },
                &model.params,
                1e-5,
            );
            let mut worst = 0.0f64;
            for (a, n) in analytic.iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-4, "seed {seed} worst relative error {worst}");
        }
    }

    #[test]
    fn strided_block_gradients_also_check_out() {
        let spec = ConvSpec {
            input_len: 17,
            blocks: vec![ConvBlockSpec { channels: 3, kernel_len: 4, stride: 2, pool: 2 }],
            dense_units: 3,
            head: HeadKind::Scalar,
        };
        // (17 - 4) / 2 + 1 = 7 conv samples, pooled to 3
        let model = build_conv_model(&spec, 9).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let window: Vec<f64> = (0..17).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = model.forward_cached(&window).unwrap();
        let analytic = model.backward(&cache, &[1.0]).unwrap();
        let numeric = oracle::numeric_gradient(
            |theta| {
                let m = ConvModel { spec: spec.clone(), params: theta.to_vec() };
                m.forward(&window).unwrap()[0]
            },
            &model.params,
            1e-5,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel < 1e-4, "{a} vs {n}");
        }
    }

    #[test]
    fn outputs_stay_finite_on_the_adc_range() {
        let spec = stiffness_spec(HeadKind::Softmax { classes: 5 });
        let model = build_conv_model(&spec, 7).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut window = vec![0.0f64; 74];
        for _ in 0..100_000 {
            for w in &mut window {
                *w = rng.random_range(0.0..=3.3);
            }
            let out = model.forward(&window).unwrap();
            assert!(out.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn build_is_seed_deterministic() {
        let spec = micro_spec();
        let a = build_conv_model(&spec, 4).unwrap();
        let b = build_conv_model(&spec, 4).unwrap();
        let c = build_conv_model(&spec, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut s = micro_spec();
        s.blocks[0].kernel_len = 40;
        assert!(s.validate().is_err());
        let mut s = micro_spec();
        s.blocks[0].pool = 0;
        assert!(s.validate().is_err());
        let mut s = micro_spec();
        s.blocks[0].pool = 50;
        assert!(s.validate().is_err());
        let mut s = micro_spec();
        s.dense_units = 0;
        assert!(s.validate().is_err());
        let mut s = stiffness_spec(HeadKind::Scalar);
        s.dense_units = 10_000;
        assert!(s.validate().is_err(), "budget must bind");
        let s = micro_spec();
        let model = build_conv_model(&s, 0).unwrap();
        assert!(matches!(
            model.forward(&vec![0.0; 5]),
            Err(MlError::FeatureMismatch { .. })
        ));
        let wrong_head = build_conv_model(&s, 0).unwrap();
        assert!(matches!(wrong_head.predict_class(&vec![0.0; 16]), Err(MlError::HeadMismatch)));
    }
}
