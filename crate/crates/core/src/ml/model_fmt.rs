//! Plain-text model files.
//!
//! Line-oriented, whitespace-separated, one leading magic line carrying the
//! format version. Reals are printed with 17 significant digits so parsing
//! returns bit-identical values. Layout:
//!
//! ```text
//! stiffsense-model v1
//! kind kernel-classifier        (or kernel-regressor, conv)
//! ...sections fixed per kind...
//! end
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::ml::conv::{ConvBlockSpec, ConvModel, ConvSpec, HeadKind};
use crate::ml::kernel::{KernelKind, KernelModel, PairModel};
use crate::ml::{MlError, Preprocess};

pub const MAGIC: &str = "stiffsense-model v1";
const REALS_PER_LINE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Kernel(KernelModel),
    Conv(ConvModel),
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

fn push_real(out: &mut String, v: f64) {
    let _ = write!(out, " {v:.16e}");
}

fn push_reals_block(out: &mut String, tag: &str, values: &[f64]) {
    for chunk in values.chunks(REALS_PER_LINE) {
        out.push_str(tag);
        for &v in chunk {
            push_real(out, v);
        }
        out.push('\n');
    }
}

fn push_preprocess(out: &mut String, p: &Preprocess) {
    match p {
        Preprocess::External => out.push_str("preprocess external\n"),
        Preprocess::WindowMeanSigma { sigma_v } => {
            out.push_str("preprocess mean-sigma");
            push_real(out, *sigma_v);
            out.push('\n');
        }
    }
}

pub fn write_kernel_model(model: &KernelModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    match model.kind {
        KernelKind::Classifier => out.push_str("kind kernel-classifier\n"),
        KernelKind::Regressor => out.push_str("kind kernel-regressor\n"),
    }
    let _ = writeln!(out, "features {}", model.n_features);
    out.push_str("gamma");
    push_real(&mut out, model.gamma);
    out.push('\n');
    out.push_str("c");
    push_real(&mut out, model.c_penalty);
    out.push('\n');
    push_preprocess(&mut out, &model.preprocess);
    let _ = writeln!(out, "support-vectors {}", model.support_vectors.len());
    for sv in &model.support_vectors {
        out.push_str("sv");
        for &v in sv {
            push_real(&mut out, v);
        }
        out.push('\n');
    }
    match model.kind {
        KernelKind::Regressor => {
            out.push_str("epsilon");
            push_real(&mut out, model.epsilon.unwrap_or(0.0));
            out.push('\n');
            push_reals_block(&mut out, "duals", &model.dual_coefs);
            out.push_str("bias");
            push_real(&mut out, model.bias);
            out.push('\n');
        }
        KernelKind::Classifier => {
            let classes = model.classes.as_ref().expect("validated classifier");
            let _ = writeln!(out, "classes {}", classes.len());
            out.push_str("class-values");
            for &v in classes {
                push_real(&mut out, v);
            }
            out.push('\n');
            let pairs = model.pair_models.as_ref().expect("validated classifier");
            let _ = writeln!(out, "pairs {}", pairs.len());
            for pm in pairs {
                let _ = writeln!(out, "pair {} {}", pm.class_a, pm.class_b);
                out.push_str("bias");
                push_real(&mut out, pm.bias);
                out.push('\n');
                let _ = writeln!(out, "count {}", pm.sv_idx.len());
                out.push_str("idx");
                for &i in &pm.sv_idx {
                    let _ = write!(out, " {i}");
                }
                out.push('\n');
                push_reals_block(&mut out, "coef", &pm.dual_coefs);
            }
        }
    }
    out.push_str("end\n");
    out
}

pub fn write_conv_model(model: &ConvModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str("kind conv\n");
    let _ = writeln!(out, "input {}", model.spec.input_len);
    let _ = writeln!(out, "blocks {}", model.spec.blocks.len());
    for b in &model.spec.blocks {
        let _ = writeln!(out, "block {} {} {} {}", b.channels, b.kernel_len, b.stride, b.pool);
    }
    let _ = writeln!(out, "dense {}", model.spec.dense_units);
    match model.spec.head {
        HeadKind::Softmax { classes } => {
            let _ = writeln!(out, "head softmax {classes}");
        }
        HeadKind::Scalar => out.push_str("head scalar\n"),
    }
    let _ = writeln!(out, "params {}", model.params.len());
    push_reals_block(&mut out, "p", &model.params);
    out.push_str("end\n");
    out
}

pub fn write_model(model: &ModelFile) -> String {
    match model {
        ModelFile::Kernel(m) => write_kernel_model(m),
        ModelFile::Conv(m) => write_conv_model(m),
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Lines<'a> {
    iter: core::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { iter: text.lines(), line_no: 0 }
    }

    /// Next non-blank line, trimmed.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        loop {
            let line = self.iter.next()?;
            self.line_no += 1;
            let t = line.trim();
            if !t.is_empty() {
                return Some((self.line_no, t));
            }
        }
    }

    fn expect(&mut self) -> Result<(usize, &'a str), MlError> {
        self.next_content()
            .ok_or(MlError::Parse { line: self.line_no + 1, what: "unexpected end of input" })
    }

    /// Line whose first token must equal `tag`; returns the remaining tokens.
    fn tagged(&mut self, tag: &'static str) -> Result<(usize, core::str::SplitWhitespace<'a>), MlError> {
        let (no, line) = self.expect()?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(t) if t == tag => Ok((no, tokens)),
            _ => Err(MlError::Parse { line: no, what: "unexpected section tag" }),
        }
    }
}

fn parse_real(tok: Option<&str>, line: usize) -> Result<f64, MlError> {
    let t = tok.ok_or(MlError::Parse { line, what: "missing real value" })?;
    let v: f64 = t.parse().map_err(|_| MlError::Parse { line, what: "malformed real value" })?;
    if !v.is_finite() {
        return Err(MlError::Parse { line, what: "non-finite real value" });
    }
    Ok(v)
}

fn parse_count(tok: Option<&str>, line: usize) -> Result<usize, MlError> {
    tok.ok_or(MlError::Parse { line, what: "missing integer" })?
        .parse()
        .map_err(|_| MlError::Parse { line, what: "malformed integer" })
}

fn none_left(mut tokens: core::str::SplitWhitespace<'_>, line: usize) -> Result<(), MlError> {
    if tokens.next().is_some() {
        return Err(MlError::Parse { line, what: "trailing tokens on line" });
    }
    Ok(())
}

/// Read reals from repeated `tag` lines until `count` values are collected.
fn parse_reals_block(
    lines: &mut Lines<'_>,
    tag: &'static str,
    count: usize,
) -> Result<Vec<f64>, MlError> {
    let mut values = Vec::with_capacity(count);
    while values.len() < count {
        let (no, mut tokens) = lines.tagged(tag)?;
        let mut any = false;
        for tok in tokens.by_ref() {
            if values.len() == count {
                return Err(MlError::Parse { line: no, what: "too many values in block" });
            }
            values.push(parse_real(Some(tok), no)?);
            any = true;
        }
        if !any && count > 0 {
            return Err(MlError::Parse { line: no, what: "empty value line" });
        }
    }
    Ok(values)
}

fn parse_single_real(lines: &mut Lines<'_>, tag: &'static str) -> Result<f64, MlError> {
    let (no, mut tokens) = lines.tagged(tag)?;
    let v = parse_real(tokens.next(), no)?;
    none_left(tokens, no)?;
    Ok(v)
}

fn parse_single_count(lines: &mut Lines<'_>, tag: &'static str) -> Result<usize, MlError> {
    let (no, mut tokens) = lines.tagged(tag)?;
    let v = parse_count(tokens.next(), no)?;
    none_left(tokens, no)?;
    Ok(v)
}

fn parse_preprocess(lines: &mut Lines<'_>) -> Result<Preprocess, MlError> {
    let (no, mut tokens) = lines.tagged("preprocess")?;
    let kind = tokens.next().ok_or(MlError::Parse { line: no, what: "missing preprocess kind" })?;
    let p = match kind {
        "external" => Preprocess::External,
        "mean-sigma" => Preprocess::WindowMeanSigma { sigma_v: parse_real(tokens.next(), no)? },
        _ => return Err(MlError::Parse { line: no, what: "unknown preprocess kind" }),
    };
    none_left(tokens, no)?;
    Ok(p)
}

fn finish(lines: &mut Lines<'_>) -> Result<(), MlError> {
    let (no, line) = lines.expect()?;
    if line != "end" {
        return Err(MlError::Parse { line: no, what: "expected end marker" });
    }
    if let Some((no, _)) = lines.next_content() {
        return Err(MlError::Parse { line: no, what: "content after end marker" });
    }
    Ok(())
}

fn parse_kernel(lines: &mut Lines<'_>, kind: KernelKind) -> Result<KernelModel, MlError> {
    let n_features = parse_single_count(lines, "features")?;
    let gamma = parse_single_real(lines, "gamma")?;
    let c_penalty = parse_single_real(lines, "c")?;
    let preprocess = parse_preprocess(lines)?;
    let n_sv = parse_single_count(lines, "support-vectors")?;
    let mut support_vectors = Vec::with_capacity(n_sv);
    for _ in 0..n_sv {
        let (no, mut tokens) = lines.tagged("sv")?;
        let mut sv = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            sv.push(parse_real(tokens.next(), no)?);
        }
        none_left(tokens, no)?;
        support_vectors.push(sv);
    }
    let mut model = KernelModel {
        kind,
        n_features,
        gamma,
        c_penalty,
        epsilon: None,
        classes: None,
        preprocess,
        support_vectors,
        dual_coefs: Vec::new(),
        bias: 0.0,
        pair_models: None,
    };
    match kind {
        KernelKind::Regressor => {
            model.epsilon = Some(parse_single_real(lines, "epsilon")?);
            model.dual_coefs = parse_reals_block(lines, "duals", n_sv)?;
            model.bias = parse_single_real(lines, "bias")?;
        }
        KernelKind::Classifier => {
            let n_classes = parse_single_count(lines, "classes")?;
            let (no, mut tokens) = lines.tagged("class-values")?;
            let mut classes = Vec::with_capacity(n_classes);
            for _ in 0..n_classes {
                classes.push(parse_real(tokens.next(), no)?);
            }
            none_left(tokens, no)?;
            model.classes = Some(classes);
            let n_pairs = parse_single_count(lines, "pairs")?;
            let mut pairs = Vec::with_capacity(n_pairs);
            for _ in 0..n_pairs {
                let (no, mut tokens) = lines.tagged("pair")?;
                let class_a = parse_count(tokens.next(), no)?;
                let class_b = parse_count(tokens.next(), no)?;
                none_left(tokens, no)?;
                let bias = parse_single_real(lines, "bias")?;
                let count = parse_single_count(lines, "count")?;
                let (no, mut tokens) = lines.tagged("idx")?;
                let mut sv_idx = Vec::with_capacity(count);
                for _ in 0..count {
                    sv_idx.push(parse_count(tokens.next(), no)?);
                }
                none_left(tokens, no)?;
                let dual_coefs = parse_reals_block(lines, "coef", count)?;
                pairs.push(PairModel { class_a, class_b, sv_idx, dual_coefs, bias });
            }
            model.pair_models = Some(pairs);
        }
    }
    finish(lines)?;
    model.validate()?;
    Ok(model)
}

fn parse_conv(lines: &mut Lines<'_>) -> Result<ConvModel, MlError> {
    let input_len = parse_single_count(lines, "input")?;
    let n_blocks = parse_single_count(lines, "blocks")?;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let (no, mut tokens) = lines.tagged("block")?;
        let channels = parse_count(tokens.next(), no)?;
        let kernel_len = parse_count(tokens.next(), no)?;
        let stride = parse_count(tokens.next(), no)?;
        let pool = parse_count(tokens.next(), no)?;
        none_left(tokens, no)?;
        blocks.push(ConvBlockSpec { channels, kernel_len, stride, pool });
    }
    let dense_units = parse_single_count(lines, "dense")?;
    let (no, mut tokens) = lines.tagged("head")?;
    let head = match tokens.next() {
        Some("softmax") => HeadKind::Softmax { classes: parse_count(tokens.next(), no)? },
        Some("scalar") => HeadKind::Scalar,
        _ => return Err(MlError::Parse { line: no, what: "unknown head kind" }),
    };
    none_left(tokens, no)?;
    let spec = ConvSpec { input_len, blocks, dense_units, head };
    let n_params = parse_single_count(lines, "params")?;
    let params = parse_reals_block(lines, "p", n_params)?;
    finish(lines)?;
    let model = ConvModel { spec, params };
    model.validate()?;
    Ok(model)
}

pub fn parse_model(text: &str) -> Result<ModelFile, MlError> {
    let mut lines = Lines::new(text);
    let (no, magic) = lines.expect()?;
    if magic != MAGIC {
        return Err(MlError::Parse { line: no, what: "bad magic line" });
    }
    let (no, mut tokens) = lines.tagged("kind")?;
    let kind = tokens.next().ok_or(MlError::Parse { line: no, what: "missing model kind" })?;
    none_left(tokens, no)?;
    match kind {
        "kernel-classifier" => parse_kernel(&mut lines, KernelKind::Classifier).map(ModelFile::Kernel),
        "kernel-regressor" => parse_kernel(&mut lines, KernelKind::Regressor).map(ModelFile::Kernel),
        "conv" => parse_conv(&mut lines).map(ModelFile::Conv),
        _ => Err(MlError::Parse { line: no, what: "unknown model kind" }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::conv::{build_conv_model, micro_spec, stiffness_spec};
    use crate::ml::svc::{SvcParams, train_svc};
    use crate::ml::svr::{SvrParams, train_svr};
    use alloc::vec;
    use alloc::vec::Vec;

    fn small_classifier() -> KernelModel {
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..5 {
            windows.push(vec![0.1 * i as f64, 0.0]);
            labels.push(10.0);
            windows.push(vec![2.0 + 0.1 * i as f64, 1.0]);
            labels.push(29.0);
            windows.push(vec![4.0 + 0.1 * i as f64, 2.0]);
            labels.push(60.0);
        }
        train_svc(&windows, &labels, &SvcParams::default()).unwrap()
    }

    fn small_regressor() -> KernelModel {
        let windows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.3]).collect();
        let targets: Vec<f64> = (0..8).map(|i| 20.0 + 4.0 * i as f64).collect();
        let preprocess = Preprocess::fit_window_mean_sigma(&windows).unwrap();
        let params = SvrParams { c: 50.0, epsilon: 0.5, preprocess, ..SvrParams::default() };
        train_svr(&windows, &targets, &params).unwrap()
    }

    #[test]
    fn classifier_round_trip_is_exact() {
        let model = small_classifier();
        let text = write_kernel_model(&model);
        let ModelFile::Kernel(parsed) = parse_model(&text).unwrap() else { panic!() };
        assert_eq!(parsed, model);
    }

    #[test]
    fn regressor_round_trip_is_exact() {
        let model = small_regressor();
        let text = write_kernel_model(&model);
        let ModelFile::Kernel(parsed) = parse_model(&text).unwrap() else { panic!() };
        assert_eq!(parsed, model);
        // predictions from the parsed copy are bitwise identical
        for x in [0.0, 0.7, 1.9] {
            assert_eq!(
                parsed.predict(&[x]).unwrap().as_shore().to_bits(),
                model.predict(&[x]).unwrap().as_shore().to_bits()
            );
        }
    }

    #[test]
    fn conv_round_trip_is_exact() {
        for spec in [micro_spec(), stiffness_spec(HeadKind::Softmax { classes: 5 })] {
            let model = build_conv_model(&spec, 21).unwrap();
            let text = write_conv_model(&model);
            let ModelFile::Conv(parsed) = parse_model(&text).unwrap() else { panic!() };
            assert_eq!(parsed, model);
        }
    }

    #[test]
    fn enum_writer_matches_kind_writers() {
        let model = small_regressor();
        assert_eq!(write_model(&ModelFile::Kernel(model.clone())), write_kernel_model(&model));
    }

    #[test]
    fn malformed_inputs_are_rejected_with_line_numbers() {
        let good = write_kernel_model(&small_regressor());

        let err = parse_model("nonsense\n").unwrap_err();
        assert_eq!(err, MlError::Parse { line: 1, what: "bad magic line" });

        let mut no_end = good.clone();
        no_end.truncate(good.rfind("end").unwrap());
        assert!(matches!(parse_model(&no_end), Err(MlError::Parse { .. })));

        let trailing = good.clone() + "extra\n";
        let MlError::Parse { what, .. } = parse_model(&trailing).unwrap_err() else { panic!() };
        assert_eq!(what, "content after end marker");

        let bad_real = good.replace("gamma ", "gamma x");
        assert!(matches!(
            parse_model(&bad_real),
            Err(MlError::Parse { what: "malformed real value", .. })
        ));

        let wrong_kind = good.replace("kind kernel-regressor", "kind mystery");
        assert!(matches!(
            parse_model(&wrong_kind),
            Err(MlError::Parse { what: "unknown model kind", .. })
        ));

        // claim one more support vector than the file carries
        let n = small_regressor().support_vectors.len();
        let overclaim = good.replace(
            &alloc::format!("support-vectors {n}"),
            &alloc::format!("support-vectors {}", n + 1),
        );
        assert!(parse_model(&overclaim).is_err());
    }

    #[test]
    fn parsed_models_still_validate() {
        // corrupt a dual so the balance invariant breaks
        let model = small_classifier();
        let text = write_kernel_model(&model);
        let first_coef_line = text.lines().find(|l| l.starts_with("coef")).unwrap();
        let tampered = text.replace(first_coef_line, "coef 9.9e0");
        assert!(parse_model(&tampered).is_err());
    }
}
