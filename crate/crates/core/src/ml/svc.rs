//! One-vs-one RBF classifier trained by SMO.

use alloc::vec::Vec;

use crate::ml::kernel::{KernelKind, KernelModel, PairModel, Prediction};
use crate::ml::smo::{self, DualProblem, SmoParams};
use crate::ml::{MlError, Preprocess, default_gamma, seeded_split};

/// Dual weights at or below this are treated as zero and pruned.
const SV_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcParams {
    pub c: f64,
    /// RBF width; None picks 1/(d * var) from the training windows.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_passes: usize,
    pub cache_mib: usize,
    pub preprocess: Preprocess,
}

impl Default for SvcParams {
    fn default() -> Self {
        SvcParams {
            c: 10.0,
            gamma: None,
            tol: 1e-3,
            max_passes: 10_000,
            cache_mib: 256,
            preprocess: Preprocess::External,
        }
    }
}

/// Train a one-vs-one classifier. Labels are raw values (shore, or 0/1 for
/// binary detection duty); their distinct sorted values become the classes.
pub fn train_svc(
    windows: &[Vec<f64>],
    labels: &[f64],
    params: &SvcParams,
) -> Result<KernelModel, MlError> {
    if windows.is_empty() {
        return Err(MlError::EmptyInput);
    }
    if windows.len() != labels.len() {
        return Err(MlError::LengthMismatch { left: windows.len(), right: labels.len() });
    }
    if labels.iter().any(|l| !l.is_finite()) {
        return Err(MlError::NonFinite);
    }
    let x = params.preprocess.apply_all(windows);
    let n_features = x[0].len();

    let mut classes: Vec<f64> = labels.to_vec();
    classes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    classes.dedup();
    if classes.len() < 2 {
        return Err(MlError::SingleClass);
    }
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).unwrap())
        .collect();

    let gamma = match params.gamma {
        Some(g) if g > 0.0 => g,
        Some(_) => return Err(MlError::BadParam("gamma must be positive")),
        None => default_gamma(&x)?,
    };
    let smo_params = SmoParams {
        c: params.c,
        tol: params.tol,
        max_passes: params.max_passes,
        cache_mib: params.cache_mib,
    };

    // shared support-vector pool, filled as pairs claim samples
    let mut pool: Vec<Vec<f64>> = Vec::new();
    let mut pool_slot: Vec<Option<usize>> = alloc::vec![None; x.len()];
    let mut pair_models = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);

    for a in 0..classes.len() {
        for b in (a + 1)..classes.len() {
            let subset: Vec<usize> =
                (0..x.len()).filter(|&i| class_of[i] == a || class_of[i] == b).collect();
            let pts: Vec<Vec<f64>> = subset.iter().map(|&i| x[i].clone()).collect();
            let ys: Vec<f64> =
                subset.iter().map(|&i| if class_of[i] == a { 1.0 } else { -1.0 }).collect();
            let mut prob = DualProblem::svc(&pts, &ys, gamma, params.cache_mib)?;
            let sol = smo::solve(&mut prob, &smo_params)?;
            let mut sv_idx = Vec::new();
            let mut dual_coefs = Vec::new();
            for (s, &alpha) in sol.alpha.iter().enumerate() {
                if alpha > SV_EPS {
                    let g = subset[s];
                    let slot = match pool_slot[g] {
                        Some(slot) => slot,
                        None => {
                            pool.push(x[g].clone());
                            pool_slot[g] = Some(pool.len() - 1);
                            pool.len() - 1
                        }
                    };
                    sv_idx.push(slot);
                    dual_coefs.push(ys[s] * alpha);
                }
            }
            // decision value sum(dual * K) + bias > 0 votes class a
            pair_models.push(PairModel {
                class_a: a,
                class_b: b,
                sv_idx,
                dual_coefs,
                bias: sol.bias,
            });
        }
    }

    let model = KernelModel {
        kind: KernelKind::Classifier,
        n_features,
        gamma,
        c_penalty: params.c,
        epsilon: None,
        classes: Some(classes),
        preprocess: params.preprocess,
        support_vectors: pool,
        dual_coefs: Vec::new(),
        bias: 0.0,
        pair_models: Some(pair_models),
    };
    model.validate()?;
    Ok(model)
}

/// Hyperparameter grid: every (C, gamma scale) combination is scored on a
/// seeded validation split, the winner is retrained on everything.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcGrid {
    pub c_values: Vec<f64>,
    pub gamma_scales: Vec<f64>,
}

impl Default for SvcGrid {
    fn default() -> Self {
        SvcGrid {
            c_values: alloc::vec![1.0, 10.0, 100.0],
            gamma_scales: alloc::vec![0.1, 1.0, 10.0],
        }
    }
}

pub fn grid_search_svc(
    windows: &[Vec<f64>],
    labels: &[f64],
    base: &SvcParams,
    grid: &SvcGrid,
    val_frac: f64,
    seed: u64,
) -> Result<(KernelModel, f64), MlError> {
    if windows.len() != labels.len() {
        return Err(MlError::LengthMismatch { left: windows.len(), right: labels.len() });
    }
    if grid.c_values.is_empty() || grid.gamma_scales.is_empty() {
        return Err(MlError::BadParam("empty hyperparameter grid"));
    }
    let (train_idx, val_idx) = seeded_split(windows.len(), val_frac, seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(MlError::EmptyInput);
    }
    let tw: Vec<Vec<f64>> = train_idx.iter().map(|&i| windows[i].clone()).collect();
    let tl: Vec<f64> = train_idx.iter().map(|&i| labels[i]).collect();
    let g0 = default_gamma(&base.preprocess.apply_all(&tw))?;

    let mut best: Option<(f64, SvcParams)> = None;
    for &c in &grid.c_values {
        for &gs in &grid.gamma_scales {
            let params = SvcParams { c, gamma: Some(gs * g0), ..*base };
            let model = train_svc(&tw, &tl, &params)?;
            let mut hits = 0usize;
            for &i in &val_idx {
                if let Prediction::Class { value, .. } = model.predict(&windows[i])? {
                    if value == labels[i] {
                        hits += 1;
                    }
                }
            }
            let acc = hits as f64 / val_idx.len() as f64;
            // strict improvement keeps the first (lowest C, lowest gamma) winner
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, params));
            }
        }
    }
    let (acc, params) = best.unwrap();
    let model = train_svc(windows, labels, &params)?;
    Ok((model, acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::kernel::rbf_kernel;
    use crate::oracle;
    use alloc::vec;

    #[test]
    fn xor_layout_matches_grid_oracle() {
        let windows = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let labels = [1.0, 1.0, -1.0, -1.0];
        let c = 10.0;
        let mut prob = DualProblem::svc(&windows, &labels, 1.0, 16).unwrap();
        let sol = smo::solve(&mut prob, &SmoParams { tol: 1e-9, ..SmoParams::new(c) }).unwrap();
        let n = prob.n_slots();
        let q: Vec<Vec<f64>> =
            (0..n).map(|s| (0..n).map(|t| prob.q_entry(s, t)).collect()).collect();
        let (_, oracle_val) = oracle::qp_grid_min(&q, &prob.p, &prob.y, c);
        assert!(
            (sol.objective - oracle_val).abs() < 1e-6,
            "smo {} vs grid {}",
            sol.objective,
            oracle_val
        );
        assert!(sol.objective <= oracle_val + 1e-9);
    }

    #[test]
    fn separable_blobs_classify_perfectly() {
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            windows.push(vec![0.1 * i as f64, 0.05 * i as f64]);
            labels.push(10.0);
            windows.push(vec![3.0 + 0.1 * i as f64, 2.0 - 0.05 * i as f64]);
            labels.push(60.0);
        }
        let model = train_svc(&windows, &labels, &SvcParams::default()).unwrap();
        model.validate().unwrap();
        for (w, &l) in windows.iter().zip(&labels) {
            let Prediction::Class { value, .. } = model.predict(w).unwrap() else { panic!() };
            assert_eq!(value, l);
        }
    }

    #[test]
    fn three_classes_on_a_line() {
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8 {
            windows.push(vec![i as f64 * 0.05]);
            labels.push(10.0);
            windows.push(vec![2.0 + i as f64 * 0.05]);
            labels.push(29.0);
            windows.push(vec![4.0 + i as f64 * 0.05]);
            labels.push(60.0);
        }
        let model = train_svc(&windows, &labels, &SvcParams::default()).unwrap();
        assert_eq!(model.classes.as_ref().unwrap(), &vec![10.0, 29.0, 60.0]);
        assert_eq!(model.pair_models.as_ref().unwrap().len(), 3);
        for (w, &l) in windows.iter().zip(&labels) {
            assert_eq!(model.predict(w).unwrap().as_shore(), l);
        }
        // clearly interior probes
        assert_eq!(model.predict(&[0.1]).unwrap().as_shore(), 10.0);
        assert_eq!(model.predict(&[4.2]).unwrap().as_shore(), 60.0);
    }

    #[test]
    fn vote_ties_resolve_to_lowest_class() {
        // one distant support vector per pair makes kernel terms vanish, so
        // the rigged biases produce a 1-1-1 vote split
        let model = KernelModel {
            kind: KernelKind::Classifier,
            n_features: 1,
            gamma: 1.0,
            c_penalty: 10.0,
            epsilon: None,
            classes: Some(vec![10.0, 20.0, 30.0]),
            preprocess: Preprocess::External,
            support_vectors: vec![vec![1e6]],
            dual_coefs: vec![],
            bias: 0.0,
            pair_models: Some(vec![
                PairModel { class_a: 0, class_b: 1, sv_idx: vec![], dual_coefs: vec![], bias: 1.0 },
                PairModel { class_a: 0, class_b: 2, sv_idx: vec![], dual_coefs: vec![], bias: -1.0 },
                PairModel { class_a: 1, class_b: 2, sv_idx: vec![], dual_coefs: vec![], bias: 1.0 },
            ]),
        };
        let Prediction::Class { index, value } = model.predict(&[0.0]).unwrap() else { panic!() };
        assert_eq!(index, 0);
        assert_eq!(value, 10.0);
    }

    #[test]
    fn mean_sigma_preprocess_absorbs_offsets() {
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            let t = i as f64;
            windows.push(vec![t.sin() * 0.1, (t + 1.0).sin() * 0.1, (t + 2.0).sin() * 0.1]);
            labels.push(10.0);
            windows.push(vec![t.cos() * 0.9, (t + 1.0).cos() * 0.9, (t + 2.0).cos() * 0.9]);
            labels.push(60.0);
        }
        let preprocess = Preprocess::fit_window_mean_sigma(&windows).unwrap();
        let params = SvcParams { preprocess, ..SvcParams::default() };
        let model = train_svc(&windows, &labels, &params).unwrap();
        for (w, &l) in windows.iter().zip(&labels) {
            let shifted: Vec<f64> = w.iter().map(|x| x + 0.42).collect();
            assert_eq!(model.predict(w).unwrap().as_shore(), l);
            assert_eq!(model.predict(&shifted).unwrap().as_shore(), l);
        }
    }

    #[test]
    fn decision_values_respect_bias_sign() {
        // two points, one per class: decision at each training point must
        // favor its own class, which pins the bias sign convention
        let windows = vec![vec![0.0], vec![2.0]];
        let labels = [0.0, 1.0];
        let model = train_svc(&windows, &labels, &SvcParams::default()).unwrap();
        assert_eq!(model.predict(&[0.0]).unwrap().as_shore(), 0.0);
        assert_eq!(model.predict(&[2.0]).unwrap().as_shore(), 1.0);
        // manual decision check against the stored pair model
        let pm = &model.pair_models.as_ref().unwrap()[0];
        let probe = [0.0];
        let mut acc = pm.bias;
        for (&i, &a) in pm.sv_idx.iter().zip(&pm.dual_coefs) {
            acc += a * rbf_kernel(&model.support_vectors[i], &probe, model.gamma);
        }
        assert!(acc > 0.0, "class 0 decision value {acc}");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(
            train_svc(&[], &[], &SvcParams::default()),
            Err(MlError::EmptyInput)
        ));
        let w = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_svc(&w, &[1.0], &SvcParams::default()),
            Err(MlError::LengthMismatch { .. })
        ));
        assert!(matches!(
            train_svc(&w, &[5.0, 5.0], &SvcParams::default()),
            Err(MlError::SingleClass)
        ));
    }

    #[test]
    fn grid_search_is_deterministic_and_scores_well() {
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..15 {
            windows.push(vec![0.01 * i as f64, 0.0]);
            labels.push(0.0);
            windows.push(vec![2.0 + 0.01 * i as f64, 1.0]);
            labels.push(1.0);
        }
        let base = SvcParams::default();
        let grid = SvcGrid::default();
        let (m1, a1) = grid_search_svc(&windows, &labels, &base, &grid, 0.2, 3).unwrap();
        let (m2, a2) = grid_search_svc(&windows, &labels, &base, &grid, 0.2, 3).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(a1, a2);
        assert_eq!(a1, 1.0);
    }
}
