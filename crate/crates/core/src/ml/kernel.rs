//! RBF kernel, a row cache for training, and the trained kernel-machine
//! container shared by the classifier and the regressor.

use alloc::vec::Vec;

use crate::detect::{DetectError, WindowClassifier};
use crate::math;
use crate::ml::{MlError, Preprocess};

/// exp(-gamma * ||u - v||^2)
pub fn rbf_kernel(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut d2 = 0.0;
    for (a, b) in u.iter().zip(v) {
        let d = a - b;
        d2 += d * d;
    }
    math::exp(-gamma * d2)
}

/// Kernel rows over a fixed point set, materialized on demand and evicted
/// oldest-first once the byte budget is hit.
pub struct KernelCache<'a> {
    points: &'a [Vec<f64>],
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    order: Vec<usize>,
    max_rows: usize,
}

impl<'a> KernelCache<'a> {
    pub fn new(points: &'a [Vec<f64>], gamma: f64, budget_mib: usize) -> Self {
        let n = points.len();
        let row_bytes = (n * 8).max(1);
        let max_rows = ((budget_mib * 1024 * 1024) / row_bytes).max(2);
        KernelCache { points, gamma, rows: alloc::vec![None; n], order: Vec::new(), max_rows }
    }

    /// Copy row `s` of the kernel matrix into `out`.
    pub fn row_into(&mut self, s: usize, out: &mut [f64]) {
        if self.rows[s].is_none() {
            if self.order.len() >= self.max_rows {
                let evict = self.order.remove(0);
                self.rows[evict] = None;
            }
            let base = &self.points[s];
            let row: Vec<f64> =
                self.points.iter().map(|p| rbf_kernel(base, p, self.gamma)).collect();
            self.rows[s] = Some(row);
            self.order.push(s);
        }
        out.copy_from_slice(self.rows[s].as_ref().unwrap());
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn entry(&self, s: usize, t: usize) -> f64 {
        match &self.rows[s] {
            Some(row) => row[t],
            None => rbf_kernel(&self.points[s], &self.points[t], self.gamma),
        }
    }
}

// ---------------------------------------------------------------------------
// Trained model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Classifier,
    Regressor,
}

/// One one-vs-one binary vote between two class indices. Support vectors are
/// indices into the owning model's shared pool; duals carry the label sign.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub class_a: usize,
    pub class_b: usize,
    pub sv_idx: Vec<usize>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
}

/// A trained RBF machine. The regressor uses the top-level coefficients
/// directly; the classifier keeps a shared support-vector pool plus one
/// PairModel per class pair, and leaves the top-level coefficients empty.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub kind: KernelKind,
    pub n_features: usize,
    pub gamma: f64,
    pub c_penalty: f64,
    /// SVR tube half-width; absent for classifiers.
    pub epsilon: Option<f64>,
    /// Distinct class label values, ascending; absent for regressors.
    pub classes: Option<Vec<f64>>,
    pub preprocess: Preprocess,
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub pair_models: Option<Vec<PairModel>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Class { index: usize, value: f64 },
    Value(f64),
}

impl Prediction {
    pub fn as_shore(&self) -> f64 {
        match *self {
            Prediction::Class { value, .. } => value,
            Prediction::Value(v) => v,
        }
    }
}

impl KernelModel {
    /// Structural invariants; every constructor and parser calls this.
    pub fn validate(&self) -> Result<(), MlError> {
        if self.n_features == 0 {
            return Err(MlError::BadParam("n_features must be positive"));
        }
        if !(self.gamma > 0.0) || !(self.c_penalty > 0.0) {
            return Err(MlError::BadParam("gamma and C must be positive"));
        }
        for sv in &self.support_vectors {
            if sv.len() != self.n_features {
                return Err(MlError::FeatureMismatch { expected: self.n_features, got: sv.len() });
            }
        }
        match self.kind {
            KernelKind::Regressor => {
                if self.dual_coefs.len() != self.support_vectors.len() {
                    return Err(MlError::LengthMismatch {
                        left: self.dual_coefs.len(),
                        right: self.support_vectors.len(),
                    });
                }
                if self.pair_models.is_some() || self.classes.is_some() {
                    return Err(MlError::BadParam("regressor with classifier fields"));
                }
                if self.epsilon.is_none() {
                    return Err(MlError::BadParam("regressor without epsilon"));
                }
            }
            KernelKind::Classifier => {
                let pairs = self.pair_models.as_ref().ok_or(MlError::BadParam("no pair models"))?;
                let classes = self.classes.as_ref().ok_or(MlError::BadParam("no class list"))?;
                if classes.len() < 2 {
                    return Err(MlError::SingleClass);
                }
                if !self.dual_coefs.is_empty() {
                    return Err(MlError::BadParam("classifier top-level duals must be empty"));
                }
                if pairs.len() != classes.len() * (classes.len() - 1) / 2 {
                    return Err(MlError::BadParam("pair model count"));
                }
                for pm in pairs {
                    if pm.class_a >= pm.class_b || pm.class_b >= classes.len() {
                        return Err(MlError::BadParam("pair class indices"));
                    }
                    if pm.sv_idx.len() != pm.dual_coefs.len() {
                        return Err(MlError::LengthMismatch {
                            left: pm.sv_idx.len(),
                            right: pm.dual_coefs.len(),
                        });
                    }
                    let mut sum = 0.0;
                    for (&i, &a) in pm.sv_idx.iter().zip(&pm.dual_coefs) {
                        if i >= self.support_vectors.len() {
                            return Err(MlError::BadParam("support vector index out of range"));
                        }
                        if math::fabs(a) > self.c_penalty + 1e-8 {
                            return Err(MlError::BadParam("dual exceeds box constraint"));
                        }
                        sum += a;
                    }
                    if math::fabs(sum) > 1e-8 {
                        return Err(MlError::BadParam("pair duals do not balance"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Total number of distinct stored support vectors.
    pub fn support_vector_count(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn predict(&self, window: &[f64]) -> Result<Prediction, MlError> {
        if window.len() != self.n_features {
            return Err(MlError::FeatureMismatch { expected: self.n_features, got: window.len() });
        }
        let x = self.preprocess.apply(window);
        // one kernel evaluation per pooled vector, shared by every pair vote
        let k: Vec<f64> =
            self.support_vectors.iter().map(|sv| rbf_kernel(&x, sv, self.gamma)).collect();
        match self.kind {
            KernelKind::Regressor => {
                let mut acc = self.bias;
                for (ki, a) in k.iter().zip(&self.dual_coefs) {
                    acc += ki * a;
                }
                Ok(Prediction::Value(acc.clamp(0.0, 100.0)))
            }
            KernelKind::Classifier => {
                let classes = self.classes.as_ref().ok_or(MlError::BadParam("no class list"))?;
                let pairs = self.pair_models.as_ref().ok_or(MlError::BadParam("no pair models"))?;
                let mut votes = alloc::vec![0usize; classes.len()];
                for pm in pairs {
                    let mut acc = pm.bias;
                    for (&i, &a) in pm.sv_idx.iter().zip(&pm.dual_coefs) {
                        acc += k[i] * a;
                    }
                    let winner = if acc > 0.0 { pm.class_a } else { pm.class_b };
                    votes[winner] += 1;
                }
                // ties resolve to the lowest class index
                let mut best = 0usize;
                for (i, &v) in votes.iter().enumerate() {
                    if v > votes[best] {
                        best = i;
                    }
                }
                Ok(Prediction::Class { index: best, value: classes[best] })
            }
        }
    }
}

/// A binary kernel classifier doubles as a detection-window classifier.
/// Class index 1 (the higher label value) means contact.
impl WindowClassifier for KernelModel {
    fn window_len(&self) -> usize {
        self.n_features
    }

    fn classify_window(&self, window: &[f64]) -> Result<bool, DetectError> {
        match self.predict(window) {
            Ok(Prediction::Class { index, .. }) => Ok(index == 1),
            Ok(Prediction::Value(_)) => Err(DetectError::BadModel("regressor cannot detect")),
            Err(MlError::FeatureMismatch { expected, got }) => {
                Err(DetectError::FeatureMismatch { expected, got })
            }
            Err(_) => Err(DetectError::BadModel("prediction failed")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rbf_anchors() {
        let u = [1.0, 2.0, 3.0];
        assert_eq!(rbf_kernel(&u, &u, 0.7), 1.0);
        // ||u - v||^2 = 2, gamma = 0.5 -> e^-1
        let a = [0.0, 0.0];
        let b = [1.0, 1.0];
        assert!((rbf_kernel(&a, &b, 0.5) - (-1.0f64).exp()).abs() < 1e-15);
        // gamma -> 0 limit
        assert!(rbf_kernel(&a, &b, 1e-12) > 0.999_999);
        assert!(rbf_kernel(&a, &b, 0.5) < rbf_kernel(&a, &[0.5, 0.5], 0.5));
    }

    #[test]
    fn cache_rows_match_direct_evaluation() {
        let pts: Vec<Vec<f64>> =
            (0..6).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let gamma = 0.3;
        let mut cache = KernelCache::new(&pts, gamma, 64);
        let mut row = vec![0.0; 6];
        for s in 0..6 {
            cache.row_into(s, &mut row);
            for t in 0..6 {
                assert!((row[t] - rbf_kernel(&pts[s], &pts[t], gamma)).abs() < 1e-15);
            }
        }
        // second pass hits the cache and must agree
        cache.row_into(3, &mut row);
        assert!((row[5] - rbf_kernel(&pts[3], &pts[5], gamma)).abs() < 1e-15);
    }

    #[test]
    fn cache_eviction_keeps_answers_correct() {
        let pts: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        // budget of ~0 MiB forces the 2-row minimum and constant eviction
        let mut cache = KernelCache::new(&pts, 0.01, 0);
        let mut row = vec![0.0; 64];
        for s in 0..64 {
            cache.row_into(s, &mut row);
            assert!((row[s] - 1.0).abs() < 1e-15);
            let t = (s + 7) % 64;
            assert!((row[t] - rbf_kernel(&pts[s], &pts[t], 0.01)).abs() < 1e-15);
        }
    }

    #[test]
    fn regressor_prediction_is_clamped() {
        let model = KernelModel {
            kind: KernelKind::Regressor,
            n_features: 2,
            gamma: 1.0,
            c_penalty: 10.0,
            epsilon: Some(1.0),
            classes: None,
            preprocess: Preprocess::External,
            support_vectors: vec![vec![0.0, 0.0]],
            dual_coefs: vec![500.0],
            bias: 0.0,
            pair_models: None,
        };
        let Prediction::Value(v) = model.predict(&[0.0, 0.0]).unwrap() else { panic!() };
        assert_eq!(v, 100.0);
        assert!(model.predict(&[0.0]).is_err());
    }

    #[test]
    fn validation_rejects_unbalanced_pairs() {
        let model = KernelModel {
            kind: KernelKind::Classifier,
            n_features: 1,
            gamma: 1.0,
            c_penalty: 10.0,
            epsilon: None,
            classes: Some(vec![0.0, 1.0]),
            preprocess: Preprocess::External,
            support_vectors: vec![vec![0.0], vec![1.0]],
            dual_coefs: vec![],
            bias: 0.0,
            pair_models: Some(vec![PairModel {
                class_a: 0,
                class_b: 1,
                sv_idx: vec![0, 1],
                dual_coefs: vec![1.0, -0.5],
                bias: 0.0,
            }]),
        };
        assert!(matches!(model.validate(), Err(MlError::BadParam(_))));
    }
}
