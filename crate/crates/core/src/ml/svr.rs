//! Epsilon-insensitive RBF regression trained by SMO.

use alloc::vec::Vec;

use crate::ml::kernel::{KernelKind, KernelModel};
use crate::ml::smo::{self, DualProblem, SmoParams, svr_coefficients};
use crate::ml::{MlError, Preprocess, default_gamma};

const SV_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: Option<f64>,
    /// Half-width of the insensitive tube, in shore units.
    pub epsilon: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub cache_mib: usize,
    pub preprocess: Preprocess,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 10.0,
            gamma: None,
            epsilon: 1.0,
            tol: 1e-3,
            max_passes: 10_000,
            cache_mib: 256,
            preprocess: Preprocess::External,
        }
    }
}

/// Train a regressor mapping windows to shore values.
pub fn train_svr(
    windows: &[Vec<f64>],
    targets_shore: &[f64],
    params: &SvrParams,
) -> Result<KernelModel, MlError> {
    if windows.is_empty() {
        return Err(MlError::EmptyInput);
    }
    if windows.len() != targets_shore.len() {
        return Err(MlError::LengthMismatch { left: windows.len(), right: targets_shore.len() });
    }
    if targets_shore.iter().any(|z| !z.is_finite()) {
        return Err(MlError::NonFinite);
    }
    let x = params.preprocess.apply_all(windows);
    let n_features = x[0].len();
    let gamma = match params.gamma {
        Some(g) if g > 0.0 => g,
        Some(_) => return Err(MlError::BadParam("gamma must be positive")),
        None => default_gamma(&x)?,
    };

    let mut prob = DualProblem::svr(&x, targets_shore, gamma, params.epsilon, params.cache_mib)?;
    let sol = smo::solve(
        &mut prob,
        &SmoParams {
            c: params.c,
            tol: params.tol,
            max_passes: params.max_passes,
            cache_mib: params.cache_mib,
        },
    )?;
    let coef = svr_coefficients(&sol);

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, &a) in coef.iter().enumerate() {
        if a.abs() > SV_EPS {
            support_vectors.push(x[i].clone());
            dual_coefs.push(a);
        }
    }

    let model = KernelModel {
        kind: KernelKind::Regressor,
        n_features,
        gamma,
        c_penalty: params.c,
        epsilon: Some(params.epsilon),
        classes: None,
        preprocess: params.preprocess,
        support_vectors,
        dual_coefs,
        bias: sol.bias,
        pair_models: None,
    };
    model.validate()?;
    Ok(model)
}
