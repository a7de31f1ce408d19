//! Independent reference implementations used to cross-check the production
//! code paths. Everything here is deliberately slow and structurally different
//! from the code it verifies: the QP oracle searches a shrinking grid instead
//! of doing coordinate ascent, the gradient oracle uses finite differences,
//! and the CRC oracle shifts bits one at a time.

use alloc::vec;
use alloc::vec::Vec;

/// Minimize 1/2 a'Qa + p'a over 0 <= a <= c with y'a = 0 (y in {-1,+1}) by
/// multi-resolution pattern search. The equality constraint is eliminated
/// through the last variable; candidates whose implied last coordinate leaves
/// the box are discarded. Convex objective plus compass steps with halving
/// gives global convergence; tolerances here are far below what callers test.
pub fn qp_grid_min(q: &[Vec<f64>], p: &[f64], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = p.len();
    assert!(n >= 2, "need at least two variables");
    assert_eq!(q.len(), n);
    assert_eq!(y.len(), n);
    let free = n - 1;

    let objective = |full: &[f64]| -> f64 {
        let mut acc = 0.0;
        for s in 0..n {
            let mut row = 0.0;
            for t in 0..n {
                row += q[s][t] * full[t];
            }
            acc += 0.5 * full[s] * row + p[s] * full[s];
        }
        acc
    };

    // last coordinate implied by the balance constraint, None when infeasible
    let complete = |frees: &[f64]| -> Option<Vec<f64>> {
        let mut dot = 0.0;
        for (a, yy) in frees.iter().zip(y) {
            dot += a * yy;
        }
        let last = -dot * y[n - 1];
        if !(-1e-12..=c + 1e-12).contains(&last) {
            return None;
        }
        let mut full = frees.to_vec();
        full.push(last.clamp(0.0, c));
        Some(full)
    };

    let mut center = vec![0.0f64; free];
    let mut best_full = complete(&center).expect("zero vector is feasible");
    let mut best_val = objective(&best_full);
    let mut step = c / 4.0;
    let mut digits = vec![0u8; free];

    for _ in 0..400 {
        if step < c * 1e-10 {
            break;
        }
        let mut level_best = best_val;
        let mut level_center: Option<Vec<f64>> = None;
        // walk the 3^free pattern around the center with an odometer
        digits.iter_mut().for_each(|d| *d = 0);
        'pattern: loop {
            let mut cand = Vec::with_capacity(free);
            for (d, ctr) in digits.iter().zip(&center) {
                let off = (*d as f64 - 1.0) * step;
                cand.push((ctr + off).clamp(0.0, c));
            }
            if let Some(full) = complete(&cand) {
                let v = objective(&full);
                if v < level_best - 1e-15 {
                    level_best = v;
                    level_center = Some(cand.clone());
                    best_full = full;
                }
            }
            for d in digits.iter_mut() {
                *d += 1;
                if *d < 3 {
                    continue 'pattern;
                }
                *d = 0;
            }
            break;
        }
        match level_center {
            Some(better) => {
                center = better;
                best_val = level_best;
            }
            None => step *= 0.5,
        }
    }
    (best_full, best_val)
}

/// Central-difference gradient of `f` at `theta`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    theta: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut grad = Vec::with_capacity(theta.len());
    let mut work = theta.to_vec();
    for k in 0..theta.len() {
        let saved = work[k];
        let hk = h * saved.abs().max(1.0);
        work[k] = saved + hk;
        let up = f(&work);
        work[k] = saved - hk;
        let down = f(&work);
        work[k] = saved;
        grad.push((up - down) / (2.0 * hk));
    }
    grad
}

/// Bit-at-a-time CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no
/// reflection, no final xor.
pub fn crc16_reference(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            if crc & 0x8000 != 0 {
                crc = (crc << 1) ^ 0x1021;
            } else {
                crc <<= 1;
            }
        }
    }
    crc
}
