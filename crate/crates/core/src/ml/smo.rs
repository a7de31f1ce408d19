//! Sequential minimal optimization for the box-constrained dual
//!
//! ```text
//!   minimize   1/2 a'Qa + p'a
//!   subject to y'a = 0,  0 <= a_s <= C,  y_s in {-1, +1}
//! ```
//!
//! with Q_st = y_s y_t K(base_s, base_t). Classification uses one slot per
//! point; regression doubles the slots (upper and lower tube multipliers for
//! the same base point) and differs only in `y`, `p`, and the slot-to-base
//! map, so one solver serves both.
//!
//! Working pairs are chosen by the maximal-violating-pair rule with the
//! second-order gain refinement; gradients are maintained incrementally; the
//! loop stops when the KKT gap drops below tolerance.

use alloc::vec;
use alloc::vec::Vec;

use crate::ml::MlError;
use crate::ml::kernel::KernelCache;

/// Positive floor for curvature terms.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    /// KKT gap at which the solve stops.
    pub tol: f64,
    /// Iteration budget is `max_passes * n_slots`.
    pub max_passes: usize,
    pub cache_mib: usize,
}

impl SmoParams {
    pub fn new(c: f64) -> Self {
        SmoParams { c, tol: 1e-3, max_passes: 10_000, cache_mib: 256 }
    }

    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(MlError::BadParam("C must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(MlError::BadParam("tolerance must be positive"));
        }
        if self.max_passes == 0 {
            return Err(MlError::BadParam("max_passes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Final value of 1/2 a'Qa + p'a.
    pub objective: f64,
    pub iterations: usize,
    /// KKT gap at termination.
    pub gap: f64,
}

/// The dual problem in slot form, backed by a kernel row cache.
pub struct DualProblem<'a> {
    cache: KernelCache<'a>,
    base_of: Vec<usize>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
}

impl<'a> DualProblem<'a> {
    /// Binary classification: y = labels, p = -1.
    pub fn svc(
        points: &'a [Vec<f64>],
        labels: &[f64],
        gamma: f64,
        cache_mib: usize,
    ) -> Result<Self, MlError> {
        if points.is_empty() {
            return Err(MlError::EmptyInput);
        }
        if points.len() != labels.len() {
            return Err(MlError::LengthMismatch { left: points.len(), right: labels.len() });
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(MlError::BadParam("labels must be +1 or -1"));
        }
        Ok(DualProblem {
            cache: KernelCache::new(points, gamma, cache_mib),
            base_of: (0..points.len()).collect(),
            y: labels.to_vec(),
            p: vec![-1.0; points.len()],
        })
    }

    /// Epsilon-insensitive regression: slots [0,l) are the upper multipliers
    /// (y = +1, p = eps - z), slots [l,2l) the lower ones (y = -1, p = eps + z).
    pub fn svr(
        points: &'a [Vec<f64>],
        targets: &[f64],
        gamma: f64,
        epsilon: f64,
        cache_mib: usize,
    ) -> Result<Self, MlError> {
        if points.is_empty() {
            return Err(MlError::EmptyInput);
        }
        if points.len() != targets.len() {
            return Err(MlError::LengthMismatch { left: points.len(), right: targets.len() });
        }
        if !(epsilon >= 0.0) {
            return Err(MlError::BadParam("epsilon must be >= 0"));
        }
        let l = points.len();
        let mut y = Vec::with_capacity(2 * l);
        let mut p = Vec::with_capacity(2 * l);
        let mut base_of = Vec::with_capacity(2 * l);
        for &z in targets {
            y.push(1.0);
            p.push(epsilon - z);
        }
        for &z in targets {
            y.push(-1.0);
            p.push(epsilon + z);
        }
        base_of.extend(0..l);
        base_of.extend(0..l);
        Ok(DualProblem { cache: KernelCache::new(points, gamma, cache_mib), base_of, y, p })
    }

    pub fn n_slots(&self) -> usize {
        self.y.len()
    }

    /// Q_st, computed directly (no caching side effects).
    pub fn q_entry(&self, s: usize, t: usize) -> f64 {
        self.y[s] * self.y[t] * self.cache.entry(self.base_of[s], self.base_of[t])
    }

    /// Fill `out` with row s of Q across all slots.
    fn q_row_into(&mut self, s: usize, scratch: &mut [f64], out: &mut [f64]) {
        self.cache.row_into(self.base_of[s], scratch);
        for (t, o) in out.iter_mut().enumerate() {
            *o = self.y[s] * self.y[t] * scratch[self.base_of[t]];
        }
    }

    /// 1/2 a'Qa + p'a, evaluated densely. Intended for tests and oracles.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let n = self.n_slots();
        let mut acc = 0.0;
        for s in 0..n {
            if alpha[s] == 0.0 {
                acc += alpha[s] * self.p[s];
                continue;
            }
            let mut q = 0.0;
            for t in 0..n {
                if alpha[t] != 0.0 {
                    q += self.q_entry(s, t) * alpha[t];
                }
            }
            acc += 0.5 * alpha[s] * q + alpha[s] * self.p[s];
        }
        acc
    }
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

pub fn solve(problem: &mut DualProblem<'_>, params: &SmoParams) -> Result<SmoSolution, MlError> {
    params.validate()?;
    let n = problem.n_slots();
    let c = params.c;
    let mut alpha = vec![0.0f64; n];
    let mut grad = problem.p.clone();
    let mut scratch = vec![0.0f64; problem.cache.n()];
    let mut row_i = vec![0.0f64; n];
    let mut row_j = vec![0.0f64; n];
    let max_iter = params.max_passes.saturating_mul(n).max(1);
    let mut iterations = 0usize;

    let (m_up, m_low) = loop {
        // maximal violating pair bounds
        let mut m_up = f64::NEG_INFINITY;
        let mut m_low = f64::INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let v = -problem.y[t] * grad[t];
            if in_up(problem.y[t], alpha[t], c) && v > m_up {
                m_up = v;
                i_sel = t;
            }
            if in_low(problem.y[t], alpha[t], c) && v < m_low {
                m_low = v;
            }
        }
        if i_sel == usize::MAX || m_up - m_low <= params.tol || iterations >= max_iter {
            break (m_up, m_low);
        }
        let i = i_sel;
        problem.q_row_into(i, &mut scratch, &mut row_i);
        let qii = row_i[i];

        // second-order partner: maximize the pairwise objective decrease b^2/a
        let mut j_sel = usize::MAX;
        let mut best = 0.0f64;
        for t in 0..n {
            if !in_low(problem.y[t], alpha[t], c) {
                continue;
            }
            let v = -problem.y[t] * grad[t];
            if v >= m_up {
                continue;
            }
            let b = m_up - v;
            let qtt = problem.q_entry(t, t);
            let a = (qii + qtt - 2.0 * problem.y[i] * problem.y[t] * row_i[t]).max(TAU);
            let gain = b * b / a;
            if gain > best {
                best = gain;
                j_sel = t;
            }
        }
        if j_sel == usize::MAX {
            break (m_up, m_low);
        }
        let j = j_sel;
        problem.q_row_into(j, &mut scratch, &mut row_j);

        let ai_old = alpha[i];
        let aj_old = alpha[j];
        if problem.y[i] != problem.y[j] {
            let quad = (row_i[i] + row_j[j] + 2.0 * row_i[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let quad = (row_i[i] + row_j[j] - 2.0 * row_i[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }

        let d_i = alpha[i] - ai_old;
        let d_j = alpha[j] - aj_old;
        if d_i != 0.0 || d_j != 0.0 {
            for t in 0..n {
                grad[t] += row_i[t] * d_i + row_j[t] * d_j;
            }
        }
        iterations += 1;
    };

    let bias = match (m_up.is_finite(), m_low.is_finite()) {
        (true, true) => 0.5 * (m_up + m_low),
        (true, false) => m_up,
        (false, true) => m_low,
        (false, false) => 0.0,
    };
    // 1/2 a'Qa + p'a == 1/2 sum a_t (G_t + p_t), since G = Qa + p
    let mut objective = 0.0;
    for t in 0..n {
        objective += alpha[t] * (grad[t] + problem.p[t]);
    }
    objective *= 0.5;
    let gap = if m_up.is_finite() && m_low.is_finite() { m_up - m_low } else { 0.0 };
    Ok(SmoSolution { alpha, bias, objective, iterations, gap })
}

/// Per-point coefficients (upper minus lower multiplier) of an SVR solution.
pub fn svr_coefficients(solution: &SmoSolution) -> Vec<f64> {
    let l = solution.alpha.len() / 2;
    (0..l).map(|i| solution.alpha[i] - solution.alpha[i + l]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::kernel::rbf_kernel;

    fn tight(c: f64) -> SmoParams {
        SmoParams { tol: 1e-9, ..SmoParams::new(c) }
    }

    #[test]
    fn two_point_classification_matches_closed_form() {
        let points = alloc::vec![alloc::vec![0.0], alloc::vec![1.0]];
        let labels = [1.0, -1.0];
        let mut prob = DualProblem::svc(&points, &labels, 1.0, 16).unwrap();
        let sol = solve(&mut prob, &tight(10.0)).unwrap();
        // symmetric problem: a1 = a2 = 1/(1 - e^-1), zero bias
        let expect = 1.0 / (1.0 - (-1.0f64).exp());
        assert!((sol.alpha[0] - expect).abs() < 1e-6, "alpha {:?}", sol.alpha);
        assert!((sol.alpha[1] - expect).abs() < 1e-6);
        assert!(sol.bias.abs() < 1e-6, "bias {}", sol.bias);
        // objective at the optimum: a^2(1 - e^-1) - 2a = -1/(1 - e^-1)
        assert!((sol.objective + expect).abs() < 1e-9);
    }

    #[test]
    fn solution_satisfies_kkt_box_and_balance() {
        // small interleaved set that needs several working pairs
        let points: Vec<Vec<f64>> =
            [0.0, 0.4, 0.5, 0.9, 1.3, 1.4].iter().map(|&x| alloc::vec![x]).collect();
        let labels = [1.0, 1.0, -1.0, 1.0, -1.0, -1.0];
        let c = 5.0;
        let mut prob = DualProblem::svc(&points, &labels, 2.0, 16).unwrap();
        let sol = solve(&mut prob, &tight(c)).unwrap();
        let mut balance = 0.0;
        for (a, y) in sol.alpha.iter().zip(&labels) {
            assert!(*a >= -1e-12 && *a <= c + 1e-12);
            balance += a * y;
        }
        assert!(balance.abs() < 1e-8, "balance {balance}");
        assert!(sol.gap <= 1e-9);
        // final objective must beat the zero vector
        assert!(sol.objective < prob.objective(&alloc::vec![0.0; 6]));
    }

    #[test]
    fn constant_targets_regress_to_the_constant() {
        let points: Vec<Vec<f64>> = (0..5).map(|i| alloc::vec![i as f64 * 0.3]).collect();
        let targets = [7.0; 5];
        let mut prob = DualProblem::svr(&points, &targets, 1.0, 0.1, 16).unwrap();
        let sol = solve(&mut prob, &tight(10.0)).unwrap();
        let coef = svr_coefficients(&sol);
        assert!(coef.iter().all(|&a| a.abs() < 1e-12), "coef {coef:?}");
        // -y'G bounds collapse onto the constant
        assert!((sol.bias - 7.0).abs() < 1e-9, "bias {}", sol.bias);
    }

    #[test]
    fn regression_stays_inside_the_tube_on_easy_data() {
        let points: Vec<Vec<f64>> = (0..6).map(|i| alloc::vec![i as f64 * 0.25]).collect();
        let targets: Vec<f64> = (0..6).map(|i| 10.0 + 3.0 * i as f64).collect();
        let eps = 0.5;
        let mut prob = DualProblem::svr(&points, &targets, 0.8, eps, 16).unwrap();
        let sol = solve(&mut prob, &tight(1000.0)).unwrap();
        let coef = svr_coefficients(&sol);
        for (pt, &z) in points.iter().zip(&targets) {
            let mut g = sol.bias;
            for (sv, a) in points.iter().zip(&coef) {
                g += a * rbf_kernel(sv, pt, 0.8);
            }
            assert!((g - z).abs() <= eps + 1e-6, "pred {g} target {z}");
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let points: Vec<Vec<f64>> =
            (0..8).map(|i| alloc::vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()]).collect();
        let labels: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut p1 = DualProblem::svc(&points, &labels, 1.5, 16).unwrap();
        let s1 = solve(&mut p1, &tight(10.0)).unwrap();
        let mut p2 = DualProblem::svc(&points, &labels, 1.5, 16).unwrap();
        let s2 = solve(&mut p2, &tight(10.0)).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let points = alloc::vec![alloc::vec![0.0]];
        assert!(DualProblem::svc(&points, &[2.0], 1.0, 16).is_err());
        assert!(DualProblem::svc(&points, &[1.0, -1.0], 1.0, 16).is_err());
        assert!(DualProblem::svr(&points, &[1.0], 1.0, -0.5, 16).is_err());
        let mut prob = DualProblem::svc(&points, &[1.0], 1.0, 16).unwrap();
        assert!(solve(&mut prob, &SmoParams::new(0.0)).is_err());
    }
}
