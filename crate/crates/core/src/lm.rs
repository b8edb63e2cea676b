//! Bounded Levenberg–Marquardt least squares.
//!
//! Damping is multiplied by 10 after a rejected step and divided by 10
//! after an accepted one. The iteration stops when an accepted step changes
//! the cost by less than `rel_tol` relative, or after `max_iter` Jacobian
//! evaluations. Columns of the Jacobian are normalized before solving, so
//! parameters of very different magnitude (eV positions next to μeV widths)
//! are handled uniformly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Jacobian `∂r_i/∂p_j`; the default uses central differences with
    /// steps from [`Problem::fd_step`].
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        fd_jacobian(self, p, jac);
    }

    /// Central-difference step; override for parameters far from unit scale.
    fn fd_step(&self, _index: usize, value: f64) -> f64 {
        1e-6 * value.abs().max(1.0)
    }
}

pub fn fd_jacobian<P: Problem + ?Sized>(problem: &P, p: &[f64], jac: &mut DMatrix<f64>) {
    let m = problem.n_residuals();
    let mut q = p.to_vec();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for j in 0..p.len() {
        let h = problem.fd_step(j, p[j]);
        q[j] = p[j] + h;
        problem.residuals(&q, &mut rp);
        q[j] = p[j] - h;
        problem.residuals(&q, &mut rm);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub initial_damping: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-10, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub params: Vec<f64>,
    /// `½·Σ r²` at the solution.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `s²·(JᵀJ)⁻¹` with `s² = Σr²/(m − n)`; pseudo-inverse when singular.
    pub covariance: Vec<Vec<f64>>,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

impl Solution {
    pub fn std_dev(&self, k: usize) -> f64 {
        self.covariance[k][k].max(0.0).sqrt()
    }

    pub fn rms_residual(&self, m: usize) -> f64 {
        (2.0 * self.cost / m as f64).sqrt()
    }
}

/// Minimize `½‖r(p)‖²` from `p0` with `p` clamped to `bounds`.
pub fn minimize<P: Problem + ?Sized>(problem: &P, p0: &[f64], bounds: &[(f64, f64)], opts: &Options) -> Result<Solution> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if p0.len() != n || bounds.len() != n {
        return Err(Error::Internal(format!("parameter count mismatch: {} / {} / {n}", p0.len(), bounds.len())));
    }
    if m < n {
        return Err(Error::DegenerateFit(format!("{m} residuals cannot determine {n} parameters")));
    }
    let clamp = |p: &mut [f64]| {
        for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut p = p0.to_vec();
    clamp(&mut p);
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut cost = half_norm2(&r);
    if !cost.is_finite() {
        return Err(Error::DegenerateFit("non-finite residuals at the initial point".into()));
    }
    let mut history = vec![cost];
    let mut lambda = opts.initial_damping;
    let mut jac = DMatrix::zeros(m, n);
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        problem.jacobian(&p, &mut jac);
        let (a, g, scale) = scaled_normal_equations(&jac, &r);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut lhs = a.clone();
            for k in 0..n {
                lhs[(k, k)] += lambda;
            }
            let Some(step) = solve_spd(lhs, &g) else {
                lambda *= 10.0;
                continue;
            };
            for k in 0..n {
                trial[k] = p[k] - step[k] / scale[k];
            }
            clamp(&mut trial);
            problem.residuals(&trial, &mut r_trial);
            let c = half_norm2(&r_trial);
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost;
                p.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                cost = c;
                history.push(c);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < opts.rel_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
    }

    problem.jacobian(&p, &mut jac);
    let covariance = covariance(&jac, cost, m, n);
    Ok(Solution { params: p, cost, iterations, converged, covariance, cost_history: history })
}

fn half_norm2(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// `JsᵀJs` and `Jsᵀr` for the column-normalized Jacobian, plus the norms.
fn scaled_normal_equations(jac: &DMatrix<f64>, r: &[f64]) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
    let n = jac.ncols();
    let scale: Vec<f64> = (0..n)
        .map(|k| {
            let c = jac.column(k).norm();
            if c > 0.0 {
                c
            } else {
                1.0
            }
        })
        .collect();
    let mut js = jac.clone();
    for (k, s) in scale.iter().enumerate() {
        js.column_mut(k).scale_mut(1.0 / s);
    }
    let a = js.transpose() * &js;
    let g = js.transpose() * DVector::from_column_slice(r);
    (a, g, scale)
}

fn solve_spd(lhs: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let x = match lhs.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => lhs.lu().solve(rhs)?,
    };
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn covariance(jac: &DMatrix<f64>, cost: f64, m: usize, n: usize) -> Vec<Vec<f64>> {
    let dof = (m - n).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let (a, _, scale) = scaled_normal_equations(jac, &vec![0.0; m]);
    let inv = a
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| a.svd(true, true).pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::zeros(n, n)));
    (0..n).map(|i| (0..n).map(|j| s2 * inv[(i, j)] / (scale[i] * scale[j])).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for Exp {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for ((o, t), y) in out.iter_mut().zip(&self.t).zip(&self.y) {
                *o = p[0] * (-p[1] * t).exp() - y;
            }
        }
    }

    fn unbounded(n: usize) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); n]
    }

    #[test]
    fn fits_exponential() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let prob = Exp { t, y };
        let s = minimize(&prob, &[1.0, 0.1], &unbounded(2), &Options::default()).unwrap();
        assert!(s.converged);
        assert!((s.params[0] - 3.0).abs() < 1e-8 && (s.params[1] - 0.7).abs() < 1e-8, "{:?}", s.params);
        assert!(s.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_bounds() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let prob = Exp { t, y };
        let s = minimize(&prob, &[1.0, 0.1], &[(0.0, 10.0), (0.0, 0.5)], &Options::default()).unwrap();
        assert!(s.params[1] <= 0.5);
    }

    #[test]
    fn linear_covariance_matches_closed_form() {
        // y = a + b t with known residual pattern
        struct Line(Vec<f64>, Vec<f64>);
        impl Problem for Line {
            fn n_params(&self) -> usize {
                2
            }
            fn n_residuals(&self) -> usize {
                self.0.len()
            }
            fn residuals(&self, p: &[f64], out: &mut [f64]) {
                for ((o, t), y) in out.iter_mut().zip(&self.0).zip(&self.1) {
                    *o = p[0] + p[1] * t - y;
                }
            }
        }
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let y: Vec<f64> = t.iter().enumerate().map(|(k, t)| 1.0 + 2.0 * t + if k % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let s = minimize(&Line(t.clone(), y), &[0.0, 0.0], &unbounded(2), &Options::default()).unwrap();
        let n = t.len() as f64;
        let mt = t.iter().sum::<f64>() / n;
        let sxx: f64 = t.iter().map(|v| (v - mt) * (v - mt)).sum();
        let s2 = 2.0 * s.cost / (n - 2.0);
        assert!((s.covariance[1][1] / (s2 / sxx) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn underdetermined_is_degenerate() {
        let prob = Exp { t: vec![1.0], y: vec![1.0] };
        assert!(matches!(minimize(&prob, &[1.0, 1.0], &unbounded(2), &Options::default()), Err(Error::DegenerateFit(_))));
    }
}
