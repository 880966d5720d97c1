//! Orthant-wise limited-memory quasi-Newton (OWL-QN) for
//! `min f(x) + λ‖x‖₁` with smooth `f`, plus a mask of coordinates pinned
//! at zero.

use std::collections::VecDeque;

use crate::linalg::dot;

#[derive(Debug, Clone)]
pub struct OwlqnOptions {
    pub l1: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the pseudo-gradient's max-norm falls below this.
    pub pg_tol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub f_tol: f64,
}

impl Default for OwlqnOptions {
    fn default() -> Self {
        Self { l1: 0.0, max_iter: 100, memory: 10, pg_tol: 1e-6, f_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct OwlqnResult {
    pub x: Vec<f64>,
    /// Full objective including the L1 term.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn pseudo_gradient(x: &[f64], g: &[f64], l1: f64, free: &[bool]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(free)
        .map(|((&xi, &gi), &f)| {
            if !f {
                0.0
            } else if xi > 0.0 {
                gi + l1
            } else if xi < 0.0 {
                gi - l1
            } else if gi + l1 < 0.0 {
                gi + l1
            } else if gi - l1 > 0.0 {
                gi - l1
            } else {
                0.0
            }
        })
        .collect()
}

fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Minimizes `smooth(x) + l1·‖x‖₁`. `smooth` returns `None` when the point
/// is outside its domain (for example an overflowing exponential); the line
/// search then backtracks.
pub fn minimize<F>(mut smooth: F, x0: Vec<f64>, free: &[bool], opts: &OwlqnOptions) -> OwlqnResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x: Vec<f64> = x0.iter().zip(free).map(|(&v, &f)| if f { v } else { 0.0 }).collect();
    let (mut fx, mut g) = smooth(&x).expect("objective must be finite at the starting point");
    let mut value = fx + opts.l1 * l1_norm(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let pg = pseudo_gradient(&x, &g, opts.l1, free);
        let pg_inf = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_inf < opts.pg_tol {
            converged = true;
            break;
        }

        // Two-loop recursion on the pseudo-gradient.
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        for i in 0..n {
            if !free[i] || d[i] * pg[i] >= 0.0 {
                d[i] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            d = pg.iter().map(|v| -v).collect();
            history.clear();
        }
        let orthant: Vec<f64> = (0..n)
            .map(|i| if x[i] != 0.0 { x[i].signum() } else { -pg[i].signum() })
            .collect();

        let mut step = if history.is_empty() { 1.0 / dot(&pg, &pg).sqrt().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..n)
                .map(|i| {
                    let v = x[i] + step * d[i];
                    if v * orthant[i] <= 0.0 { 0.0 } else { v }
                })
                .collect();
            if let Some((ft, gt)) = smooth(&trial) {
                let vt = ft + opts.l1 * l1_norm(&trial);
                let decrease: f64 = (0..n).map(|i| pg[i] * (trial[i] - x[i])).sum();
                if vt.is_finite() && vt <= value + 1e-4 * decrease {
                    accepted = Some((trial, ft, gt, vt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new, v_new)) = accepted else {
            // No descent possible along the quasi-Newton direction.
            converged = pg_inf < opts.pg_tol * 1e3;
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let rel = (value - v_new) / value.abs().max(v_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        value = v_new;
        if rel < opts.f_tol {
            converged = true;
            break;
        }
    }
    let _ = fx;
    OwlqnResult { x, value, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_quadratic_reaches_minimum() {
        // f(x) = Σ (i+1)(x_i - 1)²
        let r = minimize(
            |x| {
                let f = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 1.0).powi(2)).sum();
                let g = x.iter().enumerate().map(|(i, v)| 2.0 * (i + 1) as f64 * (v - 1.0)).collect();
                Some((f, g))
            },
            vec![0.0; 4],
            &[true; 4],
            &OwlqnOptions { max_iter: 200, ..Default::default() },
        );
        assert!(r.converged);
        for v in r.x {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lasso_soft_thresholds() {
        // ½(x - c)² + λ|x| has the closed form sign(c)·max(|c| - λ, 0).
        let c = [3.0, -0.5, 0.2, -2.0];
        let lambda = 1.0;
        let r = minimize(
            |x| {
                let f = x.iter().zip(&c).map(|(v, ci)| 0.5 * (v - ci).powi(2)).sum();
                let g = x.iter().zip(&c).map(|(v, ci)| v - ci).collect();
                Some((f, g))
            },
            vec![0.0; 4],
            &[true; 4],
            &OwlqnOptions { l1: lambda, max_iter: 200, ..Default::default() },
        );
        let expected = [2.0, 0.0, 0.0, -1.0];
        for (v, e) in r.x.iter().zip(expected) {
            assert!((v - e).abs() < 1e-6, "{v} vs {e}");
        }
    }

    #[test]
    fn pinned_coordinates_stay_zero() {
        let r = minimize(
            |x| Some((x.iter().map(|v| (v - 5.0).powi(2)).sum(), x.iter().map(|v| 2.0 * (v - 5.0)).collect())),
            vec![1.0, 1.0],
            &[true, false],
            &OwlqnOptions::default(),
        );
        assert_eq!(r.x[1], 0.0);
        assert!((r.x[0] - 5.0).abs() < 1e-6);
    }
}
