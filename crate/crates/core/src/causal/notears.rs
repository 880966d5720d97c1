use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::owlqn::{self, OwlqnOptions};
use super::{acyclicity, threshold_to_dag, CausalGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NotearsConfig {
    pub lambda1: f64,
    pub h_tol: f64,
    pub rho_init: f64,
    pub rho_mult: f64,
    pub rho_max: f64,
    pub inner_max_iter: usize,
    pub edge_threshold: f64,
    pub max_outer: usize,
}

impl Default for NotearsConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            h_tol: 1e-8,
            rho_init: 1.0,
            rho_mult: 10.0,
            rho_max: 1e16,
            inner_max_iter: 100,
            edge_threshold: 0.3,
            max_outer: 100,
        }
    }
}

impl NotearsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda1", self.lambda1),
            ("h_tol", self.h_tol),
            ("rho_init", self.rho_init),
            ("rho_max", self.rho_max),
            ("edge_threshold", self.edge_threshold),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(format!("notears.{key}"), "must be positive"));
            }
        }
        if !(self.rho_mult > 1.0) {
            return Err(Error::config("notears.rho_mult", "must exceed 1"));
        }
        if self.inner_max_iter == 0 || self.max_outer == 0 {
            return Err(Error::config("notears", "iteration limits must be positive"));
        }
        Ok(())
    }
}

/// Smooth part of the augmented Lagrangian,
/// `½n⁻¹‖X − XW‖²_F + ½ρh² + αh`, and its gradient, with `gram = XᵀX`.
/// The L1 term is left to the optimizer.
pub fn notears_objective(
    gram: &DMatrix<f64>,
    n: usize,
    w: &DMatrix<f64>,
    rho: f64,
    alpha: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let f = w.nrows();
    let resid = DMatrix::<f64>::identity(f, f) - w;
    let gr = gram * &resid;
    let loss = 0.5 / n as f64 * resid.component_mul(&gr).sum();
    let loss_grad = gr * (-1.0 / n as f64);
    let (h, h_grad) = acyclicity(w)?;
    let value = loss + 0.5 * rho * h * h + alpha * h;
    let grad = loss_grad + h_grad * (rho * h + alpha);
    Ok((value, grad))
}

fn to_matrix(x: &[f64], f: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(f, f, x)
}

fn to_vec(w: &DMatrix<f64>) -> Vec<f64> {
    w.transpose().iter().copied().collect()
}

/// Linear NOTEARS: augmented Lagrangian outer loop, OWL-QN inner solver.
/// Columns are centered; scaling is the caller's choice.
pub fn fit_notears(x: &DMatrix<f64>, cluster_id: usize, cfg: &NotearsConfig) -> Result<CausalGraph> {
    cfg.validate()?;
    let (n, f) = x.shape();
    if n < 2 {
        return Err(Error::TooFewStates { needed: 2, got: n });
    }
    if n < f {
        warn!("cluster {cluster_id}: {n} samples for {f} features; structure will be unreliable");
    }
    let mut centered = x.clone();
    for j in 0..f {
        let col = centered.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        if var == 0.0 {
            return Err(Error::DegenerateInput(j));
        }
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let gram = centered.transpose() * &centered;

    let free: Vec<bool> = (0..f * f).map(|k| k / f != k % f).collect();
    let opts = OwlqnOptions {
        l1: cfg.lambda1,
        max_iter: cfg.inner_max_iter,
        pg_tol: 1e-7,
        f_tol: 1e-12,
        ..Default::default()
    };

    let mut w_est = vec![0.0; f * f];
    let mut rho = cfg.rho_init;
    let mut alpha = 0.0;
    let mut h = f64::INFINITY;
    let mut converged = false;
    for _ in 0..cfg.max_outer {
        let mut candidate = (w_est.clone(), h);
        while rho < cfg.rho_max {
            let objective = |v: &[f64]| {
                notears_objective(&gram, n, &to_matrix(v, f), rho, alpha)
                    .ok()
                    .map(|(val, g)| (val, to_vec(&g)))
            };
            let result = owlqn::minimize(objective, w_est.clone(), &free, &opts);
            let h_new = acyclicity(&to_matrix(&result.x, f))?.0;
            candidate = (result.x, h_new);
            if h_new > 0.25 * h {
                rho *= cfg.rho_mult;
            } else {
                break;
            }
        }
        w_est = candidate.0;
        h = candidate.1;
        alpha += rho * h;
        if h <= cfg.h_tol {
            converged = true;
            break;
        }
        if rho >= cfg.rho_max {
            break;
        }
    }
    if !converged {
        warn!("cluster {cluster_id}: NOTEARS stopped with h = {h:e} > {:e}", cfg.h_tol);
    }
    let raw_w = to_matrix(&w_est, f);
    let w = threshold_to_dag(&raw_w, cfg.edge_threshold);
    Ok(CausalGraph::from_weights(cluster_id, w, raw_w, h, converged))
}
