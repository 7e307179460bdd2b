use serde::{Deserialize, Serialize};

use super::{check_problem, half_residual_energy, soft, Columns, SolveResult, SolverSettings};
use crate::error::{Error, Result};
use crate::model::{MeasurementMatrix, SplitComplexVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    #[serde(flatten)]
    pub settings: SolverSettings,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            settings: SolverSettings::default(),
        }
    }
}

/// `1/2 ||y - A x||^2 + lambda * sum_n |x_n|`
pub fn lasso_objective(
    a: &MeasurementMatrix,
    y: &SplitComplexVector,
    x: &SplitComplexVector,
    lambda: f64,
) -> f64 {
    let cols = Columns::new(a);
    let (r_re, r_im) = cols.residual(y, x.re.as_slice().unwrap(), x.im.as_slice().unwrap());
    half_residual_energy(&r_re, &r_im) + lambda * x.magnitudes().sum()
}

/// Complex LASSO by cyclic coordinate descent.
///
/// Each coordinate is minimized exactly: with `c = a_n^H r + ||a_n||^2 x_n`
/// the update is `soft(c, lambda) / ||a_n||^2`.
pub fn lasso_solve(
    a: &MeasurementMatrix,
    y: &SplitComplexVector,
    cfg: &LassoConfig,
) -> Result<SolveResult> {
    check_problem(a, y)?;
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda {} must be >= 0", cfg.lambda)));
    }
    let cols = Columns::new(a);
    let n = cols.cols;
    let energy: Vec<f64> = (0..n).map(|k| cols.energy(k)).collect();
    if let Some(k) = energy.iter().position(|&e| e == 0.0) {
        return Err(Error::ZeroColumn(k));
    }

    let mut x_re = vec![0.0; n];
    let mut x_im = vec![0.0; n];
    let mut r_re = y.re.to_vec();
    let mut r_im = y.im.to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.settings.max_iters {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for k in 0..n {
            let (g_re, g_im) = cols.inner(k, &r_re, &r_im);
            let c = (g_re + energy[k] * x_re[k], g_im + energy[k] * x_im[k]);
            let (s_re, s_im) = soft(c, cfg.lambda);
            let new = (s_re / energy[k], s_im / energy[k]);
            let d = (new.0 - x_re[k], new.1 - x_im[k]);
            if d != (0.0, 0.0) {
                cols.sub_scaled(k, d, &mut r_re, &mut r_im);
                x_re[k] = new.0;
                x_im[k] = new.1;
                max_change = max_change.max(d.0.hypot(d.1));
            }
        }
        if cfg.settings.track_objective {
            let l1: f64 = x_re.iter().zip(&x_im).map(|(r, i)| r.hypot(*i)).sum();
            trace.push(half_residual_energy(&r_re, &r_im) + cfg.lambda * l1);
        }
        if max_change < cfg.settings.tol {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        x: SplitComplexVector {
            re: x_re.into(),
            im: x_im.into(),
        },
        iterations,
        converged,
        diverged: false,
        objective_trace: trace,
    })
}
