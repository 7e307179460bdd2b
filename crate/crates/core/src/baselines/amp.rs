use serde::{Deserialize, Serialize};

use super::{check_problem, soft, Columns, SolveResult};
use crate::error::{Error, Result};
use crate::model::{MeasurementMatrix, SplitComplexVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpConfig {
    pub max_iters: usize,
    /// Weight of the previous estimate in each update, in `[0, 1)`.
    pub damping: f64,
    /// Threshold multiplier on the estimated effective noise level.
    pub theta: f64,
    /// Known measurement noise variance; floors the effective noise estimate.
    pub sigma2: f64,
    /// Stop once `||r_{t+1} - r_t|| <= tol * ||y||`.
    pub tol: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            damping: 0.0,
            theta: 1.1,
            sigma2: 0.0,
            tol: 1e-6,
        }
    }
}

const DIVERGENCE_FACTOR: f64 = 10.0;

/// Complex AMP with a soft-threshold denoiser.
///
/// Columns are normalized to unit norm for the iteration and the estimate
/// is mapped back to the original scale. The threshold at each iteration is
/// `theta * max(||r|| / sqrt(L), sigma)`.
pub fn amp_solve(a: &MeasurementMatrix, y: &SplitComplexVector, cfg: &AmpConfig) -> Result<SolveResult> {
    check_problem(a, y)?;
    if cfg.max_iters == 0 || !(0.0..1.0).contains(&cfg.damping) || !(cfg.theta >= 0.0) {
        return Err(Error::InvalidConfig(format!("invalid AMP configuration {cfg:?}")));
    }
    let mut cols = Columns::new(a);
    let (l, n) = (cols.rows, cols.cols);
    let mut scale = vec![0.0; n];
    for (k, s) in scale.iter_mut().enumerate() {
        let norm = cols.energy(k).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroColumn(k));
        }
        *s = norm;
        let span = k * l..(k + 1) * l;
        cols.re[span.clone()].iter_mut().for_each(|v| *v /= norm);
        cols.im[span].iter_mut().for_each(|v| *v /= norm);
    }

    let y_norm = y.norm_sqr().sqrt();
    let noise_floor = cfg.sigma2.max(0.0).sqrt();
    let ratio = n as f64 / l as f64;
    let mut x_re = vec![0.0; n];
    let mut x_im = vec![0.0; n];
    let mut r_re = y.re.to_vec();
    let mut r_im = y.im.to_vec();
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let r_norm = r_re.iter().chain(&r_im).map(|v| v * v).sum::<f64>().sqrt();
        let tau = cfg.theta * (r_norm / (l as f64).sqrt()).max(noise_floor);
        let mut div = 0.0;
        for k in 0..n {
            let (g_re, g_im) = cols.inner(k, &r_re, &r_im);
            let pseudo = (x_re[k] + g_re, x_im[k] + g_im);
            let mag = pseudo.0.hypot(pseudo.1);
            let est = soft(pseudo, tau);
            if mag > tau {
                div += 1.0 - tau / (2.0 * mag);
            }
            x_re[k] = cfg.damping * x_re[k] + (1.0 - cfg.damping) * est.0;
            x_im[k] = cfg.damping * x_im[k] + (1.0 - cfg.damping) * est.1;
        }
        let onsager = ratio * div / n as f64;
        let mut next_re: Vec<f64> = r_re.iter().map(|v| v * onsager).collect();
        let mut next_im: Vec<f64> = r_im.iter().map(|v| v * onsager).collect();
        for l_idx in 0..l {
            next_re[l_idx] += y.re[l_idx];
            next_im[l_idx] += y.im[l_idx];
        }
        for k in 0..n {
            if x_re[k] != 0.0 || x_im[k] != 0.0 {
                cols.sub_scaled(k, (x_re[k], x_im[k]), &mut next_re, &mut next_im);
            }
        }
        let change = next_re
            .iter()
            .zip(&r_re)
            .chain(next_im.iter().zip(&r_im))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        r_re = next_re;
        r_im = next_im;
        let next_norm = r_re.iter().chain(&r_im).map(|v| v * v).sum::<f64>().sqrt();
        if !next_norm.is_finite() || next_norm > DIVERGENCE_FACTOR * y_norm.max(f64::MIN_POSITIVE) {
            diverged = true;
            break;
        }
        if change <= cfg.tol * y_norm {
            converged = true;
            break;
        }
    }

    let x = SplitComplexVector {
        re: x_re.iter().zip(&scale).map(|(v, s)| v / s).collect(),
        im: x_im.iter().zip(&scale).map(|(v, s)| v / s).collect(),
    };
    Ok(SolveResult {
        x,
        iterations,
        converged,
        diverged,
        objective_trace: Vec::new(),
    })
}
