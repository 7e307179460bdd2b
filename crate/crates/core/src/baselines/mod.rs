//! Classical support-recovery baselines on a fixed pilot matrix.
//!
//! All solvers work natively in complex arithmetic on split real/imaginary
//! storage. Estimates are turned into support decisions by a magnitude
//! threshold fitted on a calibration set (see [`support`]).

mod amp;
mod group;
mod lasso;
pub mod support;

pub use amp::{amp_solve, AmpConfig};
pub use group::{group_lasso_solve, sparse_group_lasso_solve, GroupSpec};
pub use lasso::{lasso_objective, lasso_solve, LassoConfig};
pub use support::{
    apply_support_threshold, fit_support_threshold, lambda_grid, select_lambda, support_extract,
    LambdaSelection, SupportThreshold,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::model::{MeasurementMatrix, SplitComplexVector};

/// Iteration budget and stopping rule shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Stop once the largest coordinate change of a sweep is below this.
    pub tol: f64,
    /// Record the objective after every sweep.
    pub track_objective: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            track_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: SplitComplexVector,
    pub iterations: usize,
    pub converged: bool,
    /// Set by AMP when the residual blows up.
    pub diverged: bool,
    /// Objective after each sweep, when tracking was requested.
    pub objective_trace: Vec<f64>,
}

/// Column-major copy of a pilot matrix for fast column access.
#[derive(Debug, Clone)]
pub(crate) struct Columns {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Columns {
    pub fn new(a: &MeasurementMatrix) -> Self {
        let (rows, cols) = (a.rows(), a.cols());
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for n in 0..cols {
            re.extend(a.re.column(n).iter());
            im.extend(a.im.column(n).iter());
        }
        Self { rows, cols, re, im }
    }

    pub fn col(&self, n: usize) -> (&[f64], &[f64]) {
        let span = n * self.rows..(n + 1) * self.rows;
        (&self.re[span.clone()], &self.im[span])
    }

    pub fn energy(&self, n: usize) -> f64 {
        let (re, im) = self.col(n);
        re.iter().chain(im).map(|v| v * v).sum()
    }

    /// `a_n^H r`
    pub fn inner(&self, n: usize, r_re: &[f64], r_im: &[f64]) -> (f64, f64) {
        let (a_re, a_im) = self.col(n);
        let mut acc_re = 0.0;
        let mut acc_im = 0.0;
        for l in 0..self.rows {
            acc_re += a_re[l] * r_re[l] + a_im[l] * r_im[l];
            acc_im += a_re[l] * r_im[l] - a_im[l] * r_re[l];
        }
        (acc_re, acc_im)
    }

    /// `r -= a_n * d`
    pub fn sub_scaled(&self, n: usize, d: (f64, f64), r_re: &mut [f64], r_im: &mut [f64]) {
        let (a_re, a_im) = self.col(n);
        for l in 0..self.rows {
            r_re[l] -= a_re[l] * d.0 - a_im[l] * d.1;
            r_im[l] -= a_re[l] * d.1 + a_im[l] * d.0;
        }
    }

    /// `y - A x`
    pub fn residual(&self, y: &SplitComplexVector, x_re: &[f64], x_im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r_re = y.re.to_vec();
        let mut r_im = y.im.to_vec();
        for n in 0..self.cols {
            if x_re[n] != 0.0 || x_im[n] != 0.0 {
                self.sub_scaled(n, (x_re[n], x_im[n]), &mut r_re, &mut r_im);
            }
        }
        (r_re, r_im)
    }
}

pub(crate) fn check_problem(a: &MeasurementMatrix, y: &SplitComplexVector) -> Result<()> {
    check_len("measurement vector", a.rows(), y.len())
}

/// Complex soft threshold: shrink the magnitude by `t`, keep the phase.
pub(crate) fn soft(z: (f64, f64), t: f64) -> (f64, f64) {
    if t == 0.0 {
        return z;
    }
    let mag = z.0.hypot(z.1);
    if mag <= t {
        (0.0, 0.0)
    } else {
        let k = 1.0 - t / mag;
        (z.0 * k, z.1 * k)
    }
}

pub(crate) fn half_residual_energy(r_re: &[f64], r_im: &[f64]) -> f64 {
    0.5 * r_re.iter().chain(r_im).map(|v| v * v).sum::<f64>()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::autoencoder::gaussian_pilots;
    use crate::datagen::gen_channel;
    use crate::model::complex_matvec;
    use ndarray::Array1;
    use rand::seq::index::sample;
    use rand::Rng;

    /// Random instance with exactly `k` active entries.
    pub fn instance<R: Rng>(
        l: usize,
        n: usize,
        k: usize,
        sigma2: f64,
        rng: &mut R,
    ) -> (MeasurementMatrix, SplitComplexVector, SplitComplexVector) {
        let a = gaussian_pilots(l, n, rng);
        let h = gen_channel(n, rng);
        let mut mask = Array1::zeros(n);
        for i in sample(rng, n, k) {
            mask[i] = 1.0;
        }
        let x = SplitComplexVector {
            re: &h.re * &mask,
            im: &h.im * &mask,
        };
        let mut y = complex_matvec(&a, &x).unwrap();
        if sigma2 > 0.0 {
            y = y.add(&crate::datagen::gen_noise(l, sigma2, rng).z).unwrap();
        }
        (a, x, y)
    }

    /// `L = N` matrix with orthogonal columns of norm `sqrt(L)` (the DFT).
    pub fn dft(n: usize) -> MeasurementMatrix {
        let mut a = MeasurementMatrix::zeros(n, n);
        for l in 0..n {
            for k in 0..n {
                let ang = -2.0 * std::f64::consts::PI * (l * k) as f64 / n as f64;
                a.re[[l, k]] = ang.cos();
                a.im[[l, k]] = ang.sin();
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_keeps_phase() {
        let (re, im) = soft((3.0, 4.0), 2.5);
        assert!((re - 1.5).abs() < 1e-15 && (im - 2.0).abs() < 1e-15);
        assert_eq!(soft((0.3, 0.4), 0.5), (0.0, 0.0));
        assert_eq!(soft((0.0, 0.0), 0.0), (0.0, 0.0));
        assert_eq!(soft((0.3, -0.4), 0.0), (0.3, -0.4));
    }
}
