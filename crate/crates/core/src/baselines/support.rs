//! Turning baseline estimates into support decisions, and choosing the
//! regularization weight that minimizes the resulting error rate.

use crate::error::{check_len, Error, Result};
use crate::model::{MeasurementMatrix, SplitComplexVector};

/// Number of quantile steps in the magnitude threshold grid.
const QUANTILE_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportThreshold {
    /// Entries with magnitude strictly above `tau` are declared active.
    pub tau: f64,
    pub error_rate: f64,
}

pub fn apply_support_threshold(x_hat: &SplitComplexVector, tau: f64) -> Vec<u8> {
    (0..x_hat.len()).map(|k| u8::from(x_hat.magnitude(k) > tau)).collect()
}

/// Candidate thresholds: the `k / 200` quantiles of the observed magnitudes.
pub fn magnitude_grid(sorted_mags: &[f64]) -> Vec<f64> {
    if sorted_mags.is_empty() {
        return vec![0.0];
    }
    let last = sorted_mags.len() - 1;
    let mut grid: Vec<f64> = (0..=QUANTILE_STEPS)
        .map(|k| sorted_mags[(k * last + QUANTILE_STEPS / 2) / QUANTILE_STEPS])
        .collect();
    grid.dedup();
    grid
}

/// Fit `tau` on a calibration set of estimates and true supports; ties go to
/// the smallest `tau`.
pub fn fit_support_threshold(estimates: &[SplitComplexVector], alpha: &[Vec<u8>]) -> Result<SupportThreshold> {
    check_len("support calibration labels", estimates.len(), alpha.len())?;
    if estimates.is_empty() {
        return Err(Error::InvalidInput("support calibration set is empty".into()));
    }
    let mut active = Vec::new();
    let mut inactive = Vec::new();
    for (x, labels) in estimates.iter().zip(alpha) {
        check_len("support calibration sample", labels.len(), x.len())?;
        for (k, &t) in labels.iter().enumerate() {
            match t {
                0 => inactive.push(x.magnitude(k)),
                1 => active.push(x.magnitude(k)),
                _ => return Err(Error::InvalidInput(format!("non-binary label {t}"))),
            }
        }
    }
    let total = (active.len() + inactive.len()) as f64;
    active.sort_by(f64::total_cmp);
    inactive.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = active.iter().chain(&inactive).copied().collect();
    all.sort_by(f64::total_cmp);

    let mut best = SupportThreshold {
        tau: f64::NAN,
        error_rate: f64::INFINITY,
    };
    for tau in magnitude_grid(&all) {
        let missed = active.partition_point(|&m| m <= tau);
        let false_alarms = inactive.len() - inactive.partition_point(|&m| m <= tau);
        let rate = (missed + false_alarms) as f64 / total;
        if rate < best.error_rate {
            best = SupportThreshold { tau, error_rate: rate };
        }
    }
    Ok(best)
}

/// Fit the magnitude threshold on `calibration` and apply it to `x_hat`.
pub fn support_extract(
    x_hat: &SplitComplexVector,
    calibration: &[(SplitComplexVector, Vec<u8>)],
) -> Result<(f64, Vec<u8>)> {
    let (est, labels): (Vec<_>, Vec<_>) = calibration.iter().cloned().unzip();
    let fit = fit_support_threshold(&est, &labels)?;
    Ok((fit.tau, apply_support_threshold(x_hat, fit.tau)))
}

/// `points` log-spaced weights over `[0.01, 1] * mean ||A^H y||_inf`.
pub fn lambda_grid(a: &MeasurementMatrix, ys: &[SplitComplexVector], points: usize) -> Result<Vec<f64>> {
    if ys.is_empty() || points == 0 {
        return Err(Error::InvalidInput("lambda grid needs measurements and points".into()));
    }
    let mut reference = 0.0;
    for y in ys {
        reference += a.adjoint_matvec(y)?.magnitudes().iter().fold(0.0, |m: f64, &v| m.max(v));
    }
    reference /= ys.len() as f64;
    let (lo, hi) = (0.01f64.ln(), 0.0f64);
    Ok((0..points)
        .map(|i| {
            let t = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
            reference * (lo + t * (hi - lo)).exp()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub threshold: SupportThreshold,
    /// `(lambda, calibration error rate)` for every grid point, ascending.
    pub table: Vec<(f64, f64)>,
}

/// Choose the weight whose estimates, after a fitted magnitude threshold,
/// give the lowest calibration error rate. Ties go to the larger weight.
pub fn select_lambda<F>(
    grid: &[f64],
    ys: &[SplitComplexVector],
    alpha: &[Vec<u8>],
    mut solve: F,
) -> Result<LambdaSelection>
where
    F: FnMut(f64, &SplitComplexVector) -> Result<SplitComplexVector>,
{
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    check_len("lambda selection labels", ys.len(), alpha.len())?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut table = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, SupportThreshold)> = None;
    for &lambda in &sorted {
        let estimates = ys.iter().map(|y| solve(lambda, y)).collect::<Result<Vec<_>>>()?;
        let fit = fit_support_threshold(&estimates, alpha)?;
        table.push((lambda, fit.error_rate));
        if best.map_or(true, |(_, b)| fit.error_rate <= b.error_rate) {
            best = Some((lambda, fit));
        }
    }
    let (lambda, threshold) = best.unwrap();
    Ok(LambdaSelection {
        lambda,
        threshold,
        table,
    })
}
