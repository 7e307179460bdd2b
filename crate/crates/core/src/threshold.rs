//! Hard thresholding of soft support scores, the per-entry error rate, and
//! grid calibration of the threshold.

use std::io::Write;

use ndarray::Array1;

use crate::autoencoder::{decoder_forward, DecoderParams};
use crate::error::{check_len, Error, Result};
use crate::model::SplitComplexVector;

/// `alpha_hat[n] = 1` iff `alpha_tilde[n] >= r`.
pub fn hard_threshold(alpha_tilde: &[f64], r: f64) -> Vec<u8> {
    alpha_tilde.iter().map(|&v| u8::from(v >= r)).collect()
}

/// Mean per-entry disagreement between estimated and true supports.
pub fn error_rate<A, B>(alpha_hat: &[A], alpha: &[B]) -> Result<f64>
where
    A: AsRef<[u8]>,
    B: AsRef<[u8]>,
{
    check_len("error_rate batch", alpha.len(), alpha_hat.len())?;
    if alpha.is_empty() {
        return Err(Error::InvalidInput("error rate of an empty batch".into()));
    }
    let mut wrong = 0usize;
    let mut total = 0usize;
    for (est, truth) in alpha_hat.iter().zip(alpha) {
        let (est, truth) = (est.as_ref(), truth.as_ref());
        check_len("error_rate sample", truth.len(), est.len())?;
        for (&e, &t) in est.iter().zip(truth) {
            if e > 1 || t > 1 {
                return Err(Error::InvalidInput(format!("non-binary support entry ({e}, {t})")));
            }
            wrong += usize::from(e != t);
        }
        total += truth.len();
    }
    Ok(wrong as f64 / total as f64)
}

/// The calibration grid `{0.01, 0.02, ..., 0.99}`.
pub fn threshold_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCalibration {
    pub r_star: f64,
    pub pe_star: f64,
    /// `(r, P_E(r))` for every grid point.
    pub grid: Vec<(f64, f64)>,
}

impl ThresholdCalibration {
    /// CSV with one `(r, P_E)` row per grid point and a trailing
    /// `r_star,pe_star` summary row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,P_E")?;
        for (r, pe) in &self.grid {
            writeln!(w, "{r},{pe}")?;
        }
        writeln!(w, "r_star,pe_star")?;
        writeln!(w, "{},{}", self.r_star, self.pe_star)?;
        Ok(())
    }
}

/// Pick `r` on [`threshold_grid`] minimizing the error rate of
/// `hard_threshold(alpha_tilde, r)` against `alpha`; ties go to the smallest `r`.
pub fn calibrate_threshold(alpha_tilde: &[Array1<f64>], alpha: &[Vec<u8>]) -> Result<ThresholdCalibration> {
    check_len("calibration labels", alpha_tilde.len(), alpha.len())?;
    if alpha.is_empty() {
        return Err(Error::InvalidInput("calibration set is empty".into()));
    }
    let grid = threshold_grid();
    // Errors at r = missed actives below r plus inactives at or above r.
    // Bucket every score by the number of grid points it reaches.
    let mut active_reach = vec![0usize; grid.len() + 1];
    let mut inactive_reach = vec![0usize; grid.len() + 1];
    let mut actives = 0usize;
    let mut total = 0usize;
    for (scores, labels) in alpha_tilde.iter().zip(alpha) {
        check_len("calibration sample", labels.len(), scores.len())?;
        for (&s, &t) in scores.iter().zip(labels) {
            if t > 1 {
                return Err(Error::InvalidInput(format!("non-binary label {t}")));
            }
            let reach = grid.partition_point(|&r| s >= r);
            if t == 1 {
                active_reach[reach] += 1;
                actives += 1;
            } else {
                inactive_reach[reach] += 1;
            }
            total += 1;
        }
    }
    // at grid index k, a score is predicted active iff reach > k
    let mut evaluated = Vec::with_capacity(grid.len());
    let mut missed = 0usize;
    let mut inactive_on = total - actives;
    for (k, &r) in grid.iter().enumerate() {
        missed += active_reach[k];
        inactive_on -= inactive_reach[k];
        evaluated.push((r, (missed + inactive_on) as f64 / total as f64));
    }
    let (r_star, pe_star) = evaluated
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(ThresholdCalibration {
        r_star,
        pe_star,
        grid: evaluated,
    })
}

/// End-to-end inference: decoder followed by the hard threshold.
pub fn detect(w: &DecoderParams, r: f64, y: &SplitComplexVector) -> Result<Vec<u8>> {
    let (alpha_tilde, _) = decoder_forward(w, y)?;
    Ok(hard_threshold(alpha_tilde.as_slice().unwrap(), r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_channel, stream_rng};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    /// Direct per-r recomputation used as the calibration oracle.
    fn brute_force_grid(scores: &[Array1<f64>], labels: &[Vec<u8>]) -> Vec<(f64, f64)> {
        threshold_grid()
            .into_iter()
            .map(|r| {
                let est: Vec<Vec<u8>> = scores
                    .iter()
                    .map(|s| s.iter().map(|&v| u8::from(v >= r)).collect())
                    .collect();
                let mut wrong = 0;
                let mut total = 0;
                for (e, t) in est.iter().zip(labels) {
                    for (a, b) in e.iter().zip(t) {
                        wrong += usize::from(a != b);
                        total += 1;
                    }
                }
                (r, wrong as f64 / total as f64)
            })
            .collect()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(hard_threshold(&[0.0, 0.3, 1.0], 0.0), vec![1, 1, 1]);
        assert_eq!(hard_threshold(&[0.2, 0.8, 0.5], 0.5), vec![0, 1, 1]);
    }

    #[test]
    fn threshold_matches_loop() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let v: Vec<f64> = (0..30).map(|_| rng.gen()).collect();
            let r: f64 = rng.gen();
            let out = hard_threshold(&v, r);
            for k in 0..30 {
                assert_eq!(out[k] == 1, v[k] >= r);
            }
        }
    }

    #[test]
    fn error_rate_examples() {
        let a = vec![vec![1u8, 0, 1, 0]];
        assert_eq!(error_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(error_rate(&[vec![1u8, 1, 1, 0]], &a).unwrap(), 0.25);
        assert!(matches!(error_rate(&[vec![2u8, 1, 1, 0]], &a), Err(Error::InvalidInput(_))));
        assert!(error_rate(&[vec![1u8, 1]], &a).is_err());
    }

    #[test]
    fn error_rate_matches_hamming() {
        let mut rng = stream_rng(2, 0);
        let n = 17;
        let est: Vec<Vec<u8>> = (0..100).map(|_| (0..n).map(|_| rng.gen_range(0..2)).collect()).collect();
        let truth: Vec<Vec<u8>> = (0..100).map(|_| (0..n).map(|_| rng.gen_range(0..2)).collect()).collect();
        let hamming: usize = est
            .iter()
            .zip(&truth)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
            .sum();
        let expected = hamming as f64 / (n * 100) as f64;
        assert_eq!(error_rate(&est, &truth).unwrap(), expected);
    }

    #[test]
    fn separable_scores_give_zero_error_at_first_tie() {
        let labels = vec![vec![1u8, 0, 0, 1], vec![0, 0, 1, 0]];
        let scores: Vec<Array1<f64>> = labels
            .iter()
            .map(|l| l.iter().map(|&a| if a == 1 { 0.9 } else { 0.1 }).collect())
            .collect();
        let cal = calibrate_threshold(&scores, &labels).unwrap();
        assert_eq!(cal.pe_star, 0.0);
        assert_eq!(cal.r_star, 0.11);
    }

    #[test]
    fn all_inactive_prefers_top_of_grid() {
        let mut rng = stream_rng(3, 0);
        let labels = vec![vec![0u8; 20]; 200];
        let scores: Vec<Array1<f64>> = (0..200).map(|_| (0..20).map(|_| rng.gen::<f64>()).collect()).collect();
        let cal = calibrate_threshold(&scores, &labels).unwrap();
        let oracle = brute_force_grid(&scores, &labels);
        let best = oracle.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        assert_eq!(cal.pe_star, best);
        assert!(cal.r_star >= 0.98, "r* = {}", cal.r_star);
    }

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = stream_rng(4, 0);
        let labels: Vec<Vec<u8>> = (0..300).map(|_| (0..12).map(|_| u8::from(rng.gen_bool(0.2))).collect()).collect();
        let scores: Vec<Array1<f64>> = labels
            .iter()
            .map(|l| {
                l.iter()
                    .map(|&a| (0.35 * f64::from(a) + rng.gen::<f64>() * 0.7).min(1.0))
                    .collect()
            })
            .collect();
        // include scores exactly on grid points
        let mut scores = scores;
        scores[0][0] = 0.5;
        scores[1][3] = 0.01;
        let cal = calibrate_threshold(&scores, &labels).unwrap();
        let oracle = brute_force_grid(&scores, &labels);
        assert_eq!(cal.grid, oracle);
        for &(r, pe) in &cal.grid {
            let est: Vec<Vec<u8>> = scores.iter().map(|s| hard_threshold(s.as_slice().unwrap(), r)).collect();
            assert_eq!(error_rate(&est, &labels).unwrap(), pe);
        }
        let min = oracle.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let first = oracle.iter().find(|p| p.1 == min).unwrap();
        assert_eq!((cal.r_star, cal.pe_star), *first);
        assert!(cal.pe_star <= oracle[49].1);
    }

    #[test]
    fn csv_report_layout() {
        let cal = calibrate_threshold(&[array![0.2, 0.7]], &[vec![0, 1]]).unwrap();
        let mut out = Vec::new();
        cal.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "r,P_E");
        assert_eq!(lines.len(), 1 + 99 + 2);
        assert_eq!(lines[100], "r_star,pe_star");
        assert_eq!(lines[101], "0.21,0");
    }

    #[test]
    fn detect_composes_decoder_and_threshold() {
        let mut rng = stream_rng(5, 0);
        let w0 = DecoderParams::zeros(3, 4, 6);
        let y = gen_channel(3, &mut rng);
        assert_eq!(detect(&w0, 0.5, &y).unwrap(), vec![1; 6]);
        for _ in 0..100 {
            let w = DecoderParams::init(3, 4, 6, &mut rng);
            let y = gen_channel(3, &mut rng);
            let r: f64 = rng.gen();
            let (soft, _) = decoder_forward(&w, &y).unwrap();
            assert_eq!(detect(&w, r, &y).unwrap(), hard_threshold(soft.as_slice().unwrap(), r));
        }
    }

    proptest! {
        #[test]
        fn positives_shrink_as_threshold_grows(scores in prop::collection::vec(0.0f64..=1.0, 1..50), r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let count = |r| hard_threshold(&scores, r).iter().map(|&v| v as usize).sum::<usize>();
            prop_assert!(count(hi) <= count(lo));
        }
    }
}
