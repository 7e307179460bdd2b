use serde::{Deserialize, Serialize};

use super::{check_problem, half_residual_energy, soft, Columns, SolveResult, SolverSettings};
use crate::error::{Error, Result};
use crate::model::{MeasurementMatrix, SplitComplexVector};

/// Contiguous equal-size device groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group_size: usize,
    pub group_count: usize,
}

impl GroupSpec {
    pub fn new(group_size: usize, group_count: usize) -> Self {
        Self {
            group_size,
            group_count,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.group_size == 0 || self.group_size * self.group_count != n {
            return Err(Error::InvalidConfig(format!(
                "{} groups of {} do not cover N = {n}",
                self.group_count, self.group_size
            )));
        }
        Ok(())
    }

    /// Group index of device `n`.
    pub fn group_of(&self, n: usize) -> usize {
        n / self.group_size
    }

    pub fn members(&self, g: usize) -> std::ops::Range<usize> {
        g * self.group_size..(g + 1) * self.group_size
    }
}

/// `1/2 ||y - A x||^2 + lambda1 sum |x_n| + lambda2 sum_g sqrt(s) ||x_g||`
pub fn sparse_group_objective(
    a: &MeasurementMatrix,
    y: &SplitComplexVector,
    x: &SplitComplexVector,
    spec: &GroupSpec,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let cols = Columns::new(a);
    let (r_re, r_im) = cols.residual(y, x.re.as_slice().unwrap(), x.im.as_slice().unwrap());
    let mags = x.magnitudes();
    let weight = (spec.group_size as f64).sqrt();
    let groups: f64 = (0..spec.group_count)
        .map(|g| mags.slice(ndarray::s![spec.members(g)]).mapv(|v| v * v).sum().sqrt())
        .sum();
    half_residual_energy(&r_re, &r_im) + lambda1 * mags.sum() + lambda2 * weight * groups
}

/// Upper bound on the largest eigenvalue of `A_g^H A_g` (Gershgorin row sums).
fn block_lipschitz(cols: &Columns, members: std::ops::Range<usize>) -> f64 {
    let mut bound: f64 = 0.0;
    for i in members.clone() {
        let (ai_re, ai_im) = cols.col(i);
        let row: f64 = members
            .clone()
            .map(|j| {
                let (g_re, g_im) = cols.inner(j, ai_re, ai_im);
                g_re.hypot(g_im)
            })
            .sum();
        bound = bound.max(row);
    }
    bound
}

/// Group LASSO with penalty `lambda * sum_g sqrt(group_size) ||x_g||_2`.
pub fn group_lasso_solve(
    a: &MeasurementMatrix,
    y: &SplitComplexVector,
    spec: &GroupSpec,
    lambda: f64,
    settings: &SolverSettings,
) -> Result<SolveResult> {
    sparse_group_lasso_solve(a, y, spec, 0.0, lambda, settings)
}

/// Sparse group LASSO by block coordinate descent.
///
/// Each block takes one proximal-gradient step with step `1 / L_g`, where
/// `L_g` bounds the block curvature: element-wise complex soft threshold at
/// `lambda1 / L_g`, then group shrinkage at `lambda2 sqrt(s) / L_g`. That
/// composition is the exact proximal map of the combined block penalty.
pub fn sparse_group_lasso_solve(
    a: &MeasurementMatrix,
    y: &SplitComplexVector,
    spec: &GroupSpec,
    lambda1: f64,
    lambda2: f64,
    settings: &SolverSettings,
) -> Result<SolveResult> {
    check_problem(a, y)?;
    spec.validate(a.cols())?;
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "penalties ({lambda1}, {lambda2}) must be >= 0"
        )));
    }
    let cols = Columns::new(a);
    let n = cols.cols;
    if let Some(k) = (0..n).find(|&k| cols.energy(k) == 0.0) {
        return Err(Error::ZeroColumn(k));
    }
    let lip: Vec<f64> = (0..spec.group_count)
        .map(|g| block_lipschitz(&cols, spec.members(g)))
        .collect();
    let weight = (spec.group_size as f64).sqrt();

    let mut x_re = vec![0.0; n];
    let mut x_im = vec![0.0; n];
    let mut r_re = y.re.to_vec();
    let mut r_im = y.im.to_vec();
    let mut z = vec![(0.0, 0.0); spec.group_size];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..settings.max_iters {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for g in 0..spec.group_count {
            let step = 1.0 / lip[g];
            let mut norm_sqr = 0.0;
            for (slot, k) in z.iter_mut().zip(spec.members(g)) {
                let (g_re, g_im) = cols.inner(k, &r_re, &r_im);
                let moved = (x_re[k] + step * g_re, x_im[k] + step * g_im);
                *slot = soft(moved, lambda1 * step);
                norm_sqr += slot.0 * slot.0 + slot.1 * slot.1;
            }
            let norm = norm_sqr.sqrt();
            let t = lambda2 * weight * step;
            let shrink = if lambda2 == 0.0 {
                1.0
            } else if norm <= t {
                0.0
            } else {
                1.0 - t / norm
            };
            for (slot, k) in z.iter().zip(spec.members(g)) {
                let new = (slot.0 * shrink, slot.1 * shrink);
                let d = (new.0 - x_re[k], new.1 - x_im[k]);
                if d != (0.0, 0.0) {
                    cols.sub_scaled(k, d, &mut r_re, &mut r_im);
                    x_re[k] = new.0;
                    x_im[k] = new.1;
                    max_change = max_change.max(d.0.hypot(d.1));
                }
            }
        }
        if settings.track_objective {
            let x = SplitComplexVector {
                re: x_re.clone().into(),
                im: x_im.clone().into(),
            };
            trace.push(sparse_group_objective(a, y, &x, spec, lambda1, lambda2));
        }
        if max_change < settings.tol {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::testutil::instance;
    use crate::baselines::{lasso_objective, lasso_solve, LassoConfig};
    use crate::datagen::{gen_sample, stream_rng, ActivityCase, ScenarioConfig};
    use crate::model::complex_matvec;

    fn tight() -> SolverSettings {
        SolverSettings {
            max_iters: 500_000,
            tol: 1e-13,
            track_objective: false,
        }
    }

    fn assert_close(a: &SplitComplexVector, b: &SplitComplexVector, tol: f64) {
        for k in 0..a.len() {
            assert!((a.re[k] - b.re[k]).abs() < tol, "re[{k}]: {} vs {}", a.re[k], b.re[k]);
            assert!((a.im[k] - b.im[k]).abs() < tol, "im[{k}]: {} vs {}", a.im[k], b.im[k]);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(GroupSpec::new(5, 8).validate(40).is_ok());
        assert!(GroupSpec::new(3, 8).validate(40).is_err());
        assert!(GroupSpec::new(0, 8).validate(0).is_err());
        let spec = GroupSpec::new(5, 8);
        assert_eq!(spec.group_of(12), 2);
        assert_eq!(spec.members(1), 5..10);
    }

    #[test]
    fn large_lambda_zeroes_all_groups() {
        let mut rng = stream_rng(1, 0);
        let (a, _, y) = instance(6, 12, 3, 0.01, &mut rng);
        let out = group_lasso_solve(&a, &y, &GroupSpec::new(3, 4), 1e6, &tight()).unwrap();
        assert_eq!(out.x.norm_sqr(), 0.0);
    }

    #[test]
    fn singleton_groups_reduce_to_lasso() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..10 {
            let (a, _, y) = instance(5, 10, 2, 0.01, &mut rng);
            let lasso = lasso_solve(&a, &y, &LassoConfig { lambda: 0.3, settings: tight() }).unwrap();
            let group = group_lasso_solve(&a, &y, &GroupSpec::new(1, 10), 0.3, &tight()).unwrap();
            assert_close(&lasso.x, &group.x, 1e-8);
        }
    }

    #[test]
    fn penalty_degeneracies() {
        let mut rng = stream_rng(3, 0);
        let spec = GroupSpec::new(2, 4);
        for _ in 0..10 {
            let (a, _, y) = instance(6, 8, 2, 0.01, &mut rng);
            let lasso = lasso_solve(&a, &y, &LassoConfig { lambda: 0.2, settings: tight() }).unwrap();
            let sgl = sparse_group_lasso_solve(&a, &y, &spec, 0.2, 0.0, &tight()).unwrap();
            assert_close(&lasso.x, &sgl.x, 1e-8);
            let group = group_lasso_solve(&a, &y, &spec, 0.2, &tight()).unwrap();
            let sgl = sparse_group_lasso_solve(&a, &y, &spec, 0.0, 0.2, &tight()).unwrap();
            assert_close(&group.x, &sgl.x, 1e-8);
        }
    }

    #[test]
    fn combined_solution_beats_single_penalty_solutions() {
        let mut rng = stream_rng(4, 0);
        let spec = GroupSpec::new(2, 4);
        let (l1, l2) = (0.15, 0.2);
        for _ in 0..10 {
            let (a, _, y) = instance(6, 8, 2, 0.01, &mut rng);
            let sgl = sparse_group_lasso_solve(&a, &y, &spec, l1, l2, &tight()).unwrap();
            let lasso = lasso_solve(&a, &y, &LassoConfig { lambda: l1, settings: tight() }).unwrap();
            let group = group_lasso_solve(&a, &y, &spec, l2, &tight()).unwrap();
            let f = |x: &SplitComplexVector| sparse_group_objective(&a, &y, x, &spec, l1, l2);
            assert!(f(&sgl.x) <= f(&lasso.x) + 1e-10);
            assert!(f(&sgl.x) <= f(&group.x) + 1e-10);
            // objective helper agrees with the LASSO objective when lambda2 = 0
            let d = sparse_group_objective(&a, &y, &lasso.x, &spec, l1, 0.0) - lasso_objective(&a, &y, &lasso.x, l1);
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = stream_rng(5, 0);
        let spec = GroupSpec::new(3, 4);
        let settings = SolverSettings {
            track_objective: true,
            ..tight()
        };
        for _ in 0..10 {
            let (a, _, y) = instance(6, 12, 3, 0.05, &mut rng);
            let out = sparse_group_lasso_solve(&a, &y, &spec, 0.1, 0.3, &settings).unwrap();
            let mut prev = 0.5 * y.norm_sqr();
            for &f in &out.objective_trace {
                assert!(f <= prev + 1e-12);
                prev = f;
            }
        }
    }

    #[test]
    fn grouped_activity_yields_whole_group_support() {
        let cfg = ScenarioConfig {
            n: 20,
            l: 8,
            case: ActivityCase::GroupCorrelated { p_u: 1.0, group_count: 4 },
            p: 0.3,
            sigma2: 0.01,
            seed: 6,
        };
        let spec = GroupSpec::new(5, 4);
        let mut rng = stream_rng(6, 9);
        let a = crate::autoencoder::gaussian_pilots(8, 20, &mut rng);
        for _ in 0..20 {
            let s = gen_sample(&cfg, &mut rng).unwrap();
            let y = complex_matvec(&a, &s.x).unwrap();
            let out = group_lasso_solve(&a, &y, &spec, 0.5, &SolverSettings::default()).unwrap();
            // group shrinkage keeps or drops groups as a unit
            for g in 0..4 {
                let on: Vec<bool> = spec.members(g).map(|k| out.x.magnitude(k) > 0.0).collect();
                assert!(on.iter().all(|&v| v == on[0]), "partial group {g}: {on:?}");
            }
        }
    }
}
