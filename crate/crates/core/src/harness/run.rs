use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::save_checkpoint;
use super::plan::{BaselineSettings, ExperimentPlan, Method, SweepAxis};
use super::timing::time_inference;
use crate::autoencoder::{decode_batch, scenario_pilots, train, AutoencoderParams, TrainConfig, TrainLog};
use crate::baselines::{
    amp_solve, apply_support_threshold, group_lasso_solve, lambda_grid, lasso_solve, select_lambda,
    sparse_group_lasso_solve, AmpConfig, GroupSpec, LambdaSelection, LassoConfig,
};
use crate::datagen::{build_datasets, gen_noise, stream_rng, streams, write_ssup, ScenarioConfig};
use crate::error::{Error, Result};
use crate::model::{complex_matvec, Dataset, MeasurementMatrix, SplitComplexVector};
use crate::threshold::{calibrate_threshold, detect, error_rate, hard_threshold, ThresholdCalibration};

/// Decoder batch size for evaluation passes; does not affect results.
const EVAL_CHUNK: usize = 1024;

/// Columns of [`ResultRow`] that hold wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 2] = ["train_seconds", "infer_seconds_per_sample"];

/// One method at one sweep value.
///
/// For the learned methods `threshold` is the calibrated score threshold and
/// the weights are empty. For the classical baselines `threshold` is the
/// magnitude threshold on the estimate, `lambda1` the element-wise weight,
/// `lambda2` the group weight, and for AMP `lambda1` holds the threshold
/// multiplier. `train_seconds` covers training plus calibration, or the
/// weight search for a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub sweep_axis: SweepAxis,
    pub sweep_value: f64,
    pub case: u32,
    pub n: usize,
    pub l: usize,
    pub p: f64,
    pub sigma2: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub threshold: Option<f64>,
    pub error_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub train_seconds: f64,
    pub infer_seconds_per_sample: Option<f64>,
    pub seed: u64,
    pub test_hash: String,
    pub status: String,
}

impl ResultRow {
    /// A successful row with no measurements filled in yet.
    pub fn blank(method: Method, axis: SweepAxis, value: f64, scenario: &ScenarioConfig, hash: &str) -> Self {
        Self {
            method,
            sweep_axis: axis,
            sweep_value: value,
            case: scenario.case.id(),
            n: scenario.n,
            l: scenario.l,
            p: scenario.p,
            sigma2: scenario.sigma2,
            lambda1: None,
            lambda2: None,
            threshold: None,
            error_rate: None,
            epochs: None,
            train_seconds: 0.0,
            infer_seconds_per_sample: None,
            seed: scenario.seed,
            test_hash: hash.to_string(),
            status: "ok".into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Copy with the wall-clock columns zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self {
            train_seconds: 0.0,
            infer_seconds_per_sample: self.infer_seconds_per_sample.map(|_| 0.0),
            ..self.clone()
        }
    }
}

pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        format: "results CSV",
        field: "row",
        reason: e.to_string(),
    }
}

/// Short SHA-256 fingerprint of a dataset's `.ssup` encoding.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut bytes = Vec::new();
    write_ssup(&mut bytes, data, 0).expect("writing to memory cannot fail");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// `y_i = A x_i + z_i` for every sample, with `z_i` drawn in order from `rng`.
pub fn measure<R: Rng + ?Sized>(
    a: &MeasurementMatrix,
    data: &Dataset,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<SplitComplexVector>> {
    data.samples
        .iter()
        .map(|s| complex_matvec(a, &s.x)?.add(&gen_noise(a.rows(), sigma2, rng).z))
        .collect()
}

fn labels(data: &Dataset) -> Vec<Vec<u8>> {
    data.samples.iter().map(|s| s.alpha.clone()).collect()
}

/// Soft support scores for a list of measurements, decoded in batches.
pub fn soft_scores(params: &AutoencoderParams, ys: &[SplitComplexVector]) -> Vec<Array1<f64>> {
    let l = params.a.rows();
    let mut out = Vec::with_capacity(ys.len());
    for chunk in ys.chunks(EVAL_CHUNK) {
        let mut u = Array2::zeros((chunk.len(), 2 * l));
        for (i, y) in chunk.iter().enumerate() {
            u.slice_mut(s![i, ..l]).assign(&y.re);
            u.slice_mut(s![i, l..]).assign(&y.im);
        }
        let cache = decode_batch(&params.w, u);
        out.extend(cache.out.rows().into_iter().map(|r| r.to_owned()));
    }
    out
}

/// A trained and calibrated auto-encoder.
#[derive(Debug, Clone)]
pub struct LearnedModel {
    pub params: AutoencoderParams,
    pub calibration: ThresholdCalibration,
    pub log: TrainLog,
    pub train_seconds: f64,
}

/// Choose the score threshold on the validation set, measured through the
/// model's own pilots with the calibration noise stream.
pub fn calibrate_model(
    params: &AutoencoderParams,
    val: &Dataset,
    scenario: &ScenarioConfig,
) -> Result<ThresholdCalibration> {
    let mut rng = stream_rng(scenario.seed, streams::CALIBRATION);
    let ys = measure(&params.a, val, scenario.sigma2, &mut rng)?;
    calibrate_threshold(&soft_scores(params, &ys), &labels(val))
}

pub fn fit_learned(
    train_set: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    scenario: &ScenarioConfig,
) -> Result<LearnedModel> {
    let start = Instant::now();
    let outcome = train(train_set, val, cfg, scenario)?;
    let calibration = calibrate_model(&outcome.params, val, scenario)?;
    Ok(LearnedModel {
        params: outcome.params,
        calibration,
        log: outcome.log,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Test measurements through `a`, with the noise shared by every method.
pub fn test_measurements(
    a: &MeasurementMatrix,
    test: &Dataset,
    scenario: &ScenarioConfig,
) -> Result<Vec<SplitComplexVector>> {
    measure(a, test, scenario.sigma2, &mut stream_rng(scenario.seed, streams::TEST_NOISE))
}

/// Test error rate of a learned model.
pub fn evaluate_learned(
    params: &AutoencoderParams,
    r_star: f64,
    test: &Dataset,
    scenario: &ScenarioConfig,
) -> Result<f64> {
    let ys = test_measurements(&params.a, test, scenario)?;
    error_rate_on(params, r_star, &ys, test)
}

/// Error rate of a learned model on measurements already taken of `data`.
pub fn error_rate_on(
    params: &AutoencoderParams,
    r_star: f64,
    ys: &[SplitComplexVector],
    data: &Dataset,
) -> Result<f64> {
    let decisions: Vec<Vec<u8>> = soft_scores(params, ys)
        .iter()
        .map(|s| hard_threshold(s.as_slice().unwrap(), r_star))
        .collect();
    error_rate(&decisions, &labels(data))
}

/// Seconds per sample of the full decoder-plus-threshold path.
pub fn time_learned(params: &AutoencoderParams, r_star: f64, ys: &[SplitComplexVector], warmup: usize) -> f64 {
    time_inference(ys, warmup, |y| detect(&params.w, r_star, y))
}

/// A classical solver with its weights fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineSolver {
    Lasso { lambda: f64 },
    GroupLasso { lambda: f64 },
    SparseGroupLasso { lambda1: f64, lambda2: f64 },
    Amp { theta: f64 },
}

impl BaselineSolver {
    pub fn method(&self) -> Method {
        match self {
            BaselineSolver::Lasso { .. } => Method::Lasso,
            BaselineSolver::GroupLasso { .. } => Method::GroupLasso,
            BaselineSolver::SparseGroupLasso { .. } => Method::SparseGroupLasso,
            BaselineSolver::Amp { .. } => Method::Amp,
        }
    }

    /// `(lambda1, lambda2)` as reported in the results.
    pub fn weights(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            BaselineSolver::Lasso { lambda } => (Some(lambda), None),
            BaselineSolver::GroupLasso { lambda } => (None, Some(lambda)),
            BaselineSolver::SparseGroupLasso { lambda1, lambda2 } => (Some(lambda1), Some(lambda2)),
            BaselineSolver::Amp { theta } => (Some(theta), None),
        }
    }
}

/// Everything a baseline needs besides its weights.
#[derive(Debug, Clone)]
pub struct BaselineContext {
    pub a: MeasurementMatrix,
    pub groups: Option<GroupSpec>,
    pub settings: BaselineSettings,
    pub sigma2: f64,
}

impl BaselineContext {
    pub fn new(scenario: &ScenarioConfig, settings: &BaselineSettings) -> Self {
        Self {
            a: scenario_pilots(scenario),
            groups: scenario.group_size().map(|s| GroupSpec::new(s, scenario.n / s)),
            settings: settings.clone(),
            sigma2: scenario.sigma2,
        }
    }

    fn groups(&self) -> Result<GroupSpec> {
        self.groups
            .ok_or_else(|| Error::InvalidConfig("group penalties need the group-correlated case".into()))
    }

    pub fn solve(&self, solver: BaselineSolver, y: &SplitComplexVector) -> Result<SplitComplexVector> {
        let settings = &self.settings.solver;
        let out = match solver {
            BaselineSolver::Lasso { lambda } => lasso_solve(
                &self.a,
                y,
                &LassoConfig {
                    lambda,
                    settings: *settings,
                },
            )?,
            BaselineSolver::GroupLasso { lambda } => {
                group_lasso_solve(&self.a, y, &self.groups()?, lambda, settings)?
            }
            BaselineSolver::SparseGroupLasso { lambda1, lambda2 } => {
                sparse_group_lasso_solve(&self.a, y, &self.groups()?, lambda1, lambda2, settings)?
            }
            BaselineSolver::Amp { theta } => amp_solve(
                &self.a,
                y,
                &AmpConfig {
                    theta,
                    sigma2: self.sigma2,
                    ..self.settings.amp
                },
            )?,
        };
        Ok(out.x)
    }

    pub fn detect(&self, fitted: &FittedBaseline, y: &SplitComplexVector) -> Result<Vec<u8>> {
        Ok(apply_support_threshold(&self.solve(fitted.solver, y)?, fitted.tau))
    }

    /// Pick weights and the magnitude threshold on a calibration set.
    pub fn fit(&self, method: Method, ys: &[SplitComplexVector], alpha: &[Vec<u8>]) -> Result<FittedBaseline> {
        let points = self.settings.lambda_points;
        let pick = |sel: LambdaSelection, solver: BaselineSolver| FittedBaseline {
            solver,
            tau: sel.threshold.tau,
            calibration_error: sel.threshold.error_rate,
        };
        match method {
            Method::Lasso => {
                let grid = lambda_grid(&self.a, ys, points)?;
                let sel = select_lambda(&grid, ys, alpha, |lambda, y| self.solve(BaselineSolver::Lasso { lambda }, y))?;
                let lambda = sel.lambda;
                Ok(pick(sel, BaselineSolver::Lasso { lambda }))
            }
            Method::GroupLasso => {
                let grid = lambda_grid(&self.a, ys, points)?;
                let sel = select_lambda(&grid, ys, alpha, |lambda, y| {
                    self.solve(BaselineSolver::GroupLasso { lambda }, y)
                })?;
                let lambda = sel.lambda;
                Ok(pick(sel, BaselineSolver::GroupLasso { lambda }))
            }
            Method::SparseGroupLasso => {
                let grid = lambda_grid(&self.a, ys, points)?;
                let mut best: Option<FittedBaseline> = None;
                for &mix in &self.settings.sgl_mixes {
                    let split = |lambda: f64| BaselineSolver::SparseGroupLasso {
                        lambda1: mix * lambda,
                        lambda2: (1.0 - mix) * lambda,
                    };
                    let sel = select_lambda(&grid, ys, alpha, |lambda, y| self.solve(split(lambda), y))?;
                    let solver = split(sel.lambda);
                    let cand = pick(sel, solver);
                    if best.map_or(true, |b| cand.calibration_error < b.calibration_error) {
                        best = Some(cand);
                    }
                }
                Ok(best.expect("mixes are non-empty"))
            }
            Method::Amp => {
                let sel = select_lambda(&self.settings.amp_thetas, ys, alpha, |theta, y| {
                    self.solve(BaselineSolver::Amp { theta }, y)
                })?;
                let theta = sel.lambda;
                Ok(pick(sel, BaselineSolver::Amp { theta }))
            }
            Method::Proposed | Method::DlFixedMatrix => {
                Err(Error::InvalidInput(format!("{method} is not a classical baseline")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedBaseline {
    pub solver: BaselineSolver,
    pub tau: f64,
    pub calibration_error: f64,
}

fn file_stem(method: Method, axis: SweepAxis, value: f64) -> String {
    format!("{method}_{axis}_{value}")
}

fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for rec in &log.epochs {
        w.serialize(rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Data shared by every method at one sweep value.
struct Point<'a> {
    plan: &'a ExperimentPlan,
    value: f64,
    scenario: ScenarioConfig,
    train: Dataset,
    val: Dataset,
    test: Dataset,
    hash: String,
}

impl Point<'_> {
    fn blank(&self, method: Method) -> ResultRow {
        ResultRow::blank(method, self.plan.sweep.axis, self.value, &self.scenario, &self.hash)
    }

    fn learned(&self, method: Method) -> Result<ResultRow> {
        let cfg = TrainConfig {
            freeze_matrix: method == Method::DlFixedMatrix,
            ..self.plan.train
        };
        let model = fit_learned(&self.train, &self.val, &cfg, &self.scenario)?;
        let r_star = model.calibration.r_star;
        let stem = file_stem(method, self.plan.sweep.axis, self.value);
        let dir = &self.plan.output_dir;
        save_checkpoint(dir.join(format!("{stem}.ssae")), &model.params, r_star)?;
        write_train_log(&dir.join(format!("{stem}_train_log.csv")), &model.log)?;
        model
            .calibration
            .write_csv(BufWriter::new(File::create(dir.join(format!("{stem}_threshold.csv")))?))?;

        let ys = test_measurements(&model.params.a, &self.test, &self.scenario)?;
        let rate = error_rate_on(&model.params, r_star, &ys, &self.test)?;
        let timed = &ys[..ys.len().min(self.plan.timing_samples())];
        let infer = time_learned(&model.params, r_star, timed, self.plan.baselines.warmup_samples);
        Ok(ResultRow {
            threshold: Some(r_star),
            error_rate: Some(rate),
            epochs: Some(model.log.epochs.len()),
            train_seconds: model.train_seconds,
            infer_seconds_per_sample: Some(infer),
            ..self.blank(method)
        })
    }

    fn baseline(&self, method: Method, bench: &BaselineBench) -> Result<ResultRow> {
        let report = bench.run(method, self.plan.timing_samples())?;
        let (lambda1, lambda2) = report.fitted.solver.weights();
        Ok(ResultRow {
            lambda1,
            lambda2,
            threshold: Some(report.fitted.tau),
            error_rate: Some(report.error_rate),
            train_seconds: report.fit_seconds,
            infer_seconds_per_sample: Some(report.infer_seconds),
            ..self.blank(method)
        })
    }
}

/// Classical baselines on one scenario: a calibration subset of the
/// validation set and the test set, both measured through the fixed pilots.
#[derive(Debug, Clone)]
pub struct BaselineBench {
    pub ctx: BaselineContext,
    pub cal_ys: Vec<SplitComplexVector>,
    pub cal_alpha: Vec<Vec<u8>>,
    pub test_ys: Vec<SplitComplexVector>,
    pub test_alpha: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineReport {
    pub fitted: FittedBaseline,
    pub error_rate: f64,
    pub fit_seconds: f64,
    pub infer_seconds: f64,
}

impl BaselineBench {
    /// Uses the first `calibration_samples` of `val` for weight selection.
    pub fn new(
        scenario: &ScenarioConfig,
        settings: &BaselineSettings,
        val: &Dataset,
        test: &Dataset,
        calibration_samples: usize,
    ) -> Result<Self> {
        let ctx = BaselineContext::new(scenario, settings);
        let count = val.len().min(calibration_samples);
        let cal = Dataset::new(val.samples[..count].to_vec(), val.role)?;
        let mut rng = stream_rng(scenario.seed, streams::CALIBRATION);
        let cal_ys = measure(&ctx.a, &cal, scenario.sigma2, &mut rng)?;
        let test_ys = test_measurements(&ctx.a, test, scenario)?;
        Ok(Self {
            cal_alpha: labels(&cal),
            ctx,
            cal_ys,
            test_ys,
            test_alpha: labels(test),
        })
    }

    /// Fit, evaluate on the whole test set and time on its first
    /// `timing_samples` measurements.
    pub fn run(&self, method: Method, timing_samples: usize) -> Result<BaselineReport> {
        let ctx = &self.ctx;
        let start = Instant::now();
        let fitted = ctx.fit(method, &self.cal_ys, &self.cal_alpha)?;
        let fit_seconds = start.elapsed().as_secs_f64();
        let decisions = self
            .test_ys
            .iter()
            .map(|y| ctx.detect(&fitted, y))
            .collect::<Result<Vec<_>>>()?;
        let rate = error_rate(&decisions, &self.test_alpha)?;
        let timed = &self.test_ys[..self.test_ys.len().min(timing_samples)];
        let infer_seconds = time_inference(timed, ctx.settings.warmup_samples, |y| ctx.detect(&fitted, y));
        Ok(BaselineReport {
            fitted,
            error_rate: rate,
            fit_seconds,
            infer_seconds,
        })
    }
}

fn run_point(plan: &ExperimentPlan, value: f64, on_row: &mut dyn FnMut(&ResultRow)) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    let scenario = match plan.scenario_at(value) {
        Ok(s) => s,
        Err(e) => {
            for method in plan.methods_for(&plan.scenario) {
                let mut row = ResultRow::blank(method, plan.sweep.axis, value, &plan.scenario, "");
                row.status = e.to_string();
                on_row(&row);
                rows.push(row);
            }
            return rows;
        }
    };
    let methods = plan.methods_for(&scenario);
    let datasets = build_datasets(&scenario, plan.sizes());
    let [train_set, val, test] = match datasets {
        Ok(d) => d,
        Err(e) => {
            for method in methods {
                let mut row = ResultRow::blank(method, plan.sweep.axis, value, &scenario, "");
                row.status = e.to_string();
                on_row(&row);
                rows.push(row);
            }
            return rows;
        }
    };
    let point = Point {
        plan,
        value,
        scenario,
        hash: dataset_hash(&test),
        train: train_set,
        val,
        test,
    };
    let mut bench: Option<Result<BaselineBench>> = None;
    for method in methods {
        let result = if method.is_learned() {
            point.learned(method)
        } else {
            let setup = || {
                BaselineBench::new(
                    &point.scenario,
                    &plan.baselines,
                    &point.val,
                    &point.test,
                    plan.calibration_samples(),
                )
            };
            match bench.get_or_insert_with(setup) {
                Ok(b) => point.baseline(method, b),
                Err(e) => Err(Error::InvalidInput(format!("baseline setup failed: {e}"))),
            }
        };
        let row = result.unwrap_or_else(|e| ResultRow {
            status: e.to_string(),
            ..point.blank(method)
        });
        on_row(&row);
        rows.push(row);
    }
    rows
}

/// Run every sweep value of `plan`, writing `results.csv`, the resolved
/// plan, checkpoints and training logs to the output directory.
///
/// A failing method only marks its own row; the sweep continues.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    run_plan_with(plan, &mut |_| {})
}

/// [`run_plan`] with a callback invoked as each row completes.
pub fn run_plan_with(plan: &ExperimentPlan, on_row: &mut dyn FnMut(&ResultRow)) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    fs::create_dir_all(&plan.output_dir)?;
    fs::write(plan.output_dir.join("plan.toml"), plan.to_toml()?)?;
    let mut rows = Vec::new();
    for &value in &plan.sweep.values {
        rows.extend(run_point(plan, value, on_row));
        // rewritten after every point so partial sweeps leave usable output
        write_results(plan.output_dir.join("results.csv"), &rows)?;
    }
    Ok(rows)
}
