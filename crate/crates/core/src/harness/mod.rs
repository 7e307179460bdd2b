//! Experiment orchestration: plans, sweeps, timing and persistence.

mod checkpoint;
mod plan;
mod run;
mod timing;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use plan::{BaselineSettings, ExperimentPlan, Method, Profile, Sweep, SweepAxis};
pub use run::{
    calibrate_model, dataset_hash, error_rate_on, evaluate_learned, fit_learned, measure, read_results,
    run_plan, run_plan_with, soft_scores, test_measurements, time_learned, write_results, BaselineBench, BaselineContext, BaselineReport,
    BaselineSolver, FittedBaseline, LearnedModel, ResultRow, TIMING_COLUMNS,
};
pub use timing::time_inference;
