use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    backward, batch_loss, gaussian_pilots, pilot_power_deviation, project_pilot_power_in_place,
    AdamState, AutoencoderParams, DecoderParams,
};
use crate::datagen::{gen_noise_batch, stream_rng, streams, ScenarioConfig};
use crate::error::{check_len, Error, Result};
use crate::model::{Dataset, MeasurementMatrix};

/// Chunk size for validation passes; does not affect results.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden width `Q`; `None` means `8 * L`.
    pub hidden_width: Option<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum decrease of the best validation loss that counts as progress.
    pub loss_change_tol: f64,
    /// Keep the pilot matrix at its Gaussian initialization.
    pub freeze_matrix: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: None,
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 100_000,
            patience: 5,
            loss_change_tol: 1e-5,
            freeze_matrix: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn hidden(&self, l: usize) -> usize {
        self.hidden_width.unwrap_or(8 * l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == Some(0) {
            return Err(Error::InvalidConfig("hidden width must be at least 1".into()));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "patience, batch size and max epochs must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Worst relative pilot-norm error at the end of the epoch.
    pub power_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AutoencoderParams,
    pub log: TrainLog,
}

/// Pilot matrix shared by the baselines for a scenario: i.i.d. `CN(0, 1)`.
pub fn scenario_pilots(scenario: &ScenarioConfig) -> MeasurementMatrix {
    gaussian_pilots(scenario.l, scenario.n, &mut stream_rng(scenario.seed, streams::PILOTS))
}

/// Mean validation loss with the validation noise stream restarted.
fn validation_loss(params: &AutoencoderParams, data: &Dataset, sigma2: f64, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, streams::VALIDATION_NOISE);
    let l = params.a.rows();
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x_re, x_im, alpha) = data.batch(chunk);
        let (z_re, z_im) = gen_noise_batch(chunk.len(), l, sigma2, &mut rng);
        let (loss, _) = batch_loss(params, &x_re, &x_im, Some((&z_re, &z_im)), &alpha);
        total += loss * chunk.len() as f64;
    }
    total / data.len() as f64
}

/// Mini-batch ADAM training of pilots and decoder with early stopping on
/// the validation loss. Returns the parameters of the best validation epoch.
///
/// The pilots start from the scenario's Gaussian pilot matrix. Unless the
/// matrix is frozen it is rescaled to column norm `sqrt(L)` before training
/// and after every update.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    scenario: &ScenarioConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    scenario.validate()?;
    check_len("training set dimension", scenario.n, train_set.dim())?;
    check_len("validation set dimension", scenario.n, val_set.dim())?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }

    let (l, n) = (scenario.l, scenario.n);
    let q = cfg.hidden(l);
    let mut a = scenario_pilots(scenario);
    if !cfg.freeze_matrix {
        project_pilot_power_in_place(&mut a)?;
    }
    let w = DecoderParams::init(l, q, n, &mut stream_rng(cfg.seed, streams::DECODER_INIT));
    let mut params = AutoencoderParams { a, w };

    let lens: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    let mut adam = AdamState::new(&lens, cfg.lr);
    let skip: &[usize] = if cfg.freeze_matrix { &[0, 1] } else { &[] };

    let mut shuffle_rng = stream_rng(cfg.seed, streams::SHUFFLE);
    let mut noise_rng = stream_rng(cfg.seed, streams::TRAIN_NOISE);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let initial_val_loss = validation_loss(&params, val_set, scenario.sigma2, cfg.seed);
    let mut best = params.clone();
    let mut log = TrainLog {
        initial_val_loss,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: initial_val_loss,
        stopped_early: false,
    };
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (x_re, x_im, alpha) = train_set.batch(batch);
            let (z_re, z_im) = gen_noise_batch(batch.len(), l, scenario.sigma2, &mut noise_rng);
            let (loss, cache) = batch_loss(&params, &x_re, &x_im, Some((&z_re, &z_im)), &alpha);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    last_finite: log.epochs.last().copied(),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            let grads = backward(&params, &x_re, &x_im, &alpha, &cache, cfg.freeze_matrix);
            adam.step(&mut params.slices_mut(), &grads.slices(), skip);
            let projected = cfg.freeze_matrix || project_pilot_power_in_place(&mut params.a).is_ok();
            if !projected || !params.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    last_finite: log.epochs.last().copied(),
                });
            }
        }

        let val_loss = validation_loss(&params, val_set, scenario.sigma2, cfg.seed);
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            power_deviation: pilot_power_deviation(&params.a),
        };
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                last_finite: log.epochs.last().copied(),
            });
        }
        log.epochs.push(record);

        if val_loss < log.best_val_loss - cfg.loss_change_tol {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainOutcome { params: best, log })
}
