use thiserror::Error;

use crate::autoencoder::EpochRecord;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A pilot column with zero energy cannot be rescaled to the power target.
    #[error("measurement matrix column {0} is identically zero")]
    ZeroColumn(usize),

    #[error("training diverged at epoch {epoch} (last finite record: {last_finite:?})")]
    TrainingDiverged {
        epoch: usize,
        last_finite: Option<EpochRecord>,
    },

    #[error("malformed {format} file: field `{field}`: {reason}")]
    Parse {
        format: &'static str,
        field: &'static str,
        reason: String,
    },

    #[error("plan file: {0}")]
    Plan(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
