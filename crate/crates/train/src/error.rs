use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] pcl_net::NetError),

    #[error(transparent)]
    Data(#[from] pcl_data::DataError),

    #[error(transparent)]
    Ad(#[from] pcl_autodiff::AdError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("non-finite loss at iteration {0}, aborting")]
    Diverged(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: bad checkpoint magic")]
    BadCheckpointMagic { path: PathBuf },

    #[error("{path}: unsupported checkpoint version {got}")]
    BadCheckpointVersion { path: PathBuf, got: u8 },

    #[error("{path}: checkpoint config hash {got:016x} does not match current config {expected:016x} (pass --allow-config-mismatch to override)")]
    ConfigHashMismatch { path: PathBuf, got: u64, expected: u64 },

    #[error("{path}: checkpoint precision {got} does not match requested {expected}")]
    PrecisionMismatch { path: PathBuf, got: &'static str, expected: &'static str },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{0} requires ground-truth flows in the dataset")]
    MissingGroundTruth(&'static str),
}

impl TrainError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrainError::Io { path: path.into(), source }
    }

    /// CLI exit code per the interface contract: 2 for I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::Io { .. } => 2,
            TrainError::Data(pcl_data::DataError::Io { .. }) => 2,
            _ => 1,
        }
    }
}
