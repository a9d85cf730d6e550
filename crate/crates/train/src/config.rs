use std::path::Path;

use pcl_net::{LossConfig, ModelConfig, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SupervisedEpe,
    UnsupervisedReconstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    StepDecay { milestones: Vec<usize>, factor: f64 },
    PlateauDecay { factor: f64, patience: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Momentum { momentum: f64 },
}

impl OptimKind {
    pub fn adam_default() -> Self {
        OptimKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: OptimKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub max_iterations: usize,
    pub clip_len: usize,
    pub frame_size: usize,
    pub seed: u64,
    pub precision: Precision,
    pub checkpoint_interval: usize,
    pub log_interval: usize,
    pub val_interval: usize,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk_unsupervised()
    }
}

impl TrainConfig {
    /// CPU-trainable defaults for the unsupervised reconstruction mode.
    pub fn desk_unsupervised() -> Self {
        TrainConfig {
            mode: Mode::UnsupervisedReconstruction,
            model: ModelConfig::desk(),
            loss: LossConfig::default(),
            optimizer: OptimKind::adam_default(),
            batch_size: 4,
            learning_rate: 1e-3,
            schedule: Schedule::PlateauDecay { factor: 0.1, patience: 3 },
            max_iterations: 10_000,
            clip_len: 6,
            frame_size: 64,
            seed: 0,
            precision: Precision::F32,
            checkpoint_interval: 1000,
            log_interval: 25,
            val_interval: 250,
            weight_decay: 0.0,
        }
    }

    /// CPU-trainable defaults for supervised end-point-error training.
    pub fn desk_supervised() -> Self {
        TrainConfig {
            mode: Mode::SupervisedEpe,
            clip_len: 2,
            learning_rate: 1e-3,
            schedule: Schedule::StepDecay { milestones: vec![1200, 1600], factor: 0.5 },
            max_iterations: 2000,
            ..Self::desk_unsupervised()
        }
    }

    /// The full-scale supervised recipe: batch 32, lr 1e-4 halved at the
    /// 60k/80k/100k/120k milestones. Documentation preset, not CPU-sized.
    pub fn paper_supervised() -> Self {
        TrainConfig {
            mode: Mode::SupervisedEpe,
            model: ModelConfig::paper_scale(),
            batch_size: 32,
            learning_rate: 1e-4,
            schedule: Schedule::StepDecay {
                milestones: vec![60_000, 80_000, 100_000, 120_000],
                factor: 0.5,
            },
            max_iterations: 140_000,
            clip_len: 2,
            frame_size: 224,
            ..Self::desk_unsupervised()
        }
    }

    /// The full-scale unsupervised recipe: batch 48, lr 1e-3 with 0.1 plateau
    /// decay. Documentation preset, not CPU-sized.
    pub fn paper_unsupervised() -> Self {
        TrainConfig {
            model: ModelConfig::paper_scale(),
            batch_size: 48,
            schedule: Schedule::PlateauDecay { factor: 0.1, patience: 5 },
            max_iterations: 200_000,
            frame_size: 224,
            ..Self::desk_unsupervised()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.model.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate().map_err(TrainError::Net)?;
        self.loss.validate().map_err(TrainError::Net)?;
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        if self.clip_len < 2 {
            return Err(TrainError::Config(format!("clip length {} must be >= 2", self.clip_len)));
        }
        if self.frame_size % 32 != 0 {
            return Err(TrainError::Config(format!(
                "frame size {} must be divisible by 32",
                self.frame_size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        match &self.schedule {
            Schedule::Constant => {}
            Schedule::StepDecay { milestones, factor } => {
                if !milestones.windows(2).all(|p| p[0] < p[1]) {
                    return Err(TrainError::Config(format!(
                        "milestones {milestones:?} must strictly increase"
                    )));
                }
                if !(*factor > 0.0 && *factor < 1.0) {
                    return Err(TrainError::Config(format!("decay factor {factor} must be in (0, 1)")));
                }
            }
            Schedule::PlateauDecay { factor, patience } => {
                if !(*factor > 0.0 && *factor < 1.0) {
                    return Err(TrainError::Config(format!("decay factor {factor} must be in (0, 1)")));
                }
                if *patience == 0 {
                    return Err(TrainError::Config("plateau patience must be positive".into()));
                }
            }
        }
        match &self.optimizer {
            OptimKind::Adam { beta1, beta2, eps } => {
                if !(*beta1 >= 0.0 && *beta1 < 1.0 && *beta2 >= 0.0 && *beta2 < 1.0 && *eps > 0.0) {
                    return Err(TrainError::Config("bad Adam moments".into()));
                }
            }
            OptimKind::Momentum { momentum } => {
                if !(*momentum >= 0.0 && *momentum < 1.0) {
                    return Err(TrainError::Config("momentum must be in [0, 1)".into()));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        let cfg: TrainConfig =
            toml::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// First 8 bytes of the SHA-256 of the canonical serialization; stored in
    /// checkpoints to catch architecture drift.
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
