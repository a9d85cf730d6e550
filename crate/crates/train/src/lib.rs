//! Training, evaluation, inference, and benchmarking for PCLNet.

pub mod benchmark;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod optim;
pub mod pipeline;
pub mod sched;
pub mod selftest;
pub mod trainer;

pub use config::{Mode, OptimKind, Precision, Schedule, TrainConfig};
pub use error::TrainError;
pub use optim::Optimizer;
pub use pipeline::{EpeReport, Pipeline};
pub use sched::Scheduler;
pub use trainer::{TrainOutcome, Trainer};
