//! The training loop: deterministic batching, divergence guard, scheduler
//! and optimizer wiring, periodic validation and checkpoints.

use std::path::{Path, PathBuf};

use log::{error, info};
use pcl_autodiff::Scalar;
use pcl_data::Clip;

use crate::checkpoint;
use crate::config::TrainConfig;
use crate::error::TrainError;
use crate::optim::Optimizer;
use crate::pipeline::Pipeline;
use crate::sched::Scheduler;

pub struct Trainer<T: Scalar> {
    pub pipeline: Pipeline<T>,
    pub optimizer: Optimizer<T>,
    pub scheduler: Scheduler,
    /// Completed iterations (1-based counting; 0 before the first step).
    pub iteration: usize,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub iterations: usize,
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
    pub stopped_early: bool,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        let optimizer = Optimizer::new(cfg.optimizer.clone(), cfg.learning_rate, cfg.weight_decay);
        let scheduler = Scheduler::new(cfg.schedule.clone(), cfg.learning_rate);
        let pipeline = Pipeline::new(cfg)?;
        Ok(Trainer { pipeline, optimizer, scheduler, iteration: 0, loss_trace: Vec::new() })
    }

    /// Continue from a checkpoint. The scheduler is replayed from the stored
    /// loss trace being empty, which is exact for step decay (a pure function
    /// of the iteration) and restarts plateau detection fresh.
    pub fn resume(cfg: TrainConfig, path: &Path, allow_mismatch: bool) -> Result<Self, TrainError> {
        let expected = cfg.hash();
        let loaded = checkpoint::load::<T>(path, expected, allow_mismatch)?;
        let mut optimizer = Optimizer::new(cfg.optimizer.clone(), cfg.learning_rate, cfg.weight_decay);
        let mut scheduler = Scheduler::new(cfg.schedule.clone(), cfg.learning_rate);
        let (params, iteration) = loaded.restore_optimizer(&mut optimizer);
        scheduler.observe_iteration_only(iteration);
        let pipeline = Pipeline::from_params(cfg, params)?;
        Ok(Trainer { pipeline, optimizer, scheduler, iteration, loss_trace: Vec::new() })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        checkpoint::save(
            path,
            &self.pipeline.params,
            &self.optimizer,
            self.iteration,
            self.pipeline.cfg.hash(),
        )
    }

    /// One optimization step over a batch. Non-finite losses abort.
    pub fn step(&mut self, batch: &[Clip<T>]) -> Result<f64, TrainError> {
        let it = self.iteration + 1;
        let (loss, grads) = self.pipeline.batch_loss(batch, true)?;
        if !loss.is_finite() {
            error!("iteration {it}: non-finite loss {loss}");
            return Err(TrainError::Diverged(it));
        }
        let lr = self.scheduler.observe(it, loss);
        self.optimizer.set_lr(lr);
        self.optimizer.step(&mut self.pipeline.params, &grads.expect("train mode"));
        self.iteration = it;
        self.loss_trace.push(loss);
        Ok(loss)
    }

    /// Deterministic round-robin batch for an iteration index (1-based).
    pub fn batch_for<'c>(&self, clips: &'c [Clip<T>], iteration: usize) -> Vec<Clip<T>>
    where
        Clip<T>: Clone,
        'c: 'c,
    {
        let b = self.pipeline.cfg.batch_size.min(clips.len());
        let start = (iteration - 1) * b;
        (0..b).map(|j| clips[(start + j) % clips.len()].clone()).collect()
    }

    /// Run up to `max_iterations` total iterations (counting any resumed
    /// progress). `should_stop` is consulted every `val_interval` iterations
    /// with the freshly computed validation report when `val` is given.
    pub fn run(
        &mut self,
        train_clips: &[Clip<T>],
        val_clips: Option<&[Clip<T>]>,
        out_dir: Option<&Path>,
        mut should_stop: impl FnMut(&mut Trainer<T>) -> bool,
    ) -> Result<TrainOutcome, TrainError> {
        if train_clips.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let cfg = self.pipeline.cfg.clone();
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        }
        let mut stopped_early = false;
        let mut last_checkpoint = None;

        while self.iteration < cfg.max_iterations {
            let batch = self.batch_for(train_clips, self.iteration + 1);
            let loss = self.step(&batch)?;
            let it = self.iteration;

            if it % cfg.log_interval == 0 || it == 1 {
                info!("iter {it:>6}  loss {loss:.6}  lr {:.2e}", self.optimizer.lr());
            }
            if it % cfg.val_interval == 0 {
                if let Some(val) = val_clips {
                    if !val.is_empty() && val[0].gt_flows.is_some() {
                        let report = self.pipeline.evaluate(val)?;
                        info!(
                            "iter {it:>6}  val mean EPE {:.4}  median {:.4}",
                            report.mean_epe, report.median_epe
                        );
                    }
                }
                if should_stop(self) {
                    stopped_early = true;
                }
            }
            if let Some(dir) = out_dir {
                if it % cfg.checkpoint_interval == 0 || it == cfg.max_iterations || stopped_early {
                    let path = dir.join(format!("checkpoint_{it:07}.pclc"));
                    self.save_checkpoint(&path)?;
                    last_checkpoint = Some(path);
                }
            }
            if stopped_early {
                break;
            }
        }
        Ok(TrainOutcome {
            iterations: self.iteration,
            final_loss: self.loss_trace.last().copied().unwrap_or(f64::NAN),
            loss_trace: self.loss_trace.clone(),
            checkpoint: last_checkpoint,
            stopped_early,
        })
    }
}
