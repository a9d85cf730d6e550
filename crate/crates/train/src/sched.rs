//! Learning-rate schedules.
//!
//! Step decay multiplies the base rate by `factor` at each milestone
//! (1-based iteration counts). Plateau decay watches the 100-iteration moving
//! average of the training loss: a window that fails to improve on the best
//! seen average by more than 1e-4 counts as bad, and `patience` consecutive
//! bad windows trigger one decay (the window statistics then reset).

use crate::config::Schedule;

pub const PLATEAU_WINDOW: usize = 100;
pub const PLATEAU_MIN_IMPROVE: f64 = 1e-4;

pub struct Scheduler {
    schedule: Schedule,
    base_lr: f64,
    current_lr: f64,
    window_sum: f64,
    window_len: usize,
    best_avg: f64,
    bad_windows: usize,
}

impl Scheduler {
    pub fn new(schedule: Schedule, base_lr: f64) -> Self {
        Scheduler {
            schedule,
            base_lr,
            current_lr: base_lr,
            window_sum: 0.0,
            window_len: 0,
            best_avg: f64::INFINITY,
            bad_windows: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.current_lr
    }

    /// Advance schedule state to an already-completed iteration whose losses
    /// are unavailable (checkpoint resume). Exact for step decay, which is a
    /// pure function of the iteration; plateau windows restart empty.
    pub fn observe_iteration_only(&mut self, iteration: usize) {
        if let Schedule::StepDecay { milestones, factor } = &self.schedule {
            let hits = milestones.iter().filter(|&&m| iteration >= m).count();
            self.current_lr = self.base_lr * factor.powi(hits as i32);
        }
    }

    /// Record the loss of (1-based) `iteration` and return the rate to use
    /// for the next step.
    pub fn observe(&mut self, iteration: usize, loss: f64) -> f64 {
        match &self.schedule {
            Schedule::Constant => {}
            Schedule::StepDecay { milestones, factor } => {
                let hits = milestones.iter().filter(|&&m| iteration >= m).count();
                self.current_lr = self.base_lr * factor.powi(hits as i32);
            }
            Schedule::PlateauDecay { factor, patience } => {
                self.window_sum += loss;
                self.window_len += 1;
                if self.window_len == PLATEAU_WINDOW {
                    let avg = self.window_sum / PLATEAU_WINDOW as f64;
                    self.window_sum = 0.0;
                    self.window_len = 0;
                    if avg < self.best_avg - PLATEAU_MIN_IMPROVE {
                        self.best_avg = avg;
                        self.bad_windows = 0;
                    } else {
                        self.bad_windows += 1;
                        if self.bad_windows >= *patience {
                            self.current_lr *= factor;
                            self.bad_windows = 0;
                            self.best_avg = avg;
                        }
                    }
                }
            }
        }
        self.current_lr
    }
}
