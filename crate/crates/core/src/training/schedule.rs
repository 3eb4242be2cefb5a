//! Reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

/// Multiplier applied to the learning rate on a plateau.
pub const PLATEAU_FACTOR: f64 = 0.1;
/// A validation loss must beat the best seen by at least this much to
/// count as an improvement.
pub const PLATEAU_MIN_DELTA: f64 = 1e-4;
/// The learning rate never drops below this.
pub const LR_FLOOR: f64 = 1e-6;

/// Tracks validation loss and cuts the learning rate by ten after
/// `patience` epochs without improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    lr: f64,
    patience: usize,
    best: f64,
    stale_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(initial_lr: f64, patience: usize) -> PlateauSchedule {
        PlateauSchedule {
            lr: initial_lr,
            patience,
            best: f64::INFINITY,
            stale_epochs: 0,
        }
    }

    /// Current learning rate.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's validation loss. Returns `true` when the
    /// learning rate was reduced this epoch.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best - PLATEAU_MIN_DELTA {
            self.best = val_loss;
            self.stale_epochs = 0;
            return false;
        }
        self.stale_epochs += 1;
        if self.stale_epochs >= self.patience && self.lr > LR_FLOOR {
            self.lr = (self.lr * PLATEAU_FACTOR).max(LR_FLOOR);
            self.stale_epochs = 0;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_resets_the_stale_counter() {
        let mut s = PlateauSchedule::new(1e-3, 2);
        assert!(!s.observe(1.0));
        assert!(!s.observe(0.9));
        assert!(!s.observe(0.95));
        assert!(!s.observe(0.8));
        assert!(!s.observe(0.85));
        assert_eq!(s.lr(), 1e-3);
    }

    #[test]
    fn patience_exhaustion_cuts_lr_by_ten() {
        let mut s = PlateauSchedule::new(1e-3, 3);
        s.observe(1.0);
        assert!(!s.observe(1.0));
        assert!(!s.observe(1.0));
        assert!(s.observe(1.0));
        assert!((s.lr() - 1e-4).abs() < 1e-18);
        // The counter restarts after a cut.
        assert!(!s.observe(1.0));
        assert!(!s.observe(1.0));
        assert!(s.observe(1.0));
        assert!((s.lr() - 1e-5).abs() < 1e-19);
    }

    #[test]
    fn tiny_improvements_below_min_delta_do_not_count() {
        let mut s = PlateauSchedule::new(1e-3, 2);
        s.observe(1.0);
        assert!(!s.observe(1.0 - 0.5 * PLATEAU_MIN_DELTA));
        assert!(s.observe(1.0 - 0.9 * PLATEAU_MIN_DELTA));
        assert!((s.lr() - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn lr_never_falls_below_the_floor() {
        let mut s = PlateauSchedule::new(1e-5, 1);
        s.observe(1.0);
        assert!(s.observe(1.0));
        // Float rounding can land a hair above the floor; never below it.
        assert!(s.lr() >= LR_FLOOR && s.lr() < 2.0 * LR_FLOOR);
        assert!(s.observe(1.0));
        assert_eq!(s.lr(), LR_FLOOR);
        assert!(!s.observe(1.0));
        assert_eq!(s.lr(), LR_FLOOR);
    }

    #[test]
    fn first_observation_always_improves() {
        let mut s = PlateauSchedule::new(1e-3, 1);
        assert!(!s.observe(1e9));
        assert_eq!(s.lr(), 1e-3);
    }
}
