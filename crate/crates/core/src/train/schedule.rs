use serde::{Deserialize, Serialize};

/// Exponential epoch decay with a rate switch, plus a tenfold cut whenever
/// validation loss plateaus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub base_lr: f64,
    pub decay_a: f64,
    pub decay_b: f64,
    /// Last epoch decayed by `decay_a`.
    pub switch_epoch: u32,
    pub plateau_factor: f64,
    pub plateau_patience: u32,
    pub plateau_min_delta: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            base_lr: 0.001,
            decay_a: 0.96,
            decay_b: 0.75,
            switch_epoch: 20,
            plateau_factor: 0.1,
            plateau_patience: 5,
            plateau_min_delta: 1e-4,
        }
    }
}

impl Schedule {
    /// Rate before plateau cuts.
    pub fn decayed(&self, epoch: u32) -> f64 {
        let a = epoch.min(self.switch_epoch) as i32;
        let b = epoch.saturating_sub(self.switch_epoch) as i32;
        self.base_lr * self.decay_a.powi(a) * self.decay_b.powi(b)
    }

    /// Plateau events in a validation-loss history: `patience` consecutive
    /// epochs without beating the best loss by more than `min_delta`. The
    /// wait counter restarts after each event.
    pub fn plateau_events(&self, val_history: &[f64]) -> u32 {
        let mut best = f64::INFINITY;
        let (mut wait, mut events) = (0, 0);
        for &loss in val_history {
            if loss < best - self.plateau_min_delta {
                best = loss;
                wait = 0;
            } else {
                wait += 1;
                if wait >= self.plateau_patience {
                    events += 1;
                    wait = 0;
                }
            }
        }
        events
    }

    /// Learning rate of `epoch` (0-based) given the validation losses of the
    /// epochs before it.
    pub fn lr_at(&self, epoch: u32, val_history: &[f64]) -> f64 {
        self.decayed(epoch) * self.plateau_factor.powi(self.plateau_events(val_history) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_values() {
        let s = Schedule::default();
        assert_eq!(s.lr_at(0, &[]), 0.001);
        assert!((s.lr_at(1, &[]) - 0.00096).abs() < 1e-12);
        let e21 = 0.001 * 0.96f64.powi(20) * 0.75;
        assert!((s.lr_at(21, &[]) - e21).abs() < 1e-12);
    }

    #[test]
    fn plateau_counts() {
        let s = Schedule::default();
        assert_eq!(s.plateau_events(&[1.0, 0.9, 0.8]), 0);
        assert_eq!(s.plateau_events(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]), 1);
        // improvements below min_delta do not count
        assert_eq!(s.plateau_events(&[1.0, 0.99996, 0.99992, 0.99991, 0.99993, 0.99995]), 1);
        assert_eq!(s.plateau_events(&[1.0; 11]), 2);
        let flat = [1.0; 6];
        assert!((s.lr_at(3, &flat) - s.decayed(3) * 0.1).abs() < 1e-18);
    }
}
