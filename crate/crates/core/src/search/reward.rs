//! Reward shaping and the moving-average baseline.

use serde::{Deserialize, Serialize};

pub const SHAPING_EPS: f64 = 1e-3;

/// `(s − IS_min) / (IS_max − s)` with `s = clamp(is, IS_min, IS_max − ε)`.
pub fn shape_reward(is: f64, is_min: f64, is_max: f64) -> f64 {
    shape_reward_eps(is, is_min, is_max, SHAPING_EPS)
}

pub fn shape_reward_eps(is: f64, is_min: f64, is_max: f64, eps: f64) -> f64 {
    assert!(is_min < is_max, "reward bounds must satisfy is_min < is_max");
    let s = if is.is_nan() { is_min } else { is.clamp(is_min, is_max - eps) };
    (s - is_min) / (is_max - s)
}

/// Exponential moving average of batch-mean rewards, seeded by the first batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub value: Option<f64>,
    pub decay: f64,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Self { value: None, decay }
    }

    /// Value to subtract for a batch with mean reward `batch_mean`; the
    /// first batch uses its own mean.
    pub fn current(&self, batch_mean: f64) -> f64 {
        self.value.unwrap_or(batch_mean)
    }

    pub fn update(&mut self, batch_mean: f64) {
        self.value = Some(match self.value {
            None => batch_mean,
            Some(b) => self.decay * b + (1.0 - self.decay) * batch_mean,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert_eq!(shape_reward(1.0, 1.0, 11.24), 0.0);
        assert!((shape_reward(6.12, 1.0, 11.24) - 1.0).abs() < 1e-12);
        let top = shape_reward(11.24, 1.0, 11.24);
        assert!((top - 10.239 / 0.001).abs() < 1e-6);
        assert_eq!(shape_reward(50.0, 1.0, 11.24), top);
        assert_eq!(shape_reward(0.2, 1.0, 11.24), 0.0);
    }

    #[test]
    fn baseline_starts_at_first_mean() {
        let mut b = Baseline::new(0.95);
        assert_eq!(b.current(2.0), 2.0);
        b.update(2.0);
        b.update(4.0);
        assert!((b.value.unwrap() - (0.95 * 2.0 + 0.05 * 4.0)).abs() < 1e-15);
    }
}
