//! Batched REINFORCE with a baseline and an entropy bonus.

use rand::Rng;
use thiserror::Error;

use crate::controller::{ControllerError, ControllerParams, SampleTrace};

/// A stochastic policy with a flat parameter vector.
pub trait Policy {
    type Sample;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Gradient of `a · log Pr(sample) + b · H(sample)`.
    fn score_gradient(&self, sample: &Self::Sample, coef_log_prob: f64, coef_entropy: f64) -> Result<Vec<f64>, String>;
}

impl Policy for ControllerParams {
    type Sample = SampleTrace;

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn score_gradient(&self, sample: &SampleTrace, coef_log_prob: f64, coef_entropy: f64) -> Result<Vec<f64>, String> {
        self.gradient(&sample.genome, coef_log_prob, coef_entropy)
            .map(|(g, _)| g)
            .map_err(|e: ControllerError| e.to_string())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum UpdateError {
    #[error("{samples} samples but {rewards} rewards")]
    BatchMismatch { samples: usize, rewards: usize },
    #[error("empty batch")]
    Empty,
    #[error("policy gradient failed: {0}")]
    Gradient(String),
    #[error("non-finite policy gradient; update skipped")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub grad_norm: f64,
    pub mean_advantage: f64,
}

/// Mean over the batch of `(R − b) ∇ log Pr + β ∇H`, without stepping.
pub fn policy_gradient<P: Policy>(
    policy: &P,
    samples: &[P::Sample],
    rewards: &[f64],
    baseline: f64,
    entropy_coef: f64,
) -> Result<Vec<f64>, UpdateError> {
    if samples.len() != rewards.len() {
        return Err(UpdateError::BatchMismatch {
            samples: samples.len(),
            rewards: rewards.len(),
        });
    }
    if samples.is_empty() {
        return Err(UpdateError::Empty);
    }
    let n = samples.len() as f64;
    let mut total = vec![0.0; policy.params().len()];
    for (s, &r) in samples.iter().zip(rewards) {
        let g = policy.score_gradient(s, r - baseline, entropy_coef).map_err(UpdateError::Gradient)?;
        for (t, gi) in total.iter_mut().zip(g) {
            *t += gi;
        }
    }
    for t in &mut total {
        *t /= n;
    }
    if total.iter().any(|g| !g.is_finite()) {
        return Err(UpdateError::NonFinite);
    }
    Ok(total)
}

/// One plain gradient-ascent step `θ ← θ + lr · ĝ`. On error the
/// parameters are left as they were.
pub fn reinforce_update<P: Policy>(
    policy: &mut P,
    samples: &[P::Sample],
    rewards: &[f64],
    baseline: f64,
    lr: f64,
    entropy_coef: f64,
) -> Result<UpdateStats, UpdateError> {
    let g = policy_gradient(policy, samples, rewards, baseline, entropy_coef)?;
    let next: Vec<f64> = policy.params().iter().zip(&g).map(|(p, gi)| p + lr * gi).collect();
    if next.iter().any(|p| !p.is_finite()) {
        return Err(UpdateError::NonFinite);
    }
    policy.params_mut().copy_from_slice(&next);
    Ok(UpdateStats {
        grad_norm: g.iter().map(|x| x * x).sum::<f64>().sqrt(),
        mean_advantage: rewards.iter().map(|r| r - baseline).sum::<f64>() / rewards.len() as f64,
    })
}

/// Single Bernoulli action with `Pr(1) = σ(θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliPolicy {
    pub theta: [f64; 1],
}

impl BernoulliPolicy {
    pub fn new(theta: f64) -> Self {
        Self { theta: [theta] }
    }

    pub fn p(&self) -> f64 {
        1.0 / (1.0 + (-self.theta[0]).exp())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> bool {
        rng.random::<f64>() < self.p()
    }

    /// `d E[R] / dθ` for reward equal to the action value.
    pub fn analytic_gradient(&self) -> f64 {
        let p = self.p();
        p * (1.0 - p)
    }
}

impl Policy for BernoulliPolicy {
    type Sample = bool;

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn score_gradient(&self, &a: &bool, coef_log_prob: f64, coef_entropy: f64) -> Result<Vec<f64>, String> {
        let p = self.p();
        let dlogp = if a { 1.0 - p } else { -p };
        let dh = -self.theta[0] * p * (1.0 - p);
        Ok(vec![coef_log_prob * dlogp + coef_entropy * dh])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_advantage_without_entropy_is_a_no_op() {
        let mut pol = BernoulliPolicy::new(0.37);
        let before = pol;
        reinforce_update(&mut pol, &[true, false, true], &[0.4, 0.4, 0.4], 0.4, 0.1, 0.0).unwrap();
        assert_eq!(pol, before);
    }

    #[test]
    fn update_is_linear_in_advantage() {
        let samples = [true, false, false, true];
        let rewards = [1.0, 0.2, -0.3, 0.5];
        let doubled: Vec<f64> = rewards.iter().map(|r| 2.0 * r).collect();
        let mut a = BernoulliPolicy::new(-0.2);
        let mut b = a;
        reinforce_update(&mut a, &samples, &rewards, 0.0, 0.1, 0.0).unwrap();
        reinforce_update(&mut b, &samples, &doubled, 0.0, 0.1, 0.0).unwrap();
        assert!(((b.theta[0] + 0.2) - 2.0 * (a.theta[0] + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn entropy_bonus_pushes_toward_uniform() {
        let mut pol = BernoulliPolicy::new(1.5);
        reinforce_update(&mut pol, &[true], &[0.0], 0.0, 0.5, 1.0).unwrap();
        assert!(pol.theta[0] < 1.5);
    }

    #[test]
    fn mismatched_batch_is_rejected() {
        let mut pol = BernoulliPolicy::new(0.0);
        assert!(reinforce_update(&mut pol, &[true], &[1.0, 2.0], 0.0, 0.1, 0.0).is_err());
    }
}
