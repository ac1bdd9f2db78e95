//! Clipped-surrogate PPO with generalized advantage estimation, driving
//! curriculum-weighted training of the spiking (or baseline) actor-critic.

mod train;

pub use train::{
    collect_rollout, evaluate, evaluate_recorded, measure_rates, ppo_update, train,
    EpisodeRecord, EvalReport, HistoryPoint, PolicyOptimizer, RolloutMetrics, StepRecorder,
    TaskEnv, ToyEnv, TrainArtifacts, TrainError, UpdateStats, WeightSource, METRICS_HEADER,
    TOY_OPTIMUM, TOY_RAW_OBS,
};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// PPO hyperparameters and training-loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Rollout length per update, in environment steps.
    pub horizon: usize,
    pub updates: usize,
    pub grad_clip: f64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub checkpoint_interval: usize,
    /// Stop before `updates` once the evaluated reach rate hits this value.
    pub early_stop_reach_rate: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 4,
            minibatches: 4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            horizon: 32,
            updates: 300,
            grad_clip: 1.0,
            eval_interval: 10,
            eval_episodes: 10,
            checkpoint_interval: 100,
            early_stop_reach_rate: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(format!("clip must be in (0,1), got {}", self.clip));
        }
        for (name, v) in [("discount", self.discount), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0,1], got {v}"));
            }
        }
        if self.learning_rate < 0.0 {
            return Err("learning_rate must be nonnegative".into());
        }
        if self.epochs == 0 || self.minibatches == 0 || self.horizon == 0 || self.updates == 0 {
            return Err("epochs, minibatches, horizon and updates must be >= 1".into());
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 || self.checkpoint_interval == 0 {
            return Err("eval and checkpoint settings must be >= 1".into());
        }
        if self.grad_clip <= 0.0 {
            return Err("grad_clip must be positive".into());
        }
        Ok(())
    }
}

/// On-policy experience of one rollout: `horizon x num_envs` transitions
/// flattened step-major (index `t * num_envs + e`).
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub horizon: usize,
    pub num_envs: usize,
    /// Normalized observations.
    pub obs: Array2<f64>,
    /// Pre-clamp action samples (matching the stored log-probs).
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub rewards: Array1<f64>,
    pub values: Array1<f64>,
    pub dones: Vec<bool>,
    /// Value estimates of the state after the final step, one per env.
    pub bootstrap_values: Array1<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.horizon * self.num_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, step: usize, env: usize) -> usize {
        step * self.num_envs + env
    }
}

/// Generalized advantage estimation with terminal masking and a bootstrap
/// value per environment:
/// `delta_t = r_t + discount * V(s_{t+1}) * (1 - done_t) - V(s_t)`,
/// `A_t = delta_t + discount * lambda * (1 - done_t) * A_{t+1}`,
/// `returns = advantages + values`.
pub fn compute_gae(buffer: &RolloutBuffer, discount: f64, lambda: f64) -> (Array1<f64>, Array1<f64>) {
    let n = buffer.num_envs;
    let h = buffer.horizon;
    let mut advantages = Array1::zeros(h * n);
    for e in 0..n {
        let mut running = 0.0;
        for t in (0..h).rev() {
            let i = buffer.index(t, e);
            let not_done = if buffer.dones[i] { 0.0 } else { 1.0 };
            let next_value = if t == h - 1 {
                buffer.bootstrap_values[e]
            } else {
                buffer.values[buffer.index(t + 1, e)]
            };
            let delta = buffer.rewards[i] + discount * next_value * not_done - buffer.values[i];
            running = delta + discount * lambda * not_done * running;
            advantages[i] = running;
        }
    }
    let returns = &advantages + &buffer.values;
    (advantages, returns)
}

/// First-order adaptive optimizer state for one tensor (standard moment
/// decay 0.9 / 0.999).
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    /// One bias-corrected update over parameter and gradient slices of the
    /// tensor this state was created for.
    pub fn apply(&mut self, lr: f64, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Scale a set of gradient tensors so their joint L2 norm does not exceed
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for v in g.iter() {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn buffer_from(
        rewards: Vec<f64>,
        values: Vec<f64>,
        dones: Vec<bool>,
        bootstrap: f64,
    ) -> RolloutBuffer {
        let h = rewards.len();
        RolloutBuffer {
            horizon: h,
            num_envs: 1,
            obs: Array2::zeros((h, 1)),
            actions: Array2::zeros((h, 1)),
            log_probs: Array1::zeros(h),
            rewards: Array1::from_vec(rewards),
            values: Array1::from_vec(values),
            dones,
            bootstrap_values: Array1::from_elem(1, bootstrap),
        }
    }

    #[test]
    fn gae_terminal_single_step() {
        // gamma = lambda = 1, done: A = r - V(s)
        let buffer = buffer_from(vec![2.0], vec![0.5], vec![true], 99.0);
        let (adv, ret) = compute_gae(&buffer, 1.0, 1.0);
        assert_relative_eq!(adv[0], 1.5);
        assert_relative_eq!(ret[0], 2.0);
    }

    #[test]
    fn gae_zero_everything() {
        let buffer = buffer_from(vec![0.0; 5], vec![0.0; 5], vec![false; 5], 0.0);
        let (adv, _) = compute_gae(&buffer, 0.99, 0.95);
        assert!(adv.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn gae_three_step_hand_recursion() {
        // Manual recursion with gamma = 0.9, lambda = 0.95, bootstrap 0.3.
        let rewards = [1.0, -0.5, 2.0];
        let values = [0.2, 0.4, 0.1];
        let bootstrap = 0.3;
        let (g, l) = (0.9, 0.95);
        let d2 = rewards[2] + g * bootstrap - values[2];
        let a2 = d2;
        let d1 = rewards[1] + g * values[2] - values[1];
        let a1 = d1 + g * l * a2;
        let d0 = rewards[0] + g * values[1] - values[0];
        let a0 = d0 + g * l * a1;

        let buffer = buffer_from(rewards.to_vec(), values.to_vec(), vec![false; 3], bootstrap);
        let (adv, ret) = compute_gae(&buffer, g, l);
        assert_relative_eq!(adv[0], a0, epsilon = 1e-12);
        assert_relative_eq!(adv[1], a1, epsilon = 1e-12);
        assert_relative_eq!(adv[2], a2, epsilon = 1e-12);
        assert_relative_eq!(ret[1], a1 + values[1], epsilon = 1e-12);
    }

    #[test]
    fn gae_masks_across_terminals() {
        // A terminal at t=1 must stop both bootstrap and advantage flow.
        let buffer = buffer_from(
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, 0.0],
            vec![false, true, false],
            5.0,
        );
        let (adv, _) = compute_gae(&buffer, 1.0, 1.0);
        // t=1 is terminal: A_1 = r_1 = 1; t=0 chains into it.
        assert_relative_eq!(adv[1], 1.0);
        assert_relative_eq!(adv[0], 1.0 + adv[1]);
        // t=2 bootstraps: A_2 = 1 + 5
        assert_relative_eq!(adv[2], 6.0);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut state = AdamState::new(2);
        let mut params = [1.0, -1.0];
        state.apply(0.1, &mut params, &[1.0, -1.0]);
        assert!(params[0] < 1.0);
        assert!(params[1] > -1.0);
    }

    #[test]
    fn adam_zero_lr_is_identity() {
        let mut state = AdamState::new(3);
        let mut params = [0.5, -0.25, 1e-9];
        let before = params;
        for _ in 0..10 {
            state.apply(0.0, &mut params, &[0.3, -0.7, 2.0]);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn grad_clip_scales_to_max_norm() {
        let mut a = [3.0, 4.0];
        let norm = {
            let mut refs: [&mut [f64]; 1] = [&mut a];
            clip_grad_norm(&mut refs, 1.0)
        };
        assert_relative_eq!(norm, 5.0);
        assert_relative_eq!((a[0] * a[0] + a[1] * a[1]).sqrt(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn grad_clip_leaves_small_gradients_alone() {
        let mut a = [0.3, 0.4];
        let before = a;
        let mut refs: [&mut [f64]; 1] = [&mut a];
        clip_grad_norm(&mut refs, 1.0);
        assert_eq!(a, before);
    }

    #[test]
    fn clipped_objective_never_exceeds_unclipped() {
        // min(ratio*A, clip(ratio)*A) <= ratio*A termwise, so the clipped
        // loss (negated mean) is always >= the unclipped loss
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 4.0 - 2.0
        };
        for _ in 0..100 {
            let ratio = (next()).exp();
            let adv = next();
            let clipped = ratio.clamp(0.8, 1.2);
            assert!((ratio * adv).min(clipped * adv) <= ratio * adv + 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip: 0.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { discount: 1.2, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { minibatches: 0, ..Default::default() }.validate().is_err());
    }
}
