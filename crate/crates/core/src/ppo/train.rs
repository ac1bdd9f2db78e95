//! Rollout collection, the PPO update step, deterministic evaluation, and
//! the top-level training loop with CSV metrics.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{streams, ConfigError, ExperimentConfig, TaskKind, TrainingKind};
use crate::encoding::NormalizationBounds;
use crate::env::{EnvConfig, EnvError, GeometryFeatures, VecArmEnv, ACTION_DIM};
use crate::policy::{
    gaussian_entropy, gaussian_log_prob, sample_action, save_checkpoint, ActivityStats,
    CheckpointError, ModelKind, Policy, PolicyError,
};
use crate::reward::{
    schedule_weights, total_reward, CurriculumSchedule, DeadZoneTracker, RewardBreakdown,
    RewardScales, RewardWeightSet,
};

use super::{clip_grad_norm, compute_gae, AdamState, PpoConfig, RolloutBuffer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("non-finite loss at update {update}: {diagnostics}")]
    NonFiniteLoss { update: usize, diagnostics: String },
}

/// One-dimensional quadratic-reward bandit: every episode is a single step,
/// the reward is `-(action - 0.4)^2`, and an episode counts as a success
/// when the action lands within 0.05 of the optimum.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    num_envs: usize,
    bounds: NormalizationBounds,
    terminal: Vec<bool>,
}

pub const TOY_OPTIMUM: f64 = 0.4;
pub const TOY_RAW_OBS: f64 = 0.7;

impl ToyEnv {
    pub fn new(num_envs: usize) -> Self {
        Self { num_envs, bounds: NormalizationBounds::unit(1), terminal: vec![false; num_envs] }
    }

    fn observations(&self) -> Array2<f64> {
        Array2::from_elem((self.num_envs, 1), TOY_RAW_OBS)
    }

    fn step(&mut self, actions: &Array2<f64>) -> (Array1<f64>, Vec<bool>, Vec<bool>) {
        let mut rewards = Array1::zeros(self.num_envs);
        let mut success = vec![false; self.num_envs];
        for e in 0..self.num_envs {
            let a = actions[[e, 0]].clamp(-1.0, 1.0);
            rewards[e] = -(a - TOY_OPTIMUM).powi(2);
            success[e] = (a - TOY_OPTIMUM).abs() < 0.05;
            self.terminal[e] = true;
        }
        let done = self.terminal.clone();
        (rewards, done, success)
    }

    fn reset_env(&mut self, e: usize) {
        self.terminal[e] = false;
    }
}

/// The environment behind one training run: the kinematic arm task with its
/// per-environment dead-zone trackers, or the toy bandit.
pub enum TaskEnv {
    Arm { env: VecArmEnv, trackers: Vec<DeadZoneTracker> },
    Toy(ToyEnv),
}

impl TaskEnv {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, TrainError> {
        match cfg.experiment.task {
            TaskKind::ReachGrasp => {
                let env = VecArmEnv::new(cfg.env.clone(), cfg.experiment.seed)?;
                let trackers =
                    vec![DeadZoneTracker::new(cfg.deadzone); cfg.env.num_envs];
                Ok(TaskEnv::Arm { env, trackers })
            }
            TaskKind::ToyQuadratic => Ok(TaskEnv::Toy(ToyEnv::new(cfg.env.num_envs))),
        }
    }

    pub fn num_envs(&self) -> usize {
        match self {
            TaskEnv::Arm { env, .. } => env.num_envs(),
            TaskEnv::Toy(t) => t.num_envs,
        }
    }

    pub fn bounds(&self) -> &NormalizationBounds {
        match self {
            TaskEnv::Arm { env, .. } => env.observation_bounds(),
            TaskEnv::Toy(t) => &t.bounds,
        }
    }

    fn observations(&self) -> Array2<f64> {
        match self {
            TaskEnv::Arm { env, .. } => env.observations(),
            TaskEnv::Toy(t) => t.observations(),
        }
    }

    fn action_dim(&self) -> usize {
        match self {
            TaskEnv::Arm { .. } => ACTION_DIM,
            TaskEnv::Toy(_) => 1,
        }
    }
}

/// Weight source resolved from the training kind: a constant set for
/// vanilla runs, the curriculum schedule (with dead-zone modulation) for CRL.
#[derive(Debug, Clone, Copy)]
pub struct WeightSource {
    vanilla: Option<RewardWeightSet>,
    schedule: CurriculumSchedule,
}

impl WeightSource {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        match cfg.experiment.training {
            TrainingKind::Vanilla => {
                Self { vanilla: Some(cfg.vanilla_weights()), schedule: cfg.curriculum }
            }
            TrainingKind::Crl => Self { vanilla: None, schedule: cfg.curriculum },
        }
    }

    pub fn effective(&self, update: u64, tracker: Option<&DeadZoneTracker>) -> RewardWeightSet {
        match self.vanilla {
            Some(w) => w,
            None => schedule_weights(update, &self.schedule, tracker),
        }
    }

    pub fn stage(&self, update: u64) -> u8 {
        match self.vanilla {
            Some(_) => 0,
            None => self.schedule.stage(update),
        }
    }
}

/// Per-rollout diagnostics used for the metrics log.
#[derive(Debug, Clone, Copy, Default)]
pub struct RolloutMetrics {
    pub mean_reward: f64,
    pub components: RewardBreakdown,
    pub spike_rate: f64,
    pub deadzone_fraction: f64,
    pub episodes_done: usize,
    pub grasp_successes: usize,
    pub reach_successes: usize,
}

fn activity_rate(stats: &ActivityStats) -> f64 {
    match stats {
        ActivityStats::Snn(s) => s.spike_rate(),
        ActivityStats::Ann(s) => s.hidden_rate,
    }
}

/// Collect `horizon` steps from every environment under the current policy.
/// Curriculum weights are queried with the global update counter; dead-zone
/// trackers advance per control step.
pub fn collect_rollout(
    policy: &Policy,
    task: &mut TaskEnv,
    weights: &WeightSource,
    scales: &RewardScales,
    update: u64,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(RolloutBuffer, RolloutMetrics), TrainError> {
    let n = task.num_envs();
    let obs_dim = task.bounds().dim();
    let act_dim = task.action_dim();
    let total = horizon * n;

    let mut obs_store = Array2::zeros((total, obs_dim));
    let mut act_store = Array2::zeros((total, act_dim));
    let mut logp_store = Array1::zeros(total);
    let mut reward_store = Array1::zeros(total);
    let mut value_store = Array1::zeros(total);
    let mut done_store = vec![false; total];

    let mut metrics = RolloutMetrics::default();
    let mut spike_rate_sum = 0.0;
    let mut deadzone_active_steps = 0usize;

    let mut obs_raw = task.observations();
    for t in 0..horizon {
        let xhat = task.bounds().normalize_batch(obs_raw.view()).map_err(PolicyError::from)?;
        let (means, stats) = policy.actor_mean(&xhat)?;
        let values = policy.values(&xhat)?;
        spike_rate_sum += activity_rate(&stats);

        let (actions, log_probs) = sample_action(&means, policy.log_std(), rng);
        let clamped = actions.mapv(|a| a.clamp(-1.0, 1.0));

        let (rewards, done, grasped, reached) = match task {
            TaskEnv::Arm { env, trackers } => {
                let outcome = env.step(&clamped)?;
                let mut rewards = Array1::zeros(n);
                let mut grasped = vec![false; n];
                for e in 0..n {
                    let geom: &GeometryFeatures = &outcome.geometry[e];
                    let w = weights.effective(update, Some(&trackers[e]));
                    let (r, breakdown) = total_reward(geom, &w, scales);
                    rewards[e] = r;
                    grasped[e] = geom.grasped;
                    metrics.components.prox_align += breakdown.prox_align;
                    metrics.components.grip_geom += breakdown.grip_geom;
                    metrics.components.task += breakdown.task;
                    metrics.components.pose += breakdown.pose;
                    metrics.components.pose_penalty += breakdown.pose_penalty;
                    if trackers[e].active() {
                        deadzone_active_steps += 1;
                    }
                    trackers[e].update(geom.d_mid, geom.grasped, breakdown.task);
                }
                (rewards, outcome.done, grasped, outcome.reach_achieved)
            }
            TaskEnv::Toy(toy) => {
                let (rewards, done, success) = toy.step(&clamped);
                for r in rewards.iter() {
                    metrics.components.task += r;
                }
                (rewards, done.clone(), success, vec![false; n])
            }
        };

        for e in 0..n {
            let i = t * n + e;
            obs_store.row_mut(i).assign(&xhat.row(e));
            act_store.row_mut(i).assign(&actions.row(e));
            logp_store[i] = log_probs[e];
            reward_store[i] = rewards[e];
            value_store[i] = values[e];
            done_store[i] = done[e];
            metrics.mean_reward += rewards[e];
        }

        for e in 0..n {
            if done[e] {
                metrics.episodes_done += 1;
                if grasped[e] {
                    metrics.grasp_successes += 1;
                }
                if reached[e] {
                    metrics.reach_successes += 1;
                }
                match task {
                    TaskEnv::Arm { env, trackers } => {
                        env.reset_env(e);
                        trackers[e].reset();
                    }
                    TaskEnv::Toy(toy) => toy.reset_env(e),
                }
            }
        }
        obs_raw = task.observations();
    }

    let xhat = task.bounds().normalize_batch(obs_raw.view()).map_err(PolicyError::from)?;
    let bootstrap_values = policy.values(&xhat)?;

    let denom = total as f64;
    metrics.mean_reward /= denom;
    metrics.components.prox_align /= denom;
    metrics.components.grip_geom /= denom;
    metrics.components.task /= denom;
    metrics.components.pose /= denom;
    metrics.components.pose_penalty /= denom;
    metrics.spike_rate = spike_rate_sum / horizon as f64;
    metrics.deadzone_fraction = deadzone_active_steps as f64 / denom;

    let buffer = RolloutBuffer {
        horizon,
        num_envs: n,
        obs: obs_store,
        actions: act_store,
        log_probs: logp_store,
        rewards: reward_store,
        values: value_store,
        dones: done_store,
        bootstrap_values,
    };
    Ok((buffer, metrics))
}

/// Adam state for both heads.
pub struct PolicyOptimizer {
    actor_w_in: AdamState,
    actor_w_out: AdamState,
    actor_log_std: AdamState,
    critic_w_in: AdamState,
    critic_w_out: AdamState,
}

impl PolicyOptimizer {
    pub fn new(policy: &Policy) -> Self {
        Self {
            actor_w_in: AdamState::new(policy.actor.w_in.len()),
            actor_w_out: AdamState::new(policy.actor.w_out.len()),
            actor_log_std: AdamState::new(policy.log_std().len()),
            critic_w_in: AdamState::new(policy.critic.w_in.len()),
            critic_w_out: AdamState::new(policy.critic.w_out.len()),
        }
    }
}

/// Loss statistics of one PPO update, averaged over epochs and minibatches.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub grad_norm_actor: f64,
    pub grad_norm_critic: f64,
}

fn gather_rows(src: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), src.ncols()));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&src.row(i));
    }
    out
}

fn gather(src: &Array1<f64>, idx: &[usize]) -> Array1<f64> {
    Array1::from_iter(idx.iter().map(|&i| src[i]))
}

/// One PPO update over the buffer: normalized advantages, clipped surrogate
/// objective, value regression and entropy bonus, gradients through the
/// unrolled network, per-head gradient-norm clipping, Adam.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut Policy,
    opt: &mut PolicyOptimizer,
    buffer: &RolloutBuffer,
    advantages: &Array1<f64>,
    returns: &Array1<f64>,
    cfg: &PpoConfig,
    update: usize,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, TrainError> {
    let total = buffer.len();
    let adv_mean = advantages.sum() / total as f64;
    let adv_std =
        (advantages.mapv(|a| (a - adv_mean).powi(2)).sum() / total as f64).sqrt();
    let adv_norm = advantages.mapv(|a| (a - adv_mean) / (adv_std + 1e-8));

    let mut stats = UpdateStats::default();
    let mut batches = 0.0;

    let mut indices: Vec<usize> = (0..total).collect();
    for _epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        let chunk = total.div_ceil(cfg.minibatches);
        for mb in indices.chunks(chunk) {
            let m = mb.len() as f64;
            let obs = gather_rows(&buffer.obs, mb);
            let acts = gather_rows(&buffer.actions, mb);
            let old_lp = gather(&buffer.log_probs, mb);
            let adv = gather(&adv_norm, mb);
            let ret = gather(returns, mb);

            // ----- actor -----
            let (y_raw, cache) = policy.train_forward(&policy.actor, &obs)?;
            let mean = y_raw.mapv(f64::tanh);
            let log_std = policy.log_std().clone();
            let new_lp = gaussian_log_prob(&mean, &log_std, &acts);

            let mut actor_loss = 0.0;
            let mut d_lp = Array1::zeros(mb.len());
            for (i, (&lp_new, &lp_old)) in new_lp.iter().zip(old_lp.iter()).enumerate() {
                let ratio = (lp_new - lp_old).exp();
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                let surr1 = ratio * adv[i];
                let surr2 = clipped * adv[i];
                actor_loss -= surr1.min(surr2) / m;
                if surr1 <= surr2 {
                    d_lp[i] = -adv[i] * ratio / m;
                }
            }

            let entropy = gaussian_entropy(&log_std);

            // d(loss)/d(mean) and d(loss)/d(log_std) through the Gaussian.
            let mut d_mean = Array2::zeros(mean.dim());
            let mut g_log_std = Array1::from_elem(log_std.len(), -cfg.entropy_coef);
            for i in 0..mb.len() {
                for j in 0..log_std.len() {
                    let std = log_std[j].exp();
                    let z = (acts[[i, j]] - mean[[i, j]]) / std;
                    d_mean[[i, j]] = d_lp[i] * z / std;
                    g_log_std[j] += d_lp[i] * (z * z - 1.0);
                }
            }
            let d_y_raw = &d_mean * &mean.mapv(|v| 1.0 - v * v);
            let (mut g_in, mut g_out) = policy.train_backward(&policy.actor, &cache, &d_y_raw)?;

            if !actor_loss.is_finite()
                || g_in.iter().any(|v| !v.is_finite())
                || g_out.iter().any(|v| !v.is_finite())
            {
                return Err(TrainError::NonFiniteLoss {
                    update,
                    diagnostics: format!(
                        "actor_loss={actor_loss}, |adv|max={}, ratio path produced non-finite gradients",
                        adv.iter().fold(0.0f64, |a, b| a.max(b.abs()))
                    ),
                });
            }

            {
                let mut g_ls = g_log_std.as_slice_mut().expect("contiguous");
                let mut refs: [&mut [f64]; 3] = [
                    g_in.as_slice_mut().expect("contiguous"),
                    g_out.as_slice_mut().expect("contiguous"),
                    &mut g_ls,
                ];
                stats.grad_norm_actor += clip_grad_norm(&mut refs, cfg.grad_clip);
            }
            opt.actor_w_in.apply(
                cfg.learning_rate,
                policy.actor.w_in.as_slice_mut().expect("contiguous"),
                g_in.as_slice().expect("contiguous"),
            );
            opt.actor_w_out.apply(
                cfg.learning_rate,
                policy.actor.w_out.as_slice_mut().expect("contiguous"),
                g_out.as_slice().expect("contiguous"),
            );
            let ls = policy.actor.log_std.as_mut().expect("actor log_std");
            opt.actor_log_std.apply(
                cfg.learning_rate,
                ls.as_slice_mut().expect("contiguous"),
                g_log_std.as_slice().expect("contiguous"),
            );
            ls.mapv_inplace(|v| v.clamp(crate::policy::LOG_STD_MIN, crate::policy::LOG_STD_MAX));

            // ----- critic -----
            let (v_raw, v_cache) = policy.train_forward(&policy.critic, &obs)?;
            let v = v_raw.column(0).to_owned();
            let err = &v - &ret;
            let critic_loss = err.mapv(|e| e * e).sum() / m;
            let d_v = err.mapv(|e| cfg.value_coef * 2.0 * e / m);
            let d_v_raw = d_v.insert_axis(Axis(1));
            let (mut cg_in, mut cg_out) = policy.train_backward(&policy.critic, &v_cache, &d_v_raw)?;

            if !critic_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    update,
                    diagnostics: format!("critic_loss={critic_loss}"),
                });
            }

            {
                let mut refs: [&mut [f64]; 2] = [
                    cg_in.as_slice_mut().expect("contiguous"),
                    cg_out.as_slice_mut().expect("contiguous"),
                ];
                stats.grad_norm_critic += clip_grad_norm(&mut refs, cfg.grad_clip);
            }
            opt.critic_w_in.apply(
                cfg.learning_rate,
                policy.critic.w_in.as_slice_mut().expect("contiguous"),
                cg_in.as_slice().expect("contiguous"),
            );
            opt.critic_w_out.apply(
                cfg.learning_rate,
                policy.critic.w_out.as_slice_mut().expect("contiguous"),
                cg_out.as_slice().expect("contiguous"),
            );

            stats.actor_loss += actor_loss;
            stats.critic_loss += critic_loss;
            stats.entropy += entropy;
            batches += 1.0;
        }
    }

    stats.actor_loss /= batches;
    stats.critic_loss /= batches;
    stats.entropy /= batches;
    stats.grad_norm_actor /= batches;
    stats.grad_norm_critic /= batches;
    Ok(stats)
}

/// Outcome of one deterministic evaluation episode.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    pub grasped: bool,
    pub reached: bool,
    pub total_reward: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub success_rate: f64,
    pub reach_rate: f64,
    pub mean_reward: f64,
    pub episodes: Vec<EpisodeRecord>,
}

/// Per-step evaluation callback: `(step, episode, geometry, breakdown)`.
pub type StepRecorder<'a> = &'a mut dyn FnMut(usize, usize, &GeometryFeatures, &RewardBreakdown);

/// Run `episodes` deterministic episodes (action = policy mean) with fresh
/// cube spawns drawn from the evaluation substream `shard`.
pub fn evaluate(
    policy: &Policy,
    config: &ExperimentConfig,
    episodes: usize,
    env_seed: u64,
    shard: u64,
    weight_update: u64,
) -> Result<EvalReport, TrainError> {
    evaluate_recorded(policy, config, episodes, env_seed, shard, weight_update, &mut |_, _, _, _| {})
}

/// [`evaluate`] with a per-step recorder for trajectory dumps.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_recorded(
    policy: &Policy,
    config: &ExperimentConfig,
    episodes: usize,
    env_seed: u64,
    shard: u64,
    weight_update: u64,
    recorder: StepRecorder,
) -> Result<EvalReport, TrainError> {
    match config.experiment.task {
        TaskKind::ReachGrasp => {
            evaluate_arm(policy, config, episodes, env_seed, shard, weight_update, recorder)
        }
        TaskKind::ToyQuadratic => evaluate_toy(policy, episodes),
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_arm(
    policy: &Policy,
    config: &ExperimentConfig,
    episodes: usize,
    env_seed: u64,
    shard: u64,
    weight_update: u64,
    recorder: StepRecorder,
) -> Result<EvalReport, TrainError> {
    let env_cfg = EnvConfig { num_envs: episodes, ..config.env.clone() };
    let mut env = VecArmEnv::sharded(env_cfg, env_seed, shard)?;
    let weights = WeightSource::from_config(config).effective(weight_update, None);
    let scales = config.reward;

    let mut total_rewards = vec![0.0; episodes];
    let mut steps = vec![0usize; episodes];
    let mut was_done = vec![false; episodes];
    let mut obs_raw = env.observations();

    for step in 0..config.env.episode_len {
        let xhat = env
            .observation_bounds()
            .normalize_batch(obs_raw.view())
            .map_err(PolicyError::from)?;
        let (mean, _) = policy.actor_mean(&xhat)?;
        let outcome = env.step(&mean)?;
        for e in 0..episodes {
            if !was_done[e] {
                let (r, breakdown) = total_reward(&outcome.geometry[e], &weights, &scales);
                total_rewards[e] += r;
                steps[e] += 1;
                recorder(step, e, &outcome.geometry[e], &breakdown);
            }
            was_done[e] = outcome.done[e];
        }
        if was_done.iter().all(|&d| d) {
            break;
        }
        obs_raw = outcome.observations;
    }

    let mut records = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let state = env.state(e);
        let grasped = env.geometry(e).grasped;
        records.push(EpisodeRecord {
            episode: e,
            steps: steps[e],
            grasped,
            reached: state.reach_achieved,
            total_reward: total_rewards[e],
        });
    }
    Ok(report_from_records(records))
}

fn evaluate_toy(policy: &Policy, episodes: usize) -> Result<EvalReport, TrainError> {
    let mut toy = ToyEnv::new(episodes);
    let obs_raw = toy.observations();
    let xhat = toy.bounds.normalize_batch(obs_raw.view()).map_err(PolicyError::from)?;
    let (mean, _) = policy.actor_mean(&xhat)?;
    let (rewards, _, success) = toy.step(&mean);
    let records = (0..episodes)
        .map(|e| EpisodeRecord {
            episode: e,
            steps: 1,
            grasped: success[e],
            reached: false,
            total_reward: rewards[e],
        })
        .collect();
    Ok(report_from_records(records))
}

fn report_from_records(records: Vec<EpisodeRecord>) -> EvalReport {
    let n = records.len().max(1) as f64;
    EvalReport {
        success_rate: records.iter().filter(|r| r.grasped).count() as f64 / n,
        reach_rate: records.iter().filter(|r| r.reached).count() as f64 / n,
        mean_reward: records.iter().map(|r| r.total_reward).sum::<f64>() / n,
        episodes: records,
    }
}

/// Metrics CSV columns, one row per update.
pub const METRICS_HEADER: [&str; 16] = [
    "update",
    "global_env_steps",
    "mean_reward",
    "success_rate",
    "actor_loss",
    "critic_loss",
    "entropy",
    "spike_rate_r",
    "r_prox_align",
    "r_grip_geom",
    "r_task",
    "r_pose",
    "p_pose",
    "stage",
    "deadzone_fraction",
    "reach_rate",
];

#[derive(Debug, Clone, Serialize)]
struct MetricsRow {
    update: u64,
    global_env_steps: u64,
    mean_reward: f64,
    success_rate: f64,
    actor_loss: f64,
    critic_loss: f64,
    entropy: f64,
    spike_rate_r: f64,
    r_prox_align: f64,
    r_grip_geom: f64,
    r_task: f64,
    r_pose: f64,
    p_pose: f64,
    stage: u8,
    deadzone_fraction: f64,
    reach_rate: f64,
}

/// One point of the training curve kept in memory for aggregation.
#[derive(Debug, Clone, Copy)]
pub struct HistoryPoint {
    pub update: u64,
    pub env_steps: u64,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub reach_rate: f64,
}

#[derive(Debug)]
pub struct TrainArtifacts {
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub history: Vec<HistoryPoint>,
    pub final_eval: Option<EvalReport>,
}

/// Full training loop: collect, estimate advantages, update, periodically
/// evaluate and checkpoint, append one metrics row per update.
pub fn train(config: &ExperimentConfig, out_dir: &Path) -> Result<TrainArtifacts, TrainError> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    config.save(&out_dir.join("config.toml"))?;

    let seed = config.experiment.seed;
    let spec = config.network_spec();
    let neuron = config.neuron.to_neuron_config()?;
    let mut policy = Policy::new(
        config.experiment.model,
        spec,
        neuron,
        &mut streams::stream(seed, streams::POLICY_INIT),
    )?;
    let mut opt = PolicyOptimizer::new(&policy);
    let mut task = TaskEnv::from_config(config)?;
    let weights = WeightSource::from_config(config);
    let mut action_rng = streams::stream(seed, streams::ACTION_SAMPLING);
    let mut mb_rng = streams::stream(seed, streams::MINIBATCH);

    let metrics_path = out_dir.join("metrics.csv");
    let mut writer = csv::Writer::from_path(&metrics_path)?;

    let checkpoint_path = out_dir.join("checkpoint.ckpt");
    let mut history = Vec::with_capacity(config.ppo.updates);
    let mut last_eval: Option<EvalReport> = None;
    let n = config.env.num_envs as u64;
    let h = config.ppo.horizon as u64;

    for update in 0..config.ppo.updates {
        let (buffer, rollout) = collect_rollout(
            &policy,
            &mut task,
            &weights,
            &config.reward,
            update as u64,
            config.ppo.horizon,
            &mut action_rng,
        )?;
        let (advantages, returns) = compute_gae(&buffer, config.ppo.discount, config.ppo.gae_lambda);
        let stats = ppo_update(
            &mut policy,
            &mut opt,
            &buffer,
            &advantages,
            &returns,
            &config.ppo,
            update,
            &mut mb_rng,
        )?;

        let done = update + 1 == config.ppo.updates;
        if (update + 1) % config.ppo.eval_interval == 0 || done {
            let shard = streams::EVAL_BASE + update as u64 * config.ppo.eval_episodes as u64;
            let report = evaluate(
                &policy,
                config,
                config.ppo.eval_episodes,
                seed,
                shard,
                update as u64,
            )?;
            last_eval = Some(report);
        }
        let (success_rate, reach_rate) = last_eval
            .as_ref()
            .map(|r| (r.success_rate, r.reach_rate))
            .unwrap_or((0.0, 0.0));

        let env_steps = (update as u64 + 1) * n * h;
        writer.serialize(MetricsRow {
            update: update as u64,
            global_env_steps: env_steps,
            mean_reward: rollout.mean_reward,
            success_rate,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            entropy: stats.entropy,
            spike_rate_r: rollout.spike_rate,
            r_prox_align: rollout.components.prox_align,
            r_grip_geom: rollout.components.grip_geom,
            r_task: rollout.components.task,
            r_pose: rollout.components.pose,
            p_pose: rollout.components.pose_penalty,
            stage: weights.stage(update as u64),
            deadzone_fraction: rollout.deadzone_fraction,
            reach_rate,
        })?;
        writer.flush()?;

        history.push(HistoryPoint {
            update: update as u64,
            env_steps,
            mean_reward: rollout.mean_reward,
            success_rate,
            reach_rate,
        });

        if (update + 1) % config.ppo.checkpoint_interval == 0 || done {
            save_checkpoint(&checkpoint_path, &policy)?;
        }

        if let (Some(threshold), Some(eval)) = (config.ppo.early_stop_reach_rate, &last_eval) {
            if eval.reach_rate >= threshold {
                save_checkpoint(&checkpoint_path, &policy)?;
                break;
            }
        }
    }

    Ok(TrainArtifacts { metrics_path, checkpoint_path, history, final_eval: last_eval })
}

/// Measured activity rates of a trained policy over one evaluation batch of
/// observations, in audit mode (long simulation window).
pub fn measure_rates(
    policy: &Policy,
    config: &ExperimentConfig,
    batch: usize,
) -> Result<crate::energy::ModelRates, TrainError> {
    let obs_raw = match config.experiment.task {
        TaskKind::ReachGrasp => {
            let env_cfg = EnvConfig { num_envs: batch, ..config.env.clone() };
            let env = VecArmEnv::sharded(env_cfg, config.experiment.seed, streams::EVAL_BASE)?;
            env.observations()
        }
        TaskKind::ToyQuadratic => ToyEnv::new(batch).observations(),
    };
    let bounds = match config.experiment.task {
        TaskKind::ReachGrasp => crate::env::observation_bounds(&config.env),
        TaskKind::ToyQuadratic => NormalizationBounds::unit(1),
    };
    let xhat = bounds.normalize_batch(obs_raw.view()).map_err(PolicyError::from)?;

    match policy.kind {
        ModelKind::Snn => {
            let mut audit = policy.clone();
            audit.spec.steps = config.network.audit_steps;
            let (_, stats) =
                crate::policy::actor_forward(&audit.actor, &xhat, &audit.spec, &audit.neuron)?;
            Ok(crate::energy::ModelRates::Snn {
                spike_rate: stats.spike_rate(),
                membrane_rate: stats.membrane_activation_rate(),
            })
        }
        ModelKind::Ann => {
            let (_, stats) = crate::policy::ann_forward(&policy.actor, &xhat);
            Ok(crate::energy::ModelRates::Ann {
                input_rate: stats.input_rate,
                output_rate: stats.hidden_rate,
            })
        }
    }
}
