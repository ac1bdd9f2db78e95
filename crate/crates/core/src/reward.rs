//! Composite reach-and-grasp reward: proximity/alignment, gripper geometry,
//! task success, posture, and a posture penalty, plus the two-stage
//! curriculum weight schedule with dead-zone-aware reweighting.

use serde::{Deserialize, Serialize};

use crate::env::GeometryFeatures;

/// Fixed sensitivity/scale factors of the reward components. All strictly
/// positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardScales {
    /// Sensitivities of the four proximity/alignment terms.
    pub proximity: [f64; 4],
    /// Sensitivities of the three gripper-geometry terms.
    pub gripper: [f64; 3],
    /// Posture shaping: alignment nonlinearity, planar and vertical penalty
    /// contributions.
    pub pose: [f64; 3],
    /// Reward magnitude for a successful grasp.
    pub success_reward: f64,
    /// Scaling factor of the posture penalty.
    pub penalty_scale: f64,
}

impl Default for RewardScales {
    fn default() -> Self {
        Self {
            proximity: [3.0, 5.0, 5.0, 5.0],
            gripper: [20.0, 20.0, 30.0],
            pose: [10.0, 0.5, 0.5],
            success_reward: 10.0,
            penalty_scale: 1.0,
        }
    }
}

impl RewardScales {
    pub fn validate(&self) -> Result<(), String> {
        let all = self
            .proximity
            .iter()
            .chain(self.gripper.iter())
            .chain(self.pose.iter())
            .chain([&self.success_reward, &self.penalty_scale]);
        for v in all {
            if !(*v > 0.0) {
                return Err(format!("reward scales must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Time-varying weights of the reward components. All nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeightSet {
    pub proximity: [f64; 4],
    pub gripper: [f64; 3],
    pub task: f64,
    pub pose: [f64; 2],
}

impl RewardWeightSet {
    pub fn validate(&self) -> Result<(), String> {
        let all = self
            .proximity
            .iter()
            .chain(self.gripper.iter())
            .chain(self.pose.iter())
            .chain([&self.task]);
        for v in all {
            if !(*v >= 0.0) {
                return Err(format!("reward weights must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    /// Upper bound of the bounded shaping components (everything except the
    /// task spike).
    pub fn shaping_bound(&self) -> f64 {
        self.proximity.iter().sum::<f64>() + self.gripper.iter().sum::<f64>() + self.pose[0] + self.pose[1]
    }
}

/// Stage-I emphasis: spatial proximity, alignment precision, postural
/// stability.
pub fn stage1_default() -> RewardWeightSet {
    RewardWeightSet {
        proximity: [0.5, 0.3, 0.3, 0.2],
        gripper: [0.05, 0.05, 0.05],
        task: 0.2,
        pose: [0.3, 0.3],
    }
}

/// Stage-II emphasis: gripper symmetry, finger-object relationships, grasp
/// success.
pub fn stage2_default() -> RewardWeightSet {
    RewardWeightSet {
        proximity: [0.2, 0.15, 0.15, 0.1],
        gripper: [0.4, 0.4, 0.4],
        task: 1.0,
        pose: [0.15, 0.15],
    }
}

/// Two-stage curriculum: stage I strictly before `stage_boundary`, stage II
/// from it onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSchedule {
    pub stage_boundary: u64,
    pub stage1: RewardWeightSet,
    pub stage2: RewardWeightSet,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self { stage_boundary: 2000, stage1: stage1_default(), stage2: stage2_default() }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if self.stage_boundary == 0 {
            return Err("stage_boundary must be positive".into());
        }
        self.stage1.validate()?;
        self.stage2.validate()
    }

    pub fn stage(&self, global_step: u64) -> u8 {
        if global_step < self.stage_boundary {
            1
        } else {
            2
        }
    }
}

/// Dead-zone parameters: hysteresis on the best distance, reweighting window
/// and the two multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeadZoneParams {
    pub hysteresis: f64,
    pub window: u32,
    pub up_factor: f64,
    pub down_factor: f64,
}

impl Default for DeadZoneParams {
    fn default() -> Self {
        Self { hysteresis: 0.02, window: 50, up_factor: 1.5, down_factor: 0.5 }
    }
}

impl DeadZoneParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.up_factor >= 1.0) {
            return Err(format!("up_factor must be >= 1, got {}", self.up_factor));
        }
        if !(self.down_factor > 0.0 && self.down_factor <= 1.0) {
            return Err(format!("down_factor must be in (0, 1], got {}", self.down_factor));
        }
        if self.window == 0 {
            return Err("window must be >= 1".into());
        }
        if !(self.hysteresis > 0.0) {
            return Err("hysteresis must be positive".into());
        }
        Ok(())
    }
}

/// Per-environment policy-regression detector: when the gripper drifts away
/// after a previous low distance with no grasp recorded, reweighting toward
/// alignment terms is activated for a fixed window.
#[derive(Debug, Clone, Copy)]
pub struct DeadZoneTracker {
    params: DeadZoneParams,
    best_d_mid: f64,
    active_steps_left: u32,
}

impl DeadZoneTracker {
    pub fn new(params: DeadZoneParams) -> Self {
        Self { params, best_d_mid: f64::INFINITY, active_steps_left: 0 }
    }

    pub fn active(&self) -> bool {
        self.active_steps_left > 0
    }

    /// Clear the flag and forget the best distance (episode reset or grasp).
    pub fn reset(&mut self) {
        self.best_d_mid = f64::INFINITY;
        self.active_steps_left = 0;
    }

    /// Advance the state machine by one control step.
    pub fn update(&mut self, d_mid: f64, grasped: bool, r_task: f64) {
        if grasped {
            self.reset();
            return;
        }
        if self.active_steps_left > 0 {
            self.active_steps_left -= 1;
        }
        // Regression test against the best distance seen before this step.
        if d_mid > self.best_d_mid + self.params.hysteresis && r_task == 0.0 {
            self.active_steps_left = self.params.window;
        }
        self.best_d_mid = self.best_d_mid.min(d_mid);
    }
}

/// Proximity and alignment shaping, four bounded terms.
pub fn prox_align_reward(geom: &GeometryFeatures, w: &RewardWeightSet, s: &RewardScales) -> f64 {
    w.proximity[0] * (1.0 - (s.proximity[0] * (geom.d + geom.d_lf + geom.d_rf) / 3.0).tanh())
        + w.proximity[1] * (1.0 - (s.proximity[1] * geom.d_align).tanh())
        + w.proximity[2] * (1.0 - (s.proximity[2] * geom.d_mid).tanh())
        + w.proximity[3] * (1.0 - (s.proximity[3] * (geom.dx + geom.dy)).tanh())
}

/// Gripper symmetry, vertical alignment and grip-width shaping.
pub fn grip_geom_reward(geom: &GeometryFeatures, w: &RewardWeightSet, s: &RewardScales) -> f64 {
    w.gripper[0] * (1.0 - (s.gripper[0] * (geom.z_lf - geom.z_rf).abs()).tanh())
        + w.gripper[1] * (1.0 - (s.gripper[1] * (geom.z_mid - geom.z_cube).abs()).tanh())
        + w.gripper[2] * (-s.gripper[2] * (geom.gap - geom.gap_target).abs()).exp()
}

/// Task completion spike.
pub fn task_reward(grasped: bool, task_weight: f64, success_reward: f64) -> f64 {
    if grasped {
        task_weight * success_reward
    } else {
        0.0
    }
}

/// Upright-posture reward and the planar/vertical misalignment penalty.
pub fn pose_reward_and_penalty(
    geom: &GeometryFeatures,
    w: &RewardWeightSet,
    s: &RewardScales,
) -> (f64, f64) {
    let r_pose = w.pose[0] * geom.verticality
        + w.pose[1] * (1.0 - (s.pose[0] * geom.eps_xy).tanh());
    let p_pose = s.pose[1] * geom.eps_xy * s.penalty_scale
        - s.pose[2] * (1.0 - geom.verticality) * s.penalty_scale;
    (r_pose, p_pose)
}

/// Per-component values of one reward evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardBreakdown {
    pub prox_align: f64,
    pub grip_geom: f64,
    pub task: f64,
    pub pose: f64,
    pub pose_penalty: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.prox_align + self.grip_geom + self.task + self.pose + self.pose_penalty
    }
}

/// Total reward and its component breakdown.
pub fn total_reward(
    geom: &GeometryFeatures,
    w: &RewardWeightSet,
    s: &RewardScales,
) -> (f64, RewardBreakdown) {
    let (pose, pose_penalty) = pose_reward_and_penalty(geom, w, s);
    let breakdown = RewardBreakdown {
        prox_align: prox_align_reward(geom, w, s),
        grip_geom: grip_geom_reward(geom, w, s),
        task: task_reward(geom.grasped, w.task, s.success_reward),
        pose,
        pose_penalty,
    };
    (breakdown.total(), breakdown)
}

/// Effective weight set at a global step: the stage set, with dead-zone
/// modulation applied when the tracker is active. The stage boundary itself
/// is never shifted by dead-zone activity.
pub fn schedule_weights(
    global_step: u64,
    schedule: &CurriculumSchedule,
    tracker: Option<&DeadZoneTracker>,
) -> RewardWeightSet {
    let mut w = if global_step < schedule.stage_boundary {
        schedule.stage1
    } else {
        schedule.stage2
    };
    if let Some(t) = tracker {
        if t.active() {
            let up = t.params.up_factor;
            let down = t.params.down_factor;
            for a in w.proximity.iter_mut() {
                *a *= up;
            }
            for b in w.gripper.iter_mut() {
                *b *= up;
            }
            w.task *= down;
            for d in w.pose.iter_mut() {
                *d *= down;
            }
        }
    }
    w
}
