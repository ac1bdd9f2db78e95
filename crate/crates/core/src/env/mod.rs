//! Vectorized kinematic reach-and-grasp environment. Each environment owns a
//! 6-joint arm with a coupled parallel gripper and one cube on the table;
//! actions are end-effector twist commands resolved through damped
//! least-squares inverse kinematics plus a gripper gap rate.

pub mod kinematics;

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::NormalizationBounds;
use kinematics::{
    dls_solve, finger_positions, forward_kinematics, jacobian, verticality, FkResult, JOINT_LIMITS,
};

pub const OBS_DIM: usize = 18;
pub const ACTION_DIM: usize = 7;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("non-finite action for environment {env} at component {component}")]
    NonFiniteAction { env: usize, component: usize },
    #[error("action batch shape {got:?} does not match ({envs}, {dim})")]
    ActionShape { got: (usize, usize), envs: usize, dim: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

/// Reach-and-grasp environment parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub num_envs: usize,
    pub episode_len: usize,
    /// Cube edge length (m); the optimal grip gap follows from it.
    pub cube_edge: f64,
    /// Cube spawn region in the XY plane (the cube rests on the table).
    pub spawn_min: [f64; 2],
    pub spawn_max: [f64; 2],
    /// Grasp thresholds: fingertip distance, gap error, planar alignment.
    pub finger_threshold: f64,
    pub gap_threshold: f64,
    pub align_threshold: f64,
    /// Twist integration scales and joint-step bound.
    pub max_joint_step: f64,
    pub lin_step: f64,
    pub ang_step: f64,
    pub gap_rate: f64,
    pub dls_damping: f64,
    pub gap_max: f64,
    pub gap_init: f64,
    /// Reach-phase bookkeeping: distance threshold and hold duration.
    pub reach_threshold: f64,
    pub reach_hold: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_envs: 64,
            episode_len: 300,
            cube_edge: 0.05,
            spawn_min: [0.35, -0.15],
            spawn_max: [0.50, 0.15],
            finger_threshold: 0.03,
            gap_threshold: 0.01,
            align_threshold: 0.02,
            max_joint_step: 0.05,
            lin_step: 0.02,
            ang_step: 0.05,
            gap_rate: 0.01,
            dls_damping: 0.05,
            gap_max: 0.08,
            gap_init: 0.07,
            reach_threshold: 0.05,
            reach_hold: 10,
        }
    }
}

impl EnvConfig {
    /// Optimal grip gap: cube edge plus a small closing allowance.
    pub fn gap_target(&self) -> f64 {
        self.cube_edge + 0.004
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.num_envs == 0 {
            return Err(EnvError::InvalidConfig("num_envs must be >= 1".into()));
        }
        if self.episode_len == 0 {
            return Err(EnvError::InvalidConfig("episode_len must be >= 1".into()));
        }
        if self.spawn_min[0] >= self.spawn_max[0] || self.spawn_min[1] >= self.spawn_max[1] {
            return Err(EnvError::InvalidConfig("spawn_min must be below spawn_max".into()));
        }
        let reach = (self.spawn_max[0].powi(2)
            + self.spawn_max[1].abs().max(self.spawn_min[1].abs()).powi(2))
        .sqrt();
        if reach > 0.53 {
            return Err(EnvError::InvalidConfig(format!(
                "spawn region radius {reach:.3} m exceeds the arm workspace (0.53 m)"
            )));
        }
        if self.cube_edge <= 0.0 || self.gap_max <= 0.0 || self.gap_init > self.gap_max {
            return Err(EnvError::InvalidConfig("gripper geometry is inconsistent".into()));
        }
        for (name, v) in [
            ("finger_threshold", self.finger_threshold),
            ("gap_threshold", self.gap_threshold),
            ("align_threshold", self.align_threshold),
            ("max_joint_step", self.max_joint_step),
            ("lin_step", self.lin_step),
            ("ang_step", self.ang_step),
            ("gap_rate", self.gap_rate),
            ("dls_damping", self.dls_damping),
            ("reach_threshold", self.reach_threshold),
        ] {
            if v <= 0.0 {
                return Err(EnvError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Full kinematic state of one environment.
#[derive(Debug, Clone)]
pub struct ArmState {
    pub q: [f64; 6],
    pub eef_pos: Vector3<f64>,
    pub eef_rot: UnitQuaternion<f64>,
    pub gap: f64,
    pub cube: Vector3<f64>,
    pub step: usize,
    pub terminal: bool,
    reach_hold_count: usize,
    pub reach_achieved: bool,
}

/// Every distance, offset and angle the reward consumes, for one
/// environment at one step.
#[derive(Debug, Clone, Copy)]
pub struct GeometryFeatures {
    /// Cube center to gripper midpoint (3D).
    pub d: f64,
    pub d_lf: f64,
    pub d_rf: f64,
    /// XY-plane alignment error (identical to `eps_xy`, kept separately).
    pub d_align: f64,
    /// 3D midpoint-to-cube distance.
    pub d_mid: f64,
    pub dx: f64,
    pub dy: f64,
    pub z_lf: f64,
    pub z_rf: f64,
    pub z_mid: f64,
    pub z_cube: f64,
    pub gap: f64,
    pub gap_target: f64,
    pub eps_xy: f64,
    /// Verticality score in [0,1].
    pub verticality: f64,
    pub grasped: bool,
}

/// Geometry of a gripper/cube configuration; `grasped` is filled in by the
/// caller via [`grasp_check`].
pub fn compute_geometry(
    fk: &FkResult,
    gap: f64,
    gap_target: f64,
    cube: &Vector3<f64>,
) -> GeometryFeatures {
    let (lf, rf) = finger_positions(fk, gap);
    let mid = (lf + rf) / 2.0;
    let dx = (mid.x - cube.x).abs();
    let dy = (mid.y - cube.y).abs();
    let eps_xy = (dx * dx + dy * dy).sqrt();
    let d = (mid - cube).norm();
    GeometryFeatures {
        d,
        d_lf: (lf - cube).norm(),
        d_rf: (rf - cube).norm(),
        d_align: eps_xy,
        d_mid: d,
        dx,
        dy,
        z_lf: lf.z,
        z_rf: rf.z,
        z_mid: mid.z,
        z_cube: cube.z,
        gap,
        gap_target,
        eps_xy,
        verticality: verticality(fk.eef_rot.quaternion()).expect("FK rotation is unit"),
        grasped: false,
    }
}

/// Geometric grasp test: both fingertips near the cube, gap near optimal,
/// planar alignment tight. All inequalities are strict.
pub fn grasp_check(geom: &GeometryFeatures, cfg: &EnvConfig) -> bool {
    geom.d_lf < cfg.finger_threshold
        && geom.d_rf < cfg.finger_threshold
        && (geom.gap - geom.gap_target).abs() < cfg.gap_threshold
        && geom.eps_xy < cfg.align_threshold
}

/// Observation layout: joints (6), end-effector position (3), cube position
/// (3), cube-minus-eef delta (3), gap (1), verticality (1), d_mid (1).
pub fn build_observation(state: &ArmState, geom: &GeometryFeatures) -> Array1<f64> {
    let mut obs = Array1::zeros(OBS_DIM);
    for i in 0..6 {
        obs[i] = state.q[i];
    }
    let (lf, rf) = finger_positions(
        &forward_kinematics(&state.q),
        state.gap,
    );
    let mid = (lf + rf) / 2.0;
    obs[6] = state.eef_pos.x;
    obs[7] = state.eef_pos.y;
    obs[8] = state.eef_pos.z;
    obs[9] = state.cube.x;
    obs[10] = state.cube.y;
    obs[11] = state.cube.z;
    obs[12] = state.cube.x - mid.x;
    obs[13] = state.cube.y - mid.y;
    obs[14] = state.cube.z - mid.z;
    obs[15] = state.gap;
    obs[16] = geom.verticality;
    obs[17] = geom.d_mid;
    obs
}

/// Step results for the whole batch. Observations are raw (unnormalized).
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Array2<f64>,
    pub geometry: Vec<GeometryFeatures>,
    pub done: Vec<bool>,
    pub joint_clamped: Vec<bool>,
    pub reach_achieved: Vec<bool>,
}

/// Batch of independent environments with a shared configuration. Each
/// environment draws cube spawns from its own seeded stream, so the k-th
/// spawn of environment i is the same no matter when episodes end.
#[derive(Debug, Clone)]
pub struct VecArmEnv {
    cfg: EnvConfig,
    states: Vec<ArmState>,
    spawn_rngs: Vec<ChaCha8Rng>,
    bounds: NormalizationBounds,
}

impl VecArmEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        Self::sharded(cfg, seed, 0)
    }

    /// Build a shard whose environments are numbered starting at
    /// `first_env_index`; shards of the same seed reproduce the whole batch.
    pub fn sharded(cfg: EnvConfig, seed: u64, first_env_index: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        let bounds = observation_bounds(&cfg);
        let spawn_rngs = (0..cfg.num_envs)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(first_env_index + i as u64);
                rng
            })
            .collect();
        let states = (0..cfg.num_envs).map(|_| home_state()).collect();
        let mut env = Self { cfg, states, spawn_rngs, bounds };
        for i in 0..env.cfg.num_envs {
            env.reset_env(i);
        }
        Ok(env)
    }

    pub fn num_envs(&self) -> usize {
        self.cfg.num_envs
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Published per-feature normalization bounds for the observation vector.
    pub fn observation_bounds(&self) -> &NormalizationBounds {
        &self.bounds
    }

    pub fn state(&self, i: usize) -> &ArmState {
        &self.states[i]
    }

    pub fn geometry(&self, i: usize) -> GeometryFeatures {
        let state = &self.states[i];
        let fk = forward_kinematics(&state.q);
        let mut geom = compute_geometry(&fk, state.gap, self.cfg.gap_target(), &state.cube);
        geom.grasped = grasp_check(&geom, &self.cfg);
        geom
    }

    /// Reset one environment: arm home, fresh cube spawn, counters zeroed.
    pub fn reset_env(&mut self, i: usize) {
        let cube = {
            let rng = &mut self.spawn_rngs[i];
            let x = rng.random_range(self.cfg.spawn_min[0]..self.cfg.spawn_max[0]);
            let y = rng.random_range(self.cfg.spawn_min[1]..self.cfg.spawn_max[1]);
            Vector3::new(x, y, self.cfg.cube_edge / 2.0)
        };
        let mut state = home_state();
        state.gap = self.cfg.gap_init;
        state.cube = cube;
        self.states[i] = state;
    }

    /// Reset every environment and return the fresh raw observations.
    pub fn reset_all(&mut self) -> Array2<f64> {
        for i in 0..self.cfg.num_envs {
            self.reset_env(i);
        }
        self.observations()
    }

    pub fn observations(&self) -> Array2<f64> {
        let mut obs = Array2::zeros((self.cfg.num_envs, OBS_DIM));
        for i in 0..self.cfg.num_envs {
            let geom = self.geometry(i);
            let row = build_observation(&self.states[i], &geom);
            obs.row_mut(i).assign(&row);
        }
        obs
    }

    /// Advance every environment by one action row. Terminal environments
    /// are frozen until reset.
    pub fn step(&mut self, actions: &Array2<f64>) -> Result<StepOutcome, EnvError> {
        if actions.dim() != (self.cfg.num_envs, ACTION_DIM) {
            return Err(EnvError::ActionShape {
                got: actions.dim(),
                envs: self.cfg.num_envs,
                dim: ACTION_DIM,
            });
        }
        for (e, row) in actions.rows().into_iter().enumerate() {
            if let Some(c) = row.iter().position(|a| !a.is_finite()) {
                return Err(EnvError::NonFiniteAction { env: e, component: c });
            }
        }

        let mut geometry = Vec::with_capacity(self.cfg.num_envs);
        let mut done = Vec::with_capacity(self.cfg.num_envs);
        let mut joint_clamped = Vec::with_capacity(self.cfg.num_envs);
        let mut reach_achieved = Vec::with_capacity(self.cfg.num_envs);

        for i in 0..self.cfg.num_envs {
            let action = actions.row(i);
            let clamped_flag = if self.states[i].terminal {
                false
            } else {
                self.step_single(i, action.as_slice().expect("contiguous row"))
            };
            let geom = self.geometry(i);
            let state = &mut self.states[i];

            if !state.terminal {
                if geom.d_mid < self.cfg.reach_threshold {
                    state.reach_hold_count += 1;
                    if state.reach_hold_count >= self.cfg.reach_hold {
                        state.reach_achieved = true;
                    }
                } else {
                    state.reach_hold_count = 0;
                }
                if geom.grasped || state.step >= self.cfg.episode_len {
                    state.terminal = true;
                }
            }

            geometry.push(geom);
            done.push(state.terminal);
            joint_clamped.push(clamped_flag);
            reach_achieved.push(state.reach_achieved);
        }

        Ok(StepOutcome {
            observations: self.observations(),
            geometry,
            done,
            joint_clamped,
            reach_achieved,
        })
    }

    /// Integrate the twist command of one environment. Returns whether any
    /// joint was clamped at its limit.
    fn step_single(&mut self, i: usize, action: &[f64]) -> bool {
        let cfg = &self.cfg;
        let state = &mut self.states[i];
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();

        let fk = forward_kinematics(&state.q);
        let twist = Vector6::new(
            a[0] * cfg.lin_step,
            a[1] * cfg.lin_step,
            a[2] * cfg.lin_step,
            a[3] * cfg.ang_step,
            a[4] * cfg.ang_step,
            a[5] * cfg.ang_step,
        );
        let dq = dls_solve(&jacobian(&fk), &twist, cfg.dls_damping);

        let mut clamped = false;
        for j in 0..6 {
            let delta = dq[j].clamp(-cfg.max_joint_step, cfg.max_joint_step);
            let target = state.q[j] + delta;
            let limit = JOINT_LIMITS[j];
            let bounded = target.clamp(-limit, limit);
            if bounded != target {
                clamped = true;
            }
            state.q[j] = bounded;
        }
        state.gap = (state.gap + a[6] * cfg.gap_rate).clamp(0.0, cfg.gap_max);

        let fk = forward_kinematics(&state.q);
        state.eef_pos = fk.eef_pos;
        state.eef_rot = fk.eef_rot;
        state.step += 1;
        clamped
    }
}

fn home_state() -> ArmState {
    let fk = forward_kinematics(&[0.0; 6]);
    ArmState {
        q: [0.0; 6],
        eef_pos: fk.eef_pos,
        eef_rot: fk.eef_rot,
        gap: 0.07,
        cube: Vector3::new(0.4, 0.0, 0.025),
        step: 0,
        terminal: false,
        reach_hold_count: 0,
        reach_achieved: false,
    }
}

/// Fixed normalization bounds published for the 18 observation features,
/// tight around the operating ranges of the reach-and-grasp workspace so the
/// normalized features use the full unit interval.
pub fn observation_bounds(cfg: &EnvConfig) -> NormalizationBounds {
    let mut min = Vec::with_capacity(OBS_DIM);
    let mut max = Vec::with_capacity(OBS_DIM);
    // working joint ranges (well inside the hard limits)
    for limit in [1.2, 0.9, 0.9, 0.9, 1.2, 0.9] {
        min.push(-limit);
        max.push(limit);
    }
    // end-effector position over the tabletop workspace
    min.extend_from_slice(&[0.1, -0.45, 0.0]);
    max.extend_from_slice(&[0.65, 0.45, 0.55]);
    // cube position (spawn region inflated)
    min.extend_from_slice(&[cfg.spawn_min[0] - 0.05, cfg.spawn_min[1] - 0.05, 0.0]);
    max.extend_from_slice(&[cfg.spawn_max[0] + 0.05, cfg.spawn_max[1] + 0.05, 0.1]);
    // cube - gripper midpoint delta
    min.extend_from_slice(&[-0.35, -0.35, -0.35]);
    max.extend_from_slice(&[0.35, 0.35, 0.35]);
    // gap, verticality, d_mid
    min.extend_from_slice(&[0.0, 0.0, 0.0]);
    max.extend_from_slice(&[cfg.gap_max, 1.0, 0.5]);
    NormalizationBounds::new(Array1::from_vec(min), Array1::from_vec(max))
        .expect("published bounds are non-degenerate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_cfg(n: usize) -> EnvConfig {
        EnvConfig { num_envs: n, ..Default::default() }
    }

    #[test]
    fn reset_is_reproducible_and_inside_spawn_box() {
        let cfg = small_cfg(4);
        let mut a = VecArmEnv::new(cfg.clone(), 7).unwrap();
        let mut b = VecArmEnv::new(cfg.clone(), 7).unwrap();
        for _ in 0..50 {
            let oa = a.reset_all();
            let ob = b.reset_all();
            assert_eq!(oa, ob);
            for i in 0..4 {
                let cube = a.state(i).cube;
                assert!(cube.x >= cfg.spawn_min[0] && cube.x < cfg.spawn_max[0]);
                assert!(cube.y >= cfg.spawn_min[1] && cube.y < cfg.spawn_max[1]);
                assert_relative_eq!(cube.z, cfg.cube_edge / 2.0);
            }
        }
    }

    #[test]
    fn after_reset_not_grasped() {
        let mut env = VecArmEnv::new(small_cfg(8), 3).unwrap();
        env.reset_all();
        for i in 0..8 {
            assert!(!env.geometry(i).grasped);
        }
    }

    #[test]
    fn zero_action_only_advances_counter() {
        let mut env = VecArmEnv::new(small_cfg(2), 1).unwrap();
        env.reset_all();
        let q_before = env.state(0).q;
        let gap_before = env.state(0).gap;
        let out = env.step(&Array2::zeros((2, ACTION_DIM))).unwrap();
        assert_eq!(env.state(0).q, q_before);
        assert_eq!(env.state(0).gap, gap_before);
        assert_eq!(env.state(0).step, 1);
        assert!(!out.done[0]);
    }

    #[test]
    fn constant_up_command_raises_eef() {
        let mut env = VecArmEnv::new(small_cfg(1), 5).unwrap();
        env.reset_all();
        let mut actions = Array2::zeros((1, ACTION_DIM));
        actions[[0, 2]] = 1.0; // +z translation command
        let mut last_z = env.state(0).eef_pos.z;
        for _ in 0..20 {
            env.step(&actions).unwrap();
            let z = env.state(0).eef_pos.z;
            assert!(z > last_z, "eef z must increase monotonically");
            last_z = z;
        }
    }

    #[test]
    fn non_finite_action_rejected() {
        let mut env = VecArmEnv::new(small_cfg(1), 5).unwrap();
        env.reset_all();
        let mut actions = Array2::zeros((1, ACTION_DIM));
        actions[[0, 3]] = f64::NAN;
        assert!(matches!(
            env.step(&actions),
            Err(EnvError::NonFiniteAction { env: 0, component: 3 })
        ));
    }

    #[test]
    fn grasp_check_thresholds() {
        let cfg = small_cfg(1);
        let target = cfg.gap_target();
        let mut geom = GeometryFeatures {
            d: 0.0,
            d_lf: 0.0,
            d_rf: 0.0,
            d_align: 0.0,
            d_mid: 0.0,
            dx: 0.0,
            dy: 0.0,
            z_lf: 0.025,
            z_rf: 0.025,
            z_mid: 0.025,
            z_cube: 0.025,
            gap: target,
            gap_target: target,
            eps_xy: 0.0,
            verticality: 1.0,
            grasped: false,
        };
        assert!(grasp_check(&geom, &cfg));
        geom.d_lf = 1.0;
        assert!(!grasp_check(&geom, &cfg));
        // boundary is exclusive
        geom.d_lf = cfg.finger_threshold;
        assert!(!grasp_check(&geom, &cfg));
    }

    #[test]
    fn analytic_grasp_configuration_detected_in_env() {
        // Drive the state directly into a straddling configuration and check
        // the full geometry path reports a grasp.
        let cfg = small_cfg(1);
        let mut env = VecArmEnv::new(cfg.clone(), 11).unwrap();
        env.reset_all();
        // place the cube exactly under the fingertip center of the home pose
        let fk = forward_kinematics(&[0.0; 6]);
        let (lf, rf) = finger_positions(&fk, cfg.gap_target());
        let mid = (lf + rf) / 2.0;
        env.states[0].cube = mid;
        env.states[0].gap = cfg.gap_target();
        let geom = env.geometry(0);
        assert!(geom.grasped, "straddling configuration must count as a grasp: {geom:?}");
    }

    #[test]
    fn geometry_self_consistency() {
        let mut env = VecArmEnv::new(small_cfg(4), 13).unwrap();
        env.reset_all();
        let mut actions = Array2::zeros((4, ACTION_DIM));
        for k in 0..30 {
            for i in 0..4 {
                for j in 0..ACTION_DIM {
                    actions[[i, j]] = ((k * 7 + i * 3 + j) as f64 * 0.37).sin();
                }
            }
            env.step(&actions).unwrap();
            for i in 0..4 {
                let g = env.geometry(i);
                let restored = (g.eps_xy.powi(2) + (g.z_mid - g.z_cube).powi(2)).sqrt();
                assert_relative_eq!(g.d_mid, restored, epsilon = 1e-9);
                assert!(g.verticality >= 0.0 && g.verticality <= 1.0);
                assert!(g.d >= 0.0 && g.d_lf >= 0.0 && g.d_rf >= 0.0);
            }
        }
    }

    #[test]
    fn observation_layout_delta_matches_recomputation() {
        let mut env = VecArmEnv::new(small_cfg(3), 17).unwrap();
        let obs = env.reset_all();
        assert_eq!(obs.ncols(), OBS_DIM);
        for i in 0..3 {
            let state = env.state(i);
            let fk = forward_kinematics(&state.q);
            let (lf, rf) = finger_positions(&fk, state.gap);
            let mid = (lf + rf) / 2.0;
            assert_relative_eq!(obs[[i, 12]], state.cube.x - mid.x, epsilon = 1e-12);
            assert_relative_eq!(obs[[i, 13]], state.cube.y - mid.y, epsilon = 1e-12);
            assert_relative_eq!(obs[[i, 14]], state.cube.z - mid.z, epsilon = 1e-12);
        }
    }

    #[test]
    fn eef_at_cube_zeroes_delta_features() {
        let cfg = small_cfg(1);
        let mut env = VecArmEnv::new(cfg.clone(), 31).unwrap();
        env.reset_all();
        // move the cube onto the fingertip midpoint
        let fk = forward_kinematics(&env.state(0).q);
        let (lf, rf) = finger_positions(&fk, env.state(0).gap);
        env.states[0].cube = (lf + rf) / 2.0;
        let geom = env.geometry(0);
        let obs = build_observation(env.state(0), &geom);
        assert_relative_eq!(obs[12], 0.0, epsilon = 1e-12);
        assert_relative_eq!(obs[13], 0.0, epsilon = 1e-12);
        assert_relative_eq!(obs[14], 0.0, epsilon = 1e-12);
        assert_relative_eq!(obs[17], 0.0, epsilon = 1e-12); // d_mid
    }

    #[test]
    fn batched_equals_sharded_singles() {
        let cfg = small_cfg(3);
        let mut batch = VecArmEnv::new(cfg.clone(), 23).unwrap();
        let single_cfg = EnvConfig { num_envs: 1, ..cfg.clone() };
        let mut singles: Vec<_> = (0..3)
            .map(|i| VecArmEnv::sharded(single_cfg.clone(), 23, i as u64).unwrap())
            .collect();
        batch.reset_all();
        for s in singles.iter_mut() {
            s.reset_all();
        }
        let mut actions = Array2::zeros((3, ACTION_DIM));
        for k in 0..25 {
            for i in 0..3 {
                for j in 0..ACTION_DIM {
                    actions[[i, j]] = (((k + 1) * (i + 2) * (j + 3)) as f64 * 0.11).cos();
                }
            }
            let out = batch.step(&actions).unwrap();
            for (i, single) in singles.iter_mut().enumerate() {
                let row = actions.row(i).to_owned().insert_axis(ndarray::Axis(0));
                let single_out = single.step(&row).unwrap();
                assert_eq!(out.observations.row(i), single_out.observations.row(0));
                assert_eq!(out.done[i], single_out.done[0]);
            }
        }
    }

    #[test]
    fn episode_ends_at_step_limit() {
        let cfg = EnvConfig { num_envs: 1, episode_len: 5, ..Default::default() };
        let mut env = VecArmEnv::new(cfg, 2).unwrap();
        env.reset_all();
        let actions = Array2::zeros((1, ACTION_DIM));
        for k in 1..=5 {
            let out = env.step(&actions).unwrap();
            assert_eq!(out.done[0], k == 5);
        }
        // frozen after terminal
        let out = env.step(&actions).unwrap();
        assert!(out.done[0]);
        assert_eq!(env.state(0).step, 5);
    }

    #[test]
    fn spawn_containment_statistical() {
        let cfg = small_cfg(1);
        let mut env = VecArmEnv::new(cfg.clone(), 99).unwrap();
        for _ in 0..10_000 {
            env.reset_env(0);
            let c = env.state(0).cube;
            assert!(c.x >= cfg.spawn_min[0] && c.x < cfg.spawn_max[0]);
            assert!(c.y >= cfg.spawn_min[1] && c.y < cfg.spawn_max[1]);
        }
    }

    #[test]
    fn config_validation_rejects_bad_spawn() {
        let cfg = EnvConfig { spawn_max: [0.9, 0.5], ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = EnvConfig { spawn_min: [0.5, -0.1], spawn_max: [0.4, 0.1], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
