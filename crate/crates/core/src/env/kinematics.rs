//! Serial-chain forward kinematics, geometric Jacobian, and damped
//! least-squares twist resolution for the 6-joint arm with a coupled
//! parallel gripper.
//!
//! Chain (fixed link constants, all joints revolute):
//!
//! ```text
//! base riser  Tz(0.20)
//! J1 yaw      Rz(q1)
//! J2 shoulder Ry(q2 + 0.7)   then upper arm Tz(0.30)
//! J3 elbow    Ry(q3 + 0.9)   then forearm  Tz(0.25)
//! J4 wrist    Ry(q4 + (pi - 1.6))  then wrist link Tz(0.12)
//! J5 roll     Rz(q5)
//! J6 tilt     Ry(q6)         then tool Tz(0.10)
//! ```
//!
//! At `q = 0` the cumulative pitch is `pi`, so the tool axis points straight
//! down at the published home pose.

use nalgebra::{Isometry3, Matrix6, Quaternion, Translation3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

pub const BASE_HEIGHT: f64 = 0.20;
pub const UPPER_ARM: f64 = 0.30;
pub const FOREARM: f64 = 0.25;
pub const WRIST_LINK: f64 = 0.12;
pub const TOOL_LENGTH: f64 = 0.10;
pub const FINGER_LENGTH: f64 = 0.04;

pub const SHOULDER_OFFSET: f64 = 0.7;
pub const ELBOW_OFFSET: f64 = 0.9;
pub const WRIST_OFFSET: f64 = std::f64::consts::PI - 1.6;

/// Published joint limits (radians), symmetric per joint.
pub const JOINT_LIMITS: [f64; 6] = [2.9, 1.7, 1.7, 1.7, 2.9, 1.7];

/// End-effector position of the home pose `q = 0`, a published constant of
/// the chain (tool pointing straight down).
pub fn home_eef_position() -> Vector3<f64> {
    // Hand trace: shoulder at (0,0,0.20); +0.30 along pitch 0.7;
    // +0.25 along pitch 1.6; then 0.22 straight down.
    let x = UPPER_ARM * SHOULDER_OFFSET.sin() + FOREARM * 1.6_f64.sin();
    let z = BASE_HEIGHT + UPPER_ARM * SHOULDER_OFFSET.cos() + FOREARM * 1.6_f64.cos()
        - (WRIST_LINK + TOOL_LENGTH);
    Vector3::new(x, 0.0, z)
}

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("quaternion norm {0} deviates from 1 by more than 1e-6")]
    NonUnitQuaternion(f64),
}

/// Pose and per-joint frames of one forward-kinematics evaluation.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub eef_pos: Vector3<f64>,
    pub eef_rot: UnitQuaternion<f64>,
    /// World-frame joint origins, one per joint.
    pub joint_origins: [Vector3<f64>; 6],
    /// World-frame joint rotation axes, one per joint.
    pub joint_axes: [Vector3<f64>; 6],
}

impl FkResult {
    /// Direction the gripper points (tool z-axis in world frame).
    pub fn approach_axis(&self) -> Vector3<f64> {
        self.eef_rot * Vector3::z()
    }

    /// Axis along which the fingers open (tool y-axis in world frame).
    pub fn lateral_axis(&self) -> Vector3<f64> {
        self.eef_rot * Vector3::y()
    }
}

fn rot_y(angle: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::identity(),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle),
    )
}

fn rot_z(angle: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::identity(),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
    )
}

fn trans_z(d: f64) -> Isometry3<f64> {
    Isometry3::translation(0.0, 0.0, d)
}

/// Forward kinematics of the 6-joint chain.
pub fn forward_kinematics(q: &[f64; 6]) -> FkResult {
    let mut joint_origins = [Vector3::zeros(); 6];
    let mut joint_axes = [Vector3::zeros(); 6];

    let mut t = trans_z(BASE_HEIGHT);

    joint_origins[0] = t.translation.vector;
    joint_axes[0] = t.rotation * Vector3::z();
    t *= rot_z(q[0]);

    joint_origins[1] = t.translation.vector;
    joint_axes[1] = t.rotation * Vector3::y();
    t *= rot_y(q[1] + SHOULDER_OFFSET);
    t *= trans_z(UPPER_ARM);

    joint_origins[2] = t.translation.vector;
    joint_axes[2] = t.rotation * Vector3::y();
    t *= rot_y(q[2] + ELBOW_OFFSET);
    t *= trans_z(FOREARM);

    joint_origins[3] = t.translation.vector;
    joint_axes[3] = t.rotation * Vector3::y();
    t *= rot_y(q[3] + WRIST_OFFSET);
    t *= trans_z(WRIST_LINK);

    joint_origins[4] = t.translation.vector;
    joint_axes[4] = t.rotation * Vector3::z();
    t *= rot_z(q[4]);

    joint_origins[5] = t.translation.vector;
    joint_axes[5] = t.rotation * Vector3::y();
    t *= rot_y(q[5]);
    t *= trans_z(TOOL_LENGTH);

    FkResult { eef_pos: t.translation.vector, eef_rot: t.rotation, joint_origins, joint_axes }
}

/// Fingertip positions for a gripper gap `g`: offset from the end-effector
/// along the approach axis by the finger length, split `±g/2` laterally.
pub fn finger_positions(fk: &FkResult, gap: f64) -> (Vector3<f64>, Vector3<f64>) {
    let tip_center = fk.eef_pos + fk.approach_axis() * FINGER_LENGTH;
    let half = fk.lateral_axis() * (gap / 2.0);
    (tip_center + half, tip_center - half)
}

/// Geometric Jacobian mapping joint velocities to the end-effector twist
/// `[v; w]` in world frame.
pub fn jacobian(fk: &FkResult) -> Matrix6<f64> {
    let mut j = Matrix6::zeros();
    for i in 0..6 {
        let axis = fk.joint_axes[i];
        let lin = axis.cross(&(fk.eef_pos - fk.joint_origins[i]));
        for r in 0..3 {
            j[(r, i)] = lin[r];
            j[(r + 3, i)] = axis[r];
        }
    }
    j
}

/// Damped least-squares resolution of a desired twist into joint deltas:
/// `dq = J^T (J J^T + damping^2 I)^{-1} twist`.
pub fn dls_solve(jac: &Matrix6<f64>, twist: &Vector6<f64>, damping: f64) -> Vector6<f64> {
    let jjt = jac * jac.transpose() + Matrix6::identity() * (damping * damping);
    let rhs = jjt.lu().solve(twist).unwrap_or_else(Vector6::zeros);
    jac.transpose() * rhs
}

/// Absolute z-component of the rotated tool axis; 1 means the gripper points
/// straight up or down. Errors on a non-unit quaternion.
pub fn verticality(q: &Quaternion<f64>) -> Result<f64, KinematicsError> {
    let norm = q.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(KinematicsError::NonUnitQuaternion(norm));
    }
    let unit = UnitQuaternion::new_unchecked(q.normalize());
    Ok((unit * Vector3::z()).z.abs())
}
