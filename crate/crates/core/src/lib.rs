//! Fully spiking actor-critic reinforcement learning for a kinematic
//! reach-and-grasp task: LIF/N-LIF dynamics with surrogate-gradient
//! backpropagation, PPO with curriculum reward scheduling and dead-zone
//! recovery, a structurally matched conventional baseline, and an analytical
//! inference-energy model.

// Validation deliberately writes `!(x > 0.0)` so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod encoding;
pub mod energy;
pub mod env;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod snn;
