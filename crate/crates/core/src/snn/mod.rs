//! Discrete-time LIF and non-spiking LIF neuron dynamics with
//! surrogate-gradient backpropagation through time.
//!
//! The membrane update is explicit Euler with `dt = 1`:
//! `v' = v + lambda * (-v + rho)` where `rho = R * I` for spiking neurons
//! and `rho = I` for the non-spiking readout layer. Spiking neurons hard-reset
//! to `v_reset` on threshold crossing; readout neurons clamp their membrane
//! to `[-v_clip, v_clip]` instead.

mod unroll;

pub use unroll::{
    unroll_backward, unroll_forward, unroll_infer, InputDrive, SpikeActivation, SpikeStats,
    UnrollConfig, Unrolled,
};

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnnError {
    #[error("non-finite input current at index {0}")]
    NonFiniteCurrent(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("forward cache does not match backward call: {0}")]
    CacheMismatch(String),
}

/// Spiking-neuron parameters. `lambda` is the inverse membrane time
/// constant after discretization; stability requires `lambda * dt` in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub lambda: f64,
    pub resistance: f64,
    pub threshold: f64,
    pub dt: f64,
    pub v_reset: f64,
}

impl LifParams {
    pub fn new(lambda: f64, resistance: f64, threshold: f64) -> Result<Self, SnnError> {
        let p = Self { lambda, resistance, threshold, dt: 1.0, v_reset: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        let step = self.lambda * self.dt;
        if !(step > 0.0 && step <= 1.0) {
            return Err(SnnError::InvalidParam(format!(
                "lambda*dt must be in (0, 1], got {step}"
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(SnnError::InvalidParam(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Membrane retention factor `1 - lambda*dt` of one Euler step.
    pub fn decay(&self) -> f64 {
        1.0 - self.lambda * self.dt
    }
}

impl Default for LifParams {
    fn default() -> Self {
        Self { lambda: 0.2, resistance: 1.0, threshold: 1.0, dt: 1.0, v_reset: 0.0 }
    }
}

/// Non-spiking readout neuron parameters. The membrane integrates input
/// continuously and is kept bounded by symmetric clamping at `±v_clip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlifParams {
    pub lambda: f64,
    pub v_clip: f64,
    pub dt: f64,
}

impl NlifParams {
    pub fn new(lambda: f64, v_clip: f64) -> Result<Self, SnnError> {
        let p = Self { lambda, v_clip, dt: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        let step = self.lambda * self.dt;
        if !(step > 0.0 && step <= 1.0) {
            return Err(SnnError::InvalidParam(format!(
                "lambda*dt must be in (0, 1], got {step}"
            )));
        }
        if !(self.v_clip > 0.0) {
            return Err(SnnError::InvalidParam(format!(
                "v_clip must be positive, got {}",
                self.v_clip
            )));
        }
        Ok(())
    }

    pub fn decay(&self) -> f64 {
        1.0 - self.lambda * self.dt
    }
}

impl Default for NlifParams {
    fn default() -> Self {
        // 100 leaves headroom for value readouts while still bounding the
        // membrane; discounted returns of the reach task run well past 10.
        Self { lambda: 0.2, v_clip: 100.0, dt: 1.0 }
    }
}

/// Membrane potentials and spike outputs of one neuron layer at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub v: Array1<f64>,
    pub spikes: Array1<f64>,
}

impl LayerState {
    pub fn zeros(n: usize) -> Self {
        Self { v: Array1::zeros(n), spikes: Array1::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Pseudo-derivative used in place of the spike discontinuity during
/// backpropagation. Both variants are nonnegative, symmetric about the
/// threshold, and integrate to one over the membrane axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurrogateSpec {
    Rectangular { width: f64 },
    FastSigmoid { steepness: f64 },
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<(), SnnError> {
        let shape = match self {
            Self::Rectangular { width } => *width,
            Self::FastSigmoid { steepness } => *steepness,
        };
        if !(shape > 0.0) {
            return Err(SnnError::InvalidParam(format!(
                "surrogate shape parameter must be positive, got {shape}"
            )));
        }
        Ok(())
    }

    /// Evaluate the pseudo-derivative at membrane offset `x = v - theta`.
    pub fn pseudo_derivative(&self, x: f64) -> f64 {
        match self {
            Self::Rectangular { width } => {
                if x.abs() <= *width {
                    1.0 / (2.0 * width)
                } else {
                    0.0
                }
            }
            Self::FastSigmoid { steepness } => {
                let denom = 1.0 + steepness * x.abs();
                steepness / (2.0 * denom * denom)
            }
        }
    }
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self::Rectangular { width: 0.5 }
    }
}

/// Vector form of [`SurrogateSpec::pseudo_derivative`].
pub fn surrogate_grad(v_minus_theta: &Array1<f64>, spec: SurrogateSpec) -> Array1<f64> {
    v_minus_theta.mapv(|x| spec.pseudo_derivative(x))
}

fn check_current(current: &Array1<f64>, n: usize) -> Result<(), SnnError> {
    if current.len() != n {
        return Err(SnnError::DimMismatch { expected: n, got: current.len() });
    }
    if let Some(i) = current.iter().position(|c| !c.is_finite()) {
        return Err(SnnError::NonFiniteCurrent(i));
    }
    Ok(())
}

/// One Euler step of a spiking layer. Reset is applied within the step, so
/// the returned membrane never reaches the threshold.
pub fn lif_step(
    state: &LayerState,
    current: &Array1<f64>,
    p: &LifParams,
) -> Result<(LayerState, Array1<f64>), SnnError> {
    check_current(current, state.len())?;
    let step = p.lambda * p.dt;
    let mut v = Array1::zeros(state.len());
    let mut spikes = Array1::zeros(state.len());
    for i in 0..state.len() {
        let updated = state.v[i] + step * (-state.v[i] + p.resistance * current[i]);
        if updated >= p.threshold {
            v[i] = p.v_reset;
            spikes[i] = 1.0;
        } else {
            v[i] = updated;
        }
    }
    let next = LayerState { v, spikes: spikes.clone() };
    Ok((next, spikes))
}

/// One Euler step of a non-spiking readout layer. No spikes are emitted;
/// the membrane is clamped to `±v_clip`.
pub fn nlif_step(
    state: &LayerState,
    current: &Array1<f64>,
    p: &NlifParams,
) -> Result<LayerState, SnnError> {
    check_current(current, state.len())?;
    let step = p.lambda * p.dt;
    let v = ndarray::Zip::from(&state.v)
        .and(current)
        .map_collect(|&v, &c| (v + step * (-v + c)).clamp(-p.v_clip, p.v_clip));
    Ok(LayerState { v, spikes: Array1::zeros(state.len()) })
}
