//! Actor and critic networks: a two-layer fully spiking network (LIF hidden
//! layer, non-spiking readout) and a structurally matched ReLU baseline with
//! identical parameter shapes.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{latency_encode_batch, EncoderMode, EncodingError};
use crate::snn::{
    unroll_backward, unroll_forward, unroll_infer, InputDrive, LifParams, NlifParams, SnnError,
    SpikeActivation, SpikeStats, SurrogateSpec, UnrollConfig, Unrolled,
};

/// Spike statistics of one spiking forward pass; feeds the energy model.
pub type ForwardStats = SpikeStats;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const LOG_STD_INIT: f64 = -0.5;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("non-finite network output")]
    NonFiniteOutput,
    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Snn,
    Ann,
}

/// Layer dimensions and simulation settings shared by actor, critic and the
/// baseline network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub obs_dim: usize,
    pub hidden_dim: usize,
    pub action_dim: usize,
    /// Simulation steps per forward pass.
    pub steps: usize,
    pub encoder: EncoderMode,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.obs_dim == 0 || self.hidden_dim == 0 || self.action_dim == 0 {
            return Err(PolicyError::InvalidSpec("layer sizes must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(PolicyError::InvalidSpec("steps must be >= 1".into()));
        }
        if self.encoder == EncoderMode::Latency && self.steps < 2 {
            return Err(PolicyError::InvalidSpec("latency coding needs steps >= 2".into()));
        }
        Ok(())
    }
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            obs_dim: 18,
            hidden_dim: 256,
            action_dim: 7,
            steps: 8,
            encoder: EncoderMode::Current,
        }
    }
}

/// Neuron dynamics shared by every spiking forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NeuronConfig {
    pub lif: LifParams,
    pub nlif: NlifParams,
    pub surrogate: SurrogateSpec,
}

impl NeuronConfig {
    fn unroll_config(&self, steps: usize) -> UnrollConfig {
        UnrollConfig {
            lif: self.lif,
            nlif: self.nlif,
            activation: SpikeActivation::Surrogate(self.surrogate),
            steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Actor,
    Critic,
}

/// Trainable parameters of one network head. The critic has no `log_std`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub w_in: Array2<f64>,
    pub w_out: Array2<f64>,
    pub log_std: Option<Array1<f64>>,
}

impl PolicyParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.w_in.ncols() != self.w_out.nrows() {
            return Err(PolicyError::ShapeMismatch(format!(
                "w_in is {:?} but w_out is {:?}",
                self.w_in.dim(),
                self.w_out.dim()
            )));
        }
        if self.w_in.iter().chain(self.w_out.iter()).any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteOutput);
        }
        if let Some(ls) = &self.log_std {
            if ls.len() != self.w_out.ncols() {
                return Err(PolicyError::ShapeMismatch("log_std length".into()));
            }
            if ls.iter().any(|v| !(LOG_STD_MIN..=LOG_STD_MAX).contains(v)) {
                return Err(PolicyError::ShapeMismatch(format!(
                    "log_std outside [{LOG_STD_MIN}, {LOG_STD_MAX}]"
                )));
            }
        }
        Ok(())
    }
}

/// Draw weights from a zero-mean uniform distribution with standard
/// deviation `1/sqrt(fan_in)`; actor heads get `log_std = -0.5`.
pub fn init_params<R: Rng>(spec: &NetworkSpec, head: Head, rng: &mut R) -> PolicyParams {
    let out_dim = match head {
        Head::Actor => spec.action_dim,
        Head::Critic => 1,
    };
    let bound_in = (3.0 / spec.obs_dim as f64).sqrt();
    let bound_out = (3.0 / spec.hidden_dim as f64).sqrt();
    let w_in =
        Array2::from_shape_fn((spec.obs_dim, spec.hidden_dim), |_| rng.random_range(-bound_in..bound_in));
    let w_out =
        Array2::from_shape_fn((spec.hidden_dim, out_dim), |_| rng.random_range(-bound_out..bound_out));
    let log_std = match head {
        Head::Actor => Some(Array1::from_elem(out_dim, LOG_STD_INIT)),
        Head::Critic => None,
    };
    PolicyParams { w_in, w_out, log_std }
}

fn make_drive(xhat: &Array2<f64>, spec: &NetworkSpec) -> Result<InputDrive, PolicyError> {
    match spec.encoder {
        EncoderMode::Current => Ok(InputDrive::Current(xhat.clone())),
        EncoderMode::Latency => {
            Ok(InputDrive::SpikeTrain(latency_encode_batch(xhat.view(), spec.steps)?))
        }
    }
}

fn ensure_finite(out: &Array2<f64>) -> Result<(), PolicyError> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PolicyError::NonFiniteOutput)
    }
}

/// Spiking actor: action mean is the readout membrane at the final step,
/// bounded by tanh.
pub fn actor_forward(
    params: &PolicyParams,
    obs_batch: &Array2<f64>,
    spec: &NetworkSpec,
    neuron: &NeuronConfig,
) -> Result<(Array2<f64>, ForwardStats), PolicyError> {
    let drive = make_drive(obs_batch, spec)?;
    let cfg = neuron.unroll_config(spec.steps);
    let (readout, stats) = unroll_infer(&params.w_in, &params.w_out, &drive, &cfg)?;
    ensure_finite(&readout)?;
    Ok((readout.mapv(f64::tanh), stats))
}

/// Spiking critic: unbounded readout membrane, one output per sample.
pub fn critic_forward(
    params: &PolicyParams,
    obs_batch: &Array2<f64>,
    spec: &NetworkSpec,
    neuron: &NeuronConfig,
) -> Result<Array1<f64>, PolicyError> {
    let drive = make_drive(obs_batch, spec)?;
    let cfg = neuron.unroll_config(spec.steps);
    let (readout, _) = unroll_infer(&params.w_in, &params.w_out, &drive, &cfg)?;
    ensure_finite(&readout)?;
    Ok(readout.column(0).to_owned())
}

/// Activation statistics of the baseline network, for the energy model.
#[derive(Debug, Clone, Copy)]
pub struct AnnStats {
    /// Fraction of strictly positive input entries.
    pub input_rate: f64,
    /// Fraction of strictly positive hidden activations.
    pub hidden_rate: f64,
    pub batch: usize,
}

/// Baseline network: `out = relu(obs . w_in) . w_out`.
pub fn ann_forward(params: &PolicyParams, obs_batch: &Array2<f64>) -> (Array2<f64>, AnnStats) {
    let hidden_pre = obs_batch.dot(&params.w_in);
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let out = hidden.dot(&params.w_out);
    let count_pos = |m: &Array2<f64>| {
        if m.is_empty() {
            0.0
        } else {
            m.iter().filter(|&&v| v > 0.0).count() as f64 / m.len() as f64
        }
    };
    let stats = AnnStats {
        input_rate: count_pos(obs_batch),
        hidden_rate: count_pos(&hidden),
        batch: obs_batch.nrows(),
    };
    (out, stats)
}

/// Diagonal-Gaussian sample and its log density at the pre-clamp draw.
pub fn sample_action<R: Rng>(
    mean: &Array2<f64>,
    log_std: &Array1<f64>,
    rng: &mut R,
) -> (Array2<f64>, Array1<f64>) {
    let normal = rand_distr::StandardNormal;
    let mut actions = mean.clone();
    for mut row in actions.rows_mut() {
        for (i, a) in row.iter_mut().enumerate() {
            let eps: f64 = rng.sample(normal);
            *a += log_std[i].exp() * eps;
        }
    }
    let log_probs = gaussian_log_prob(mean, log_std, &actions);
    (actions, log_probs)
}

/// Log density of a diagonal Gaussian, one value per batch row.
pub fn gaussian_log_prob(
    mean: &Array2<f64>,
    log_std: &Array1<f64>,
    actions: &Array2<f64>,
) -> Array1<f64> {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut out = Array1::zeros(mean.nrows());
    for (b, (m_row, a_row)) in mean.rows().into_iter().zip(actions.rows()).enumerate() {
        let mut lp = 0.0;
        for i in 0..m_row.len() {
            let std = log_std[i].exp();
            let z = (a_row[i] - m_row[i]) / std;
            lp += -0.5 * z * z - log_std[i] - 0.5 * ln_2pi;
        }
        out[b] = lp;
    }
    out
}

/// Closed-form entropy of the diagonal Gaussian head.
pub fn gaussian_entropy(log_std: &Array1<f64>) -> f64 {
    let half_ln_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    log_std.iter().map(|ls| ls + half_ln_2pi_e).sum()
}

/// One actor-critic pair plus everything needed to run it.
#[derive(Debug, Clone)]
pub struct Policy {
    pub kind: ModelKind,
    pub spec: NetworkSpec,
    pub neuron: NeuronConfig,
    pub actor: PolicyParams,
    pub critic: PolicyParams,
}

/// Cached intermediates of one differentiable forward pass.
pub enum TrainCache {
    Snn { drive: InputDrive, trace: Unrolled },
    Ann { obs: Array2<f64>, hidden_pre: Array2<f64>, hidden: Array2<f64> },
}

impl Policy {
    pub fn new<R: Rng>(
        kind: ModelKind,
        spec: NetworkSpec,
        neuron: NeuronConfig,
        rng: &mut R,
    ) -> Result<Self, PolicyError> {
        spec.validate()?;
        let actor = init_params(&spec, Head::Actor, rng);
        let critic = init_params(&spec, Head::Critic, rng);
        Ok(Self { kind, spec, neuron, actor, critic })
    }

    pub fn log_std(&self) -> &Array1<f64> {
        self.actor.log_std.as_ref().expect("actor carries log_std")
    }

    /// Deterministic action means (tanh-bounded) plus activity statistics.
    pub fn actor_mean(&self, obs: &Array2<f64>) -> Result<(Array2<f64>, ActivityStats), PolicyError> {
        match self.kind {
            ModelKind::Snn => {
                let (mean, stats) = actor_forward(&self.actor, obs, &self.spec, &self.neuron)?;
                Ok((mean, ActivityStats::Snn(stats)))
            }
            ModelKind::Ann => {
                let (raw, stats) = ann_forward(&self.actor, obs);
                ensure_finite(&raw)?;
                Ok((raw.mapv(f64::tanh), ActivityStats::Ann(stats)))
            }
        }
    }

    /// State values, one per batch row.
    pub fn values(&self, obs: &Array2<f64>) -> Result<Array1<f64>, PolicyError> {
        match self.kind {
            ModelKind::Snn => critic_forward(&self.critic, obs, &self.spec, &self.neuron),
            ModelKind::Ann => {
                let (raw, _) = ann_forward(&self.critic, obs);
                ensure_finite(&raw)?;
                Ok(raw.column(0).to_owned())
            }
        }
    }

    /// Differentiable forward pass through one head; returns the raw
    /// (pre-tanh) readout and the cache for [`Policy::train_backward`].
    pub fn train_forward(
        &self,
        params: &PolicyParams,
        obs: &Array2<f64>,
    ) -> Result<(Array2<f64>, TrainCache), PolicyError> {
        match self.kind {
            ModelKind::Snn => {
                let drive = make_drive(obs, &self.spec)?;
                let cfg = self.neuron.unroll_config(self.spec.steps);
                let trace = unroll_forward(&params.w_in, &params.w_out, &drive, &cfg)?;
                ensure_finite(&trace.readout)?;
                let readout = trace.readout.clone();
                Ok((readout, TrainCache::Snn { drive, trace }))
            }
            ModelKind::Ann => {
                let hidden_pre = obs.dot(&params.w_in);
                let hidden = hidden_pre.mapv(|v| v.max(0.0));
                let out = hidden.dot(&params.w_out);
                ensure_finite(&out)?;
                Ok((out, TrainCache::Ann { obs: obs.clone(), hidden_pre, hidden }))
            }
        }
    }

    /// Weight gradients given `dL/d(raw readout)`, always in standard
    /// layout (matmul against transposed views can come back column-major).
    pub fn train_backward(
        &self,
        params: &PolicyParams,
        cache: &TrainCache,
        d_raw: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>), PolicyError> {
        let (g_in, g_out) = match cache {
            TrainCache::Snn { drive, trace } => {
                let cfg = self.neuron.unroll_config(self.spec.steps);
                unroll_backward(&params.w_in, &params.w_out, drive, trace, &cfg, d_raw)?
            }
            TrainCache::Ann { obs, hidden_pre, hidden } => {
                let d_hidden = d_raw.dot(&params.w_out.t())
                    * hidden_pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                let g_out = hidden.t().dot(d_raw);
                let g_in = obs.t().dot(&d_hidden);
                (g_in, g_out)
            }
        };
        Ok((to_standard(g_in), to_standard(g_out)))
    }
}

fn to_standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

/// Per-pass activity statistics of either model family.
#[derive(Debug, Clone)]
pub enum ActivityStats {
    Snn(ForwardStats),
    Ann(AnnStats),
}
