//! Experiment configuration: one TOML file with nested sections mirroring
//! the module type hierarchy. Unknown keys are hard errors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::EncoderMode;
use crate::env::EnvConfig;
use crate::policy::{ModelKind, NetworkSpec, NeuronConfig};
use crate::ppo::PpoConfig;
use crate::reward::{CurriculumSchedule, DeadZoneParams, RewardScales};
use crate::snn::{LifParams, NlifParams, SurrogateSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingKind {
    /// Single constant reward weight set, no dead-zone modulation.
    Vanilla,
    /// Two-stage schedule plus dead-zone-aware reweighting.
    #[default]
    Crl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Kinematic reach-and-grasp with the full composite reward.
    #[default]
    ReachGrasp,
    /// One-dimensional quadratic-reward bandit for trainer sanity checks.
    ToyQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub model: ModelKind,
    pub training: TrainingKind,
    pub task: TaskKind,
    pub seed: u64,
    pub out_dir: std::path::PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Snn,
            training: TrainingKind::Crl,
            task: TaskKind::ReachGrasp,
            seed: 0,
            out_dir: std::path::PathBuf::from("runs/experiment"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub hidden_dim: usize,
    /// Simulation steps per control forward pass.
    pub steps: usize,
    pub encoder: EncoderMode,
    /// Simulation steps used by the energy audit.
    pub audit_steps: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden_dim: 256, steps: 8, encoder: EncoderMode::Current, audit_steps: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuronSection {
    pub lif_lambda: f64,
    pub resistance: f64,
    pub threshold: f64,
    pub nlif_lambda: f64,
    pub v_clip: f64,
    pub surrogate: SurrogateSpec,
}

impl Default for NeuronSection {
    fn default() -> Self {
        Self {
            lif_lambda: 0.2,
            resistance: 1.0,
            threshold: 1.0,
            nlif_lambda: 0.2,
            v_clip: 100.0,
            surrogate: SurrogateSpec::default(),
        }
    }
}

impl NeuronSection {
    pub fn to_neuron_config(&self) -> Result<NeuronConfig, ConfigError> {
        let lif = LifParams::new(self.lif_lambda, self.resistance, self.threshold)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let nlif = NlifParams::new(self.nlif_lambda, self.v_clip)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.surrogate.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(NeuronConfig { lif, nlif, surrogate: self.surrogate })
    }
}

/// The complete, self-describing experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub network: NetworkSection,
    pub neuron: NeuronSection,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub reward: RewardScales,
    pub curriculum: CurriculumSchedule,
    pub deadzone: DeadZoneParams,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| ConfigError::Invalid(format!("cannot serialize config: {e}")))?;
        fs::write(path, text)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ppo.validate().map_err(ConfigError::Invalid)?;
        self.reward.validate().map_err(ConfigError::Invalid)?;
        self.curriculum.validate().map_err(ConfigError::Invalid)?;
        self.deadzone.validate().map_err(ConfigError::Invalid)?;
        self.neuron.to_neuron_config()?;
        self.network_spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.network.audit_steps == 0 {
            return Err(ConfigError::Invalid("audit_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Actor network dimensions for the configured task.
    pub fn network_spec(&self) -> NetworkSpec {
        let (obs_dim, action_dim) = match self.experiment.task {
            TaskKind::ReachGrasp => (crate::env::OBS_DIM, crate::env::ACTION_DIM),
            TaskKind::ToyQuadratic => (1, 1),
        };
        NetworkSpec {
            obs_dim,
            hidden_dim: self.network.hidden_dim,
            action_dim,
            steps: self.network.steps,
            encoder: self.network.encoder,
        }
    }

    /// The constant weight set used by vanilla training: the stage-II
    /// (full-task) weights.
    pub fn vanilla_weights(&self) -> crate::reward::RewardWeightSet {
        self.curriculum.stage2
    }
}

/// Named substreams of the root seed, so runs can share environment
/// randomness while differing elsewhere.
pub mod streams {
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Base stream ids. Environment spawn streams start at `ENV_BASE` and
    /// advance by the environment index.
    pub const ENV_BASE: u64 = 1 << 32;
    pub const POLICY_INIT: u64 = 1;
    pub const ACTION_SAMPLING: u64 = 2;
    pub const MINIBATCH: u64 = 3;
    pub const EVAL_BASE: u64 = 2 << 32;

    pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        rng
    }
}
