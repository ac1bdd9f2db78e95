//! Flat binary checkpoint format for a trained actor-critic pair.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SPIKEGR1"
//! 8       4     format version (u32, currently 1)
//! 12      1     model kind (0 = snn, 1 = ann)
//! 13      1     encoder mode (0 = current, 1 = latency)
//! 14      2     reserved (zero)
//! 16      4     obs_dim (u32)
//! 20      4     hidden_dim (u32)
//! 24      4     action_dim (u32)
//! 28      4     steps (u32)
//! 32      8     lif lambda (f64)
//! 40      8     lif resistance
//! 48      8     lif threshold
//! 56      8     nlif lambda
//! 64      8     nlif v_clip
//! 72      8     surrogate shape parameter (width or steepness)
//! 80      1     surrogate kind (0 = rectangular, 1 = fast-sigmoid)
//! 81      7     reserved (zero)
//! 88      ...   actor w_in, actor w_out, actor log_std,
//!               critic w_in, critic w_out  (all f64, row-major)
//! ```
//!
//! Round-trips are bit-exact: every f64 is stored via its IEEE-754 bits.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::encoding::EncoderMode;
use crate::snn::{LifParams, NlifParams, SurrogateSpec};

use super::{ModelKind, NetworkSpec, NeuronConfig, Policy, PolicyParams};

const MAGIC: &[u8; 8] = b"SPIKEGR1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 88;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error reading/writing checkpoint: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &Array2<f64>) {
        for v in m.iter() {
            self.f64(*v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>, CheckpointError> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
}

pub fn save_checkpoint(path: &Path, policy: &Policy) -> Result<(), CheckpointError> {
    let mut w = Writer { buf: Vec::with_capacity(HEADER_LEN) };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.buf.push(match policy.kind {
        ModelKind::Snn => 0,
        ModelKind::Ann => 1,
    });
    w.buf.push(match policy.spec.encoder {
        EncoderMode::Current => 0,
        EncoderMode::Latency => 1,
    });
    w.buf.extend_from_slice(&[0, 0]);
    w.u32(policy.spec.obs_dim as u32);
    w.u32(policy.spec.hidden_dim as u32);
    w.u32(policy.spec.action_dim as u32);
    w.u32(policy.spec.steps as u32);
    w.f64(policy.neuron.lif.lambda);
    w.f64(policy.neuron.lif.resistance);
    w.f64(policy.neuron.lif.threshold);
    w.f64(policy.neuron.nlif.lambda);
    w.f64(policy.neuron.nlif.v_clip);
    let (surrogate_kind, shape) = match policy.neuron.surrogate {
        SurrogateSpec::Rectangular { width } => (0u8, width),
        SurrogateSpec::FastSigmoid { steepness } => (1u8, steepness),
    };
    w.f64(shape);
    w.buf.push(surrogate_kind);
    w.buf.extend_from_slice(&[0; 7]);
    debug_assert_eq!(w.buf.len(), HEADER_LEN);

    w.matrix(&policy.actor.w_in);
    w.matrix(&policy.actor.w_out);
    for v in policy.actor.log_std.as_ref().expect("actor log_std").iter() {
        w.f64(*v);
    }
    w.matrix(&policy.critic.w_in);
    w.matrix(&policy.critic.w_out);

    let mut file = fs::File::create(path)?;
    file.write_all(&w.buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Policy, CheckpointError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };

    if r.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let kind = match r.u8()? {
        0 => ModelKind::Snn,
        1 => ModelKind::Ann,
        k => return Err(CheckpointError::Corrupt(format!("unknown model kind {k}"))),
    };
    let encoder = match r.u8()? {
        0 => EncoderMode::Current,
        1 => EncoderMode::Latency,
        e => return Err(CheckpointError::Corrupt(format!("unknown encoder {e}"))),
    };
    r.take(2)?;
    let obs_dim = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let action_dim = r.u32()? as usize;
    let steps = r.u32()? as usize;
    let lif_lambda = r.f64()?;
    let resistance = r.f64()?;
    let threshold = r.f64()?;
    let nlif_lambda = r.f64()?;
    let v_clip = r.f64()?;
    let shape = r.f64()?;
    let surrogate = match r.u8()? {
        0 => SurrogateSpec::Rectangular { width: shape },
        1 => SurrogateSpec::FastSigmoid { steepness: shape },
        s => return Err(CheckpointError::Corrupt(format!("unknown surrogate {s}"))),
    };
    r.take(7)?;

    if obs_dim == 0 || hidden_dim == 0 || action_dim == 0 || steps == 0 {
        return Err(CheckpointError::Corrupt("zero dimension in header".into()));
    }

    let actor_w_in = r.matrix(obs_dim, hidden_dim)?;
    let actor_w_out = r.matrix(hidden_dim, action_dim)?;
    let mut log_std = Array1::zeros(action_dim);
    for v in log_std.iter_mut() {
        *v = r.f64()?;
    }
    let critic_w_in = r.matrix(obs_dim, hidden_dim)?;
    let critic_w_out = r.matrix(hidden_dim, 1)?;
    if r.pos != buf.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes after parameters",
            buf.len() - r.pos
        )));
    }

    let spec = NetworkSpec { obs_dim, hidden_dim, action_dim, steps, encoder };
    let neuron = NeuronConfig {
        lif: LifParams { lambda: lif_lambda, resistance, threshold, dt: 1.0, v_reset: 0.0 },
        nlif: NlifParams { lambda: nlif_lambda, v_clip, dt: 1.0 },
        surrogate,
    };
    Ok(Policy {
        kind,
        spec,
        neuron,
        actor: PolicyParams { w_in: actor_w_in, w_out: actor_w_out, log_std: Some(log_std) },
        critic: PolicyParams { w_in: critic_w_in, w_out: critic_w_out, log_std: None },
    })
}
