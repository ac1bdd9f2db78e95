//! Batched unrolled forward/backward passes through the two-layer network:
//! input drive -> spiking layer -> non-spiking readout layer.
//!
//! The backward pass is exact reverse-mode differentiation of the unrolled
//! computation, with the spike discontinuity replaced by a pseudo-derivative
//! and the reset multiplication detached (gradient flows through the membrane
//! update only). A smooth-sigmoid activation variant keeps the whole network
//! differentiable end to end so the backward pass can be checked against
//! finite differences.

use ndarray::{Array1, Array2};

use super::{LifParams, NlifParams, SnnError, SurrogateSpec};

/// Spike nonlinearity used at the hidden layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeActivation {
    /// Heaviside step forward, pseudo-derivative backward, detached reset.
    Surrogate(SurrogateSpec),
    /// Logistic sigmoid of the given steepness, differentiated exactly
    /// (including the reset product). Used as a smooth twin for gradient
    /// verification.
    SmoothSigmoid { steepness: f64 },
}

/// Input fed to the hidden layer, either a constant current per feature or a
/// per-step binary spike train.
#[derive(Debug, Clone)]
pub enum InputDrive {
    /// `batch x features`, injected at every step.
    Current(Array2<f64>),
    /// One `batch x features` matrix per step.
    SpikeTrain(Vec<Array2<f64>>),
}

impl InputDrive {
    pub fn batch(&self) -> usize {
        match self {
            Self::Current(x) => x.nrows(),
            Self::SpikeTrain(steps) => steps.first().map_or(0, |x| x.nrows()),
        }
    }

    pub fn features(&self) -> usize {
        match self {
            Self::Current(x) => x.ncols(),
            Self::SpikeTrain(steps) => steps.first().map_or(0, |x| x.ncols()),
        }
    }

    fn at(&self, t: usize) -> &Array2<f64> {
        match self {
            Self::Current(x) => x,
            Self::SpikeTrain(steps) => &steps[t],
        }
    }

    fn validate(&self, steps: usize, features: usize) -> Result<(), SnnError> {
        if self.features() != features {
            return Err(SnnError::DimMismatch { expected: features, got: self.features() });
        }
        match self {
            Self::Current(x) => {
                if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                    return Err(SnnError::NonFiniteCurrent(i));
                }
            }
            Self::SpikeTrain(frames) => {
                if frames.len() != steps {
                    return Err(SnnError::DimMismatch { expected: steps, got: frames.len() });
                }
                for frame in frames {
                    if frame.nrows() != self.batch() || frame.ncols() != features {
                        return Err(SnnError::DimMismatch {
                            expected: features,
                            got: frame.ncols(),
                        });
                    }
                    if let Some(i) = frame.iter().position(|v| !v.is_finite()) {
                        return Err(SnnError::NonFiniteCurrent(i));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UnrollConfig {
    pub lif: LifParams,
    pub nlif: NlifParams,
    pub activation: SpikeActivation,
    pub steps: usize,
}

impl UnrollConfig {
    fn validate(&self) -> Result<(), SnnError> {
        self.lif.validate()?;
        self.nlif.validate()?;
        if let SpikeActivation::Surrogate(spec) = self.activation {
            spec.validate()?;
        }
        if self.steps == 0 {
            return Err(SnnError::InvalidParam("steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Forward trace of one unrolled pass, holding everything the backward pass
/// needs.
#[derive(Debug, Clone)]
pub struct Unrolled {
    /// Readout membranes at the final step, `batch x n2`.
    pub readout: Array2<f64>,
    /// Hidden spike trace, one `batch x n1` matrix per step.
    pub hidden_spikes: Vec<Array2<f64>>,
    /// Readout membrane trace (post-clamp), one `batch x n2` matrix per step.
    pub out_membranes: Vec<Array2<f64>>,
    /// Pre-reset hidden membranes per step.
    pre_reset: Vec<Array2<f64>>,
    /// Pre-clamp readout membranes per step.
    pre_clamp: Vec<Array2<f64>>,
}

fn activation_forward(activation: &SpikeActivation, u: &Array2<f64>, theta: f64) -> Array2<f64> {
    match activation {
        SpikeActivation::Surrogate(_) => u.mapv(|v| if v >= theta { 1.0 } else { 0.0 }),
        SpikeActivation::SmoothSigmoid { steepness } => {
            u.mapv(|v| 1.0 / (1.0 + (-steepness * (v - theta)).exp()))
        }
    }
}

fn check_shapes(
    w_in: &Array2<f64>,
    w_out: &Array2<f64>,
    drive: &InputDrive,
    cfg: &UnrollConfig,
) -> Result<(), SnnError> {
    cfg.validate()?;
    if w_in.ncols() != w_out.nrows() {
        return Err(SnnError::DimMismatch { expected: w_in.ncols(), got: w_out.nrows() });
    }
    drive.validate(cfg.steps, w_in.nrows())
}

/// Unroll the two-layer network for `cfg.steps` steps, caching every
/// intermediate needed for backpropagation.
pub fn unroll_forward(
    w_in: &Array2<f64>,
    w_out: &Array2<f64>,
    drive: &InputDrive,
    cfg: &UnrollConfig,
) -> Result<Unrolled, SnnError> {
    check_shapes(w_in, w_out, drive, cfg)?;
    let batch = drive.batch();
    let (n1, n2) = (w_in.ncols(), w_out.ncols());
    let step1 = cfg.lif.lambda * cfg.lif.dt;
    let step2 = cfg.nlif.lambda * cfg.nlif.dt;
    let gain = step1 * cfg.lif.resistance;
    let theta = cfg.lif.threshold;
    let v_reset = cfg.lif.v_reset;
    let v_clip = cfg.nlif.v_clip;

    // In constant-current mode the input matmul is shared by every step.
    let scaled_drive = match drive {
        InputDrive::Current(x) => Some(x.dot(w_in) * gain),
        InputDrive::SpikeTrain(_) => None,
    };

    let mut v1 = Array2::<f64>::zeros((batch, n1));
    let mut v2 = Array2::<f64>::zeros((batch, n2));
    let mut pre_reset = Vec::with_capacity(cfg.steps);
    let mut hidden_spikes = Vec::with_capacity(cfg.steps);
    let mut pre_clamp = Vec::with_capacity(cfg.steps);
    let mut out_membranes = Vec::with_capacity(cfg.steps);

    for t in 0..cfg.steps {
        let mut u = match &scaled_drive {
            Some(c) => c.clone(),
            None => drive.at(t).dot(w_in) * gain,
        };
        u.zip_mut_with(&v1, |ui, &vi| *ui += (1.0 - step1) * vi);
        let spikes = activation_forward(&cfg.activation, &u, theta);
        ndarray::Zip::from(&mut v1).and(&u).and(&spikes).for_each(|v, &ui, &si| {
            *v = ui * (1.0 - si) + v_reset * si;
        });

        let mut raw = spikes.dot(w_out);
        raw.zip_mut_with(&v2, |r, &vi| *r = *r * step2 + (1.0 - step2) * vi);
        v2.zip_mut_with(&raw, |v, &ri| *v = ri.clamp(-v_clip, v_clip));

        pre_reset.push(u);
        hidden_spikes.push(spikes);
        pre_clamp.push(raw);
        out_membranes.push(v2.clone());
    }

    Ok(Unrolled { readout: v2, hidden_spikes, out_membranes, pre_reset, pre_clamp })
}

/// Reverse-mode gradients of a scalar loss with respect to both weight
/// matrices, given `dL/d(readout)`.
pub fn unroll_backward(
    w_in: &Array2<f64>,
    w_out: &Array2<f64>,
    drive: &InputDrive,
    trace: &Unrolled,
    cfg: &UnrollConfig,
    upstream: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>), SnnError> {
    check_shapes(w_in, w_out, drive, cfg)?;
    let batch = drive.batch();
    let (n0, n1) = (w_in.nrows(), w_in.ncols());
    let n2 = w_out.ncols();
    if trace.hidden_spikes.len() != cfg.steps {
        return Err(SnnError::CacheMismatch(format!(
            "trace has {} steps, config expects {}",
            trace.hidden_spikes.len(),
            cfg.steps
        )));
    }
    if trace.readout.dim() != (batch, n2) || upstream.dim() != (batch, n2) {
        return Err(SnnError::CacheMismatch(format!(
            "readout/upstream shape mismatch: trace {:?}, upstream {:?}, expected ({batch}, {n2})",
            trace.readout.dim(),
            upstream.dim()
        )));
    }

    let step1 = cfg.lif.lambda * cfg.lif.dt;
    let step2 = cfg.nlif.lambda * cfg.nlif.dt;
    let gain = step1 * cfg.lif.resistance;
    let theta = cfg.lif.threshold;
    let v_reset = cfg.lif.v_reset;
    let v_clip = cfg.nlif.v_clip;

    let mut grad_w_in = Array2::<f64>::zeros((n0, n1));
    let mut grad_w_out = Array2::<f64>::zeros((n1, n2));
    let mut gv2 = upstream.clone();
    let mut gv1 = Array2::<f64>::zeros((batch, n1));
    // In constant-current mode the input matmul can be folded across steps.
    let mut g_current_sum = Array2::<f64>::zeros((batch, n1));

    for t in (0..cfg.steps).rev() {
        // clamp gate, then scale into the output-current gradient
        gv2.zip_mut_with(&trace.pre_clamp[t], |g, &raw| {
            if raw.abs() >= v_clip {
                *g = 0.0;
            }
        });
        let g_out_current = &gv2 * step2;
        grad_w_out += &trace.hidden_spikes[t].t().dot(&g_out_current);

        // reuse the spike-gradient buffer as the membrane gradient
        let mut gu = g_out_current.dot(&w_out.t());
        let u = &trace.pre_reset[t];
        let spikes = &trace.hidden_spikes[t];
        match &cfg.activation {
            SpikeActivation::Surrogate(spec) => {
                ndarray::Zip::from(&mut gu).and(u).and(spikes).and(&gv1).for_each(
                    |g, &ui, &si, &gv| {
                        *g = *g * spec.pseudo_derivative(ui - theta) + gv * (1.0 - si);
                    },
                );
            }
            SpikeActivation::SmoothSigmoid { steepness } => {
                ndarray::Zip::from(&mut gu).and(u).and(spikes).and(&gv1).for_each(
                    |g, &ui, &si, &gv| {
                        let sprime = steepness * si * (1.0 - si);
                        *g = *g * sprime + gv * ((1.0 - si) + (v_reset - ui) * sprime);
                    },
                );
            }
        }

        match drive {
            InputDrive::Current(_) => g_current_sum.scaled_add(gain, &gu),
            InputDrive::SpikeTrain(frames) => {
                grad_w_in += &frames[t].t().dot(&(&gu * gain));
            }
        }
        gu.mapv_inplace(|g| g * (1.0 - step1));
        gv1 = gu;
        gv2.mapv_inplace(|g| g * (1.0 - step2));
    }

    if let InputDrive::Current(x) = drive {
        grad_w_in += &x.t().dot(&g_current_sum);
    }

    Ok((grad_w_in, grad_w_out))
}

/// Spike and readout-activity statistics accumulated during an inference
/// pass, used by the energy model.
#[derive(Debug, Clone)]
pub struct SpikeStats {
    pub batch: usize,
    pub steps: usize,
    /// Spikes per hidden neuron summed over batch and time.
    pub spike_counts: Array1<f64>,
    pub total_spikes: f64,
    /// Per sample and readout neuron: sum over time of |membrane|.
    pub out_abs_sum: Array2<f64>,
}

impl SpikeStats {
    /// Average firing probability per hidden neuron per step.
    pub fn spike_rate(&self) -> f64 {
        let cells = (self.batch * self.spike_counts.len() * self.steps) as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.total_spikes / cells
        }
    }

    /// Fraction of readout neurons whose membrane was ever nonzero,
    /// averaged over the batch.
    pub fn membrane_activation_rate(&self) -> f64 {
        let (batch, n2) = self.out_abs_sum.dim();
        if batch == 0 || n2 == 0 {
            return 0.0;
        }
        let active: f64 = self
            .out_abs_sum
            .rows()
            .into_iter()
            .map(|row| row.iter().filter(|&&s| s > 0.0).count() as f64 / n2 as f64)
            .sum();
        active / batch as f64
    }
}

/// Forward pass that keeps only the readout and activity statistics.
/// Arithmetic is identical to [`unroll_forward`].
pub fn unroll_infer(
    w_in: &Array2<f64>,
    w_out: &Array2<f64>,
    drive: &InputDrive,
    cfg: &UnrollConfig,
) -> Result<(Array2<f64>, SpikeStats), SnnError> {
    check_shapes(w_in, w_out, drive, cfg)?;
    let batch = drive.batch();
    let (n1, n2) = (w_in.ncols(), w_out.ncols());
    let step1 = cfg.lif.lambda * cfg.lif.dt;
    let step2 = cfg.nlif.lambda * cfg.nlif.dt;
    let gain = step1 * cfg.lif.resistance;
    let theta = cfg.lif.threshold;
    let v_reset = cfg.lif.v_reset;
    let v_clip = cfg.nlif.v_clip;

    let scaled_drive = match drive {
        InputDrive::Current(x) => Some(x.dot(w_in) * gain),
        InputDrive::SpikeTrain(_) => None,
    };

    let mut v1 = Array2::<f64>::zeros((batch, n1));
    let mut v2 = Array2::<f64>::zeros((batch, n2));
    let mut spike_counts = Array1::<f64>::zeros(n1);
    let mut total_spikes = 0.0;
    let mut out_abs_sum = Array2::<f64>::zeros((batch, n2));

    for t in 0..cfg.steps {
        let mut u = match &scaled_drive {
            Some(c) => c.clone(),
            None => drive.at(t).dot(w_in) * gain,
        };
        u.zip_mut_with(&v1, |ui, &vi| *ui += (1.0 - step1) * vi);
        let spikes = activation_forward(&cfg.activation, &u, theta);
        ndarray::Zip::from(&mut v1).and(&u).and(&spikes).for_each(|v, &ui, &si| {
            *v = ui * (1.0 - si) + v_reset * si;
        });

        for (j, col) in spikes.columns().into_iter().enumerate() {
            let s: f64 = col.sum();
            spike_counts[j] += s;
            total_spikes += s;
        }

        let mut raw = spikes.dot(w_out);
        raw.zip_mut_with(&v2, |r, &vi| *r = *r * step2 + (1.0 - step2) * vi);
        v2.zip_mut_with(&raw, |v, &ri| *v = ri.clamp(-v_clip, v_clip));
        out_abs_sum.zip_mut_with(&v2, |acc, &vi| *acc += vi.abs());
    }

    let stats = SpikeStats { batch, steps: cfg.steps, spike_counts, total_spikes, out_abs_sum };
    Ok((v2, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{lif_step, nlif_step, LayerState};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(steps: usize) -> UnrollConfig {
        UnrollConfig {
            lif: LifParams::default(),
            nlif: NlifParams::default(),
            activation: SpikeActivation::Surrogate(SurrogateSpec::default()),
            steps,
        }
    }

    #[test]
    fn zero_weights_give_zero_traces() {
        let w_in = Array2::zeros((3, 4));
        let w_out = Array2::zeros((4, 2));
        let drive = InputDrive::Current(array![[1.0, -0.5, 0.25]]);
        let out = unroll_forward(&w_in, &w_out, &drive, &cfg(6)).unwrap();
        assert!(out.readout.iter().all(|&v| v == 0.0));
        assert!(out.hidden_spikes.iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_chain_matches_scalar_steps() {
        // 1 -> 1 -> 1 chain, T = 2: compose lif_step and nlif_step by hand.
        let w_in = array![[3.0]];
        let w_out = array![[0.7]];
        let lif = LifParams { lambda: 0.5, ..Default::default() };
        let nlif = NlifParams { lambda: 0.5, v_clip: 10.0, dt: 1.0 };
        let c = UnrollConfig {
            lif,
            nlif,
            activation: SpikeActivation::Surrogate(SurrogateSpec::default()),
            steps: 2,
        };
        let x = 0.9;
        let drive = InputDrive::Current(array![[x]]);
        let out = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();

        let mut hidden = LayerState::zeros(1);
        let mut read = LayerState::zeros(1);
        for _ in 0..2 {
            let (next, spikes) = lif_step(&hidden, &array![x * 3.0], &lif).unwrap();
            hidden = next;
            read = nlif_step(&read, &array![spikes[0] * 0.7], &nlif).unwrap();
        }
        assert_relative_eq!(out.readout[[0, 0]], read.v[0], max_relative = 1e-12);
    }

    #[test]
    fn single_pulse_above_threshold_spikes_once() {
        // one input pulse at t=0, scaled past theta: exactly one spike, the
        // readout membrane charges and then decays
        let w_in = array![[2.0]];
        let w_out = array![[1.0]];
        let lif = LifParams { lambda: 0.5, ..Default::default() };
        let nlif = NlifParams { lambda: 0.5, v_clip: 10.0, dt: 1.0 };
        let c = UnrollConfig {
            lif,
            nlif,
            activation: SpikeActivation::Surrogate(SurrogateSpec::default()),
            steps: 3,
        };
        let drive = InputDrive::SpikeTrain(vec![array![[1.0]], array![[0.0]], array![[0.0]]]);
        let out = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();
        // U_0 = 0.5 * 2.0 = 1.0 >= theta
        assert_eq!(out.hidden_spikes[0][[0, 0]], 1.0);
        assert_eq!(out.hidden_spikes[1][[0, 0]], 0.0);
        assert_eq!(out.hidden_spikes[2][[0, 0]], 0.0);
        assert_relative_eq!(out.out_membranes[0][[0, 0]], 0.5);
        assert_relative_eq!(out.out_membranes[1][[0, 0]], 0.25);
        assert_relative_eq!(out.out_membranes[2][[0, 0]], 0.125);
    }

    #[test]
    fn constant_drive_above_threshold_spikes_every_step() {
        // constant current that reaches theta within one step from reset
        // fires periodically with period 1
        let w_in = array![[2.0]];
        let w_out = array![[1.0]];
        let c = UnrollConfig {
            lif: LifParams { lambda: 0.5, ..Default::default() },
            nlif: NlifParams { lambda: 0.5, v_clip: 10.0, dt: 1.0 },
            activation: SpikeActivation::Surrogate(SurrogateSpec::default()),
            steps: 4,
        };
        let drive = InputDrive::Current(array![[1.0]]);
        let out = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();
        for t in 0..4 {
            assert_eq!(out.hidden_spikes[t][[0, 0]], 1.0);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w_in = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
        let w_out = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let drive = InputDrive::Current(Array2::from_shape_fn((2, 4), |_| rng.random_range(0.0..1.0)));
        let c = cfg(5);
        let out = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();
        let upstream = Array2::zeros((2, 3));
        let (gi, go) = unroll_backward(&w_in, &w_out, &drive, &out, &c, &upstream).unwrap();
        assert!(gi.iter().all(|&g| g == 0.0));
        assert!(go.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn infer_matches_forward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (n0, n1, n2, t) = (3, 6, 2, 7);
            let w_in = Array2::from_shape_fn((n0, n1), |_| rng.random_range(-2.0..2.0));
            let w_out = Array2::from_shape_fn((n1, n2), |_| rng.random_range(-2.0..2.0));
            let drive =
                InputDrive::Current(Array2::from_shape_fn((4, n0), |_| rng.random_range(0.0..1.0)));
            let c = cfg(t);
            let full = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();
            let (readout, stats) = unroll_infer(&w_in, &w_out, &drive, &c).unwrap();
            assert_eq!(full.readout, readout);
            let trace_spikes: f64 = full.hidden_spikes.iter().map(|s| s.sum()).sum();
            assert_eq!(trace_spikes, stats.total_spikes);
        }
    }

    #[test]
    fn spike_train_drive_roundtrip() {
        let w_in = array![[1.5, 0.0], [0.0, 1.5]];
        let w_out = array![[1.0], [1.0]];
        let frames = vec![array![[1.0, 0.0]], array![[0.0, 0.0]], array![[0.0, 1.0]]];
        let drive = InputDrive::SpikeTrain(frames);
        let c = cfg(3);
        let out = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();
        assert_eq!(out.hidden_spikes.len(), 3);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let w_in = Array2::zeros((3, 4));
        let w_out = Array2::zeros((5, 2)); // 5 != 4
        let drive = InputDrive::Current(Array2::zeros((1, 3)));
        assert!(unroll_forward(&w_in, &w_out, &drive, &cfg(2)).is_err());
    }

    #[test]
    fn rejects_non_finite_drive() {
        let w_in = Array2::zeros((2, 2));
        let w_out = Array2::zeros((2, 1));
        let drive = InputDrive::Current(array![[0.0, f64::INFINITY]]);
        assert!(matches!(
            unroll_forward(&w_in, &w_out, &drive, &cfg(2)),
            Err(SnnError::NonFiniteCurrent(1))
        ));
    }

    /// Central finite differences of a scalar loss over every weight.
    fn finite_diff_grads(
        w_in: &Array2<f64>,
        w_out: &Array2<f64>,
        drive: &InputDrive,
        c: &UnrollConfig,
        probe: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let h = 1e-5;
        let loss = |wi: &Array2<f64>, wo: &Array2<f64>| -> f64 {
            let out = unroll_forward(wi, wo, drive, c).unwrap();
            (&out.readout * probe).sum()
        };
        let mut gi = Array2::zeros(w_in.dim());
        for idx in 0..w_in.len() {
            let (r, col) = (idx / w_in.ncols(), idx % w_in.ncols());
            let mut plus = w_in.clone();
            plus[[r, col]] += h;
            let mut minus = w_in.clone();
            minus[[r, col]] -= h;
            gi[[r, col]] = (loss(&plus, w_out) - loss(&minus, w_out)) / (2.0 * h);
        }
        let mut go = Array2::zeros(w_out.dim());
        for idx in 0..w_out.len() {
            let (r, col) = (idx / w_out.ncols(), idx % w_out.ncols());
            let mut plus = w_out.clone();
            plus[[r, col]] += h;
            let mut minus = w_out.clone();
            minus[[r, col]] -= h;
            go[[r, col]] = (loss(w_in, &plus) - loss(w_in, &minus)) / (2.0 * h);
        }
        (gi, go)
    }

    fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let diff = (a - b).mapv(f64::abs);
        let scale = a.mapv(f64::abs) + b.mapv(f64::abs);
        diff.iter()
            .zip(scale.iter())
            .map(|(d, s)| if *s > 1e-8 { d / s } else { *d })
            .fold(0.0, f64::max)
    }

    #[test]
    fn smooth_twin_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let c = UnrollConfig {
            lif: LifParams { lambda: 0.4, ..Default::default() },
            nlif: NlifParams { lambda: 0.3, v_clip: 1e6, dt: 1.0 },
            activation: SpikeActivation::SmoothSigmoid { steepness: 3.0 },
            steps: 5,
        };
        let w_in = Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0));
        let w_out = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let drive = InputDrive::Current(Array2::from_shape_fn((2, 3), |_| rng.random_range(0.0..1.0)));
        let probe = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));

        let out = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();
        let (gi, go) = unroll_backward(&w_in, &w_out, &drive, &out, &c, &probe).unwrap();
        let (fdi, fdo) = finite_diff_grads(&w_in, &w_out, &drive, &c, &probe);
        assert!(rel_err(&gi, &fdi) < 1e-6, "w_in rel err {}", rel_err(&gi, &fdi));
        assert!(rel_err(&go, &fdo) < 1e-6, "w_out rel err {}", rel_err(&go, &fdo));
    }

    #[test]
    fn output_weights_gradient_exact_on_spiking_network() {
        // Spike trains do not depend on w_out, so the readout is smooth in
        // w_out even with the Heaviside activation.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = cfg(6);
        let w_in = Array2::from_shape_fn((4, 8), |_| rng.random_range(-2.0..2.0));
        let w_out = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0));
        let drive = InputDrive::Current(Array2::from_shape_fn((3, 4), |_| rng.random_range(0.0..1.5)));
        let probe = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));

        let out = unroll_forward(&w_in, &w_out, &drive, &c).unwrap();
        let (_, go) = unroll_backward(&w_in, &w_out, &drive, &out, &c, &probe).unwrap();
        let (_, fdo) = finite_diff_grads(&w_in, &w_out, &drive, &c, &probe);
        assert!(rel_err(&go, &fdo) < 1e-6, "w_out rel err {}", rel_err(&go, &fdo));
    }
}
