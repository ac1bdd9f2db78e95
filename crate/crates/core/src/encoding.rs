//! Observation encoding: min-max normalization to `[0,1]^d` followed by
//! either direct current injection (default) or latency-coded spike trains
//! where larger values spike earlier.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("degenerate bounds at feature {index}: min {min} >= max {max}")]
    DegenerateBounds { index: usize, min: f64, max: f64 },
    #[error("bounds dimension {bounds} does not match input dimension {input}")]
    DimMismatch { bounds: usize, input: usize },
    #[error("latency coding needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    #[default]
    Current,
    Latency,
}

/// Fixed per-feature normalization range published by the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationBounds {
    min: Array1<f64>,
    max: Array1<f64>,
}

impl NormalizationBounds {
    pub fn new(min: Array1<f64>, max: Array1<f64>) -> Result<Self, EncodingError> {
        if min.len() != max.len() {
            return Err(EncodingError::DimMismatch { bounds: min.len(), input: max.len() });
        }
        for (i, (lo, hi)) in min.iter().zip(max.iter()).enumerate() {
            if !(hi > lo) {
                return Err(EncodingError::DegenerateBounds { index: i, min: *lo, max: *hi });
            }
        }
        Ok(Self { min, max })
    }

    /// Unit bounds `[0,1]` per feature; normalization through these is the
    /// identity on already-normalized input.
    pub fn unit(dim: usize) -> Self {
        Self { min: Array1::zeros(dim), max: Array1::ones(dim) }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn normalize(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, EncodingError> {
        if x.len() != self.dim() {
            return Err(EncodingError::DimMismatch { bounds: self.dim(), input: x.len() });
        }
        Ok(ndarray::Zip::from(&x)
            .and(&self.min)
            .and(&self.max)
            .map_collect(|&v, &lo, &hi| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)))
    }

    pub fn normalize_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, EncodingError> {
        if x.ncols() != self.dim() {
            return Err(EncodingError::DimMismatch { bounds: self.dim(), input: x.ncols() });
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = ((*v - self.min[i]) / (self.max[i] - self.min[i])).clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }
}

/// Min-max normalization of one observation vector, clamped to `[0,1]`.
pub fn minmax_normalize(
    x: ArrayView1<f64>,
    bounds: &NormalizationBounds,
) -> Result<Array1<f64>, EncodingError> {
    bounds.normalize(x)
}

/// Binary spike tensor of shape `features x steps` with exactly one spike
/// per feature row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTensor {
    data: Array2<u8>,
}

impl SpikeTensor {
    pub fn features(&self) -> usize {
        self.data.nrows()
    }

    pub fn steps(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, feature: usize, step: usize) -> u8 {
        self.data[[feature, step]]
    }

    /// Column `t` as input currents for one network step.
    pub fn step_currents(&self, step: usize) -> Array1<f64> {
        self.data.column(step).mapv(|b| b as f64)
    }

    /// Spike time of one feature row.
    pub fn spike_time(&self, feature: usize) -> usize {
        self.data
            .row(feature)
            .iter()
            .position(|&b| b == 1)
            .expect("latency rows carry exactly one spike")
    }
}

/// Latency coding: feature `i` with normalized value `x` spikes once at
/// `t = floor((1 - x) * (steps - 1))`, so larger values spike earlier.
pub fn latency_encode(xhat: &Array1<f64>, steps: usize) -> Result<SpikeTensor, EncodingError> {
    if steps < 2 {
        return Err(EncodingError::TooFewSteps(steps));
    }
    let mut data = Array2::<u8>::zeros((xhat.len(), steps));
    for (i, &x) in xhat.iter().enumerate() {
        let t = latency_spike_time(x, steps);
        data[[i, t]] = 1;
    }
    Ok(SpikeTensor { data })
}

fn latency_spike_time(x: f64, steps: usize) -> usize {
    let t = ((1.0 - x.clamp(0.0, 1.0)) * (steps as f64 - 1.0)).floor();
    (t as usize).min(steps - 1)
}

/// Constant current injection: the normalized vector repeated for every step.
pub fn current_encode(xhat: &Array1<f64>, steps: usize) -> Vec<Array1<f64>> {
    (0..steps).map(|_| xhat.clone()).collect()
}

/// Batched latency coding, laid out as one `batch x features` binary frame
/// per step for direct consumption by the network unroll.
pub fn latency_encode_batch(
    xhat: ArrayView2<f64>,
    steps: usize,
) -> Result<Vec<Array2<f64>>, EncodingError> {
    if steps < 2 {
        return Err(EncodingError::TooFewSteps(steps));
    }
    let mut frames = vec![Array2::<f64>::zeros(xhat.dim()); steps];
    for (b, row) in xhat.rows().into_iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            frames[latency_spike_time(x, steps)][[b, i]] = 1.0;
        }
    }
    Ok(frames)
}
