//! Analytical inference-energy model for the two-layer spiking network and
//! its conventional counterpart, from measured activation statistics.
//!
//! The spiking network pays multiply-accumulate cost only in the input layer
//! (continuous currents) scaled by the hidden spike rate, and
//! accumulate-only cost in the spike-driven output layer. The conventional
//! network pays multiply-accumulate cost in both layers scaled by its
//! activation rates. Costs are in picojoules; reports are in millijoules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ndarray::Array2;

pub const PJ_PER_MJ: f64 = 1e9;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("{model} energy asked of a config carrying {got} rates")]
    WrongRates { model: &'static str, got: &'static str },
    #[error("mismatched dimensions between configs: {0}")]
    DimMismatch(String),
    #[error("invalid energy config: {0}")]
    Invalid(String),
}

/// Per-operation energy costs in picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpCosts {
    /// Energy per multiply(-accumulate-class multiply).
    pub mac_pj: f64,
    /// Energy per accumulate.
    pub ac_pj: f64,
}

impl Default for OpCosts {
    fn default() -> Self {
        Self { mac_pj: 4.6, ac_pj: 0.9 }
    }
}

impl OpCosts {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.mac_pj > 0.0 && self.ac_pj > 0.0) {
            return Err(EnergyError::Invalid("operation costs must be positive".into()));
        }
        Ok(())
    }
}

/// Measured activity rates of one model family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelRates {
    Snn { spike_rate: f64, membrane_rate: f64 },
    Ann { input_rate: f64, output_rate: f64 },
}

impl ModelRates {
    fn values(&self) -> [f64; 2] {
        match self {
            Self::Snn { spike_rate, membrane_rate } => [*spike_rate, *membrane_rate],
            Self::Ann { input_rate, output_rate } => [*input_rate, *output_rate],
        }
    }
}

/// Dimensions and rates of one energy evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConfig {
    pub batch: usize,
    pub steps: usize,
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
    pub rates: ModelRates,
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.batch == 0 || self.steps == 0 || self.n0 == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(EnergyError::Invalid("dimensions must be >= 1".into()));
        }
        for r in self.rates.values() {
            if !(0.0..=1.0).contains(&r) {
                return Err(EnergyError::Invalid(format!("rates must lie in [0,1], got {r}")));
            }
        }
        Ok(())
    }
}

/// Average spike rate over a batch of binary spike records (`B x N1`).
pub fn input_spike_rate(spikes: &Array2<f64>) -> Result<f64, EnergyError> {
    if spikes.is_empty() {
        return Err(EnergyError::EmptyInput("spike records"));
    }
    Ok(spikes.sum() / spikes.len() as f64)
}

/// Fraction of output neurons whose membrane trace (`N2 x T`) is ever
/// nonzero.
pub fn membrane_activation_rate(traces: &Array2<f64>) -> f64 {
    let n2 = traces.nrows();
    if n2 == 0 {
        return 0.0;
    }
    let active = traces
        .rows()
        .into_iter()
        .filter(|row| row.iter().map(|v| v.abs()).sum::<f64>() > 0.0)
        .count();
    active as f64 / n2 as f64
}

/// Fractions of strictly positive entries in the input batch and the hidden
/// activations.
pub fn ann_activation_rates(inputs: &Array2<f64>, hidden: &Array2<f64>) -> (f64, f64) {
    let frac = |m: &Array2<f64>| {
        if m.is_empty() {
            0.0
        } else {
            m.iter().filter(|&&v| v > 0.0).count() as f64 / m.len() as f64
        }
    };
    (frac(inputs), frac(hidden))
}

/// Per-layer operation counts behind one energy figure.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LayerOps {
    pub layer1_macs: f64,
    pub layer1_acs: f64,
    pub layer2_macs: f64,
    pub layer2_acs: f64,
}

/// Spiking-network energy in picojoules.
pub fn snn_energy(cfg: &EnergyConfig, costs: &OpCosts) -> Result<f64, EnergyError> {
    Ok(snn_energy_ops(cfg, costs)?.0)
}

pub fn snn_energy_ops(cfg: &EnergyConfig, costs: &OpCosts) -> Result<(f64, LayerOps), EnergyError> {
    cfg.validate()?;
    costs.validate()?;
    let (r, r_mem) = match cfg.rates {
        ModelRates::Snn { spike_rate, membrane_rate } => (spike_rate, membrane_rate),
        ModelRates::Ann { .. } => {
            return Err(EnergyError::WrongRates { model: "snn", got: "ann" })
        }
    };
    let bt = (cfg.batch * cfg.steps) as f64;
    let (n0, n1, n2) = (cfg.n0 as f64, cfg.n1 as f64, cfg.n2 as f64);
    let ops = LayerOps {
        layer1_macs: bt * n1 * r * n0,
        layer1_acs: bt * n1 * r * (n0 - 1.0),
        layer2_macs: 0.0,
        layer2_acs: bt * n2 * r_mem * n1,
    };
    let energy = bt * (n1 * r * (n0 * costs.mac_pj + (n0 - 1.0) * costs.ac_pj)
        + n2 * r_mem * n1 * costs.ac_pj);
    Ok((energy, ops))
}

/// Conventional-network energy in picojoules.
pub fn ann_energy(cfg: &EnergyConfig, costs: &OpCosts) -> Result<f64, EnergyError> {
    Ok(ann_energy_ops(cfg, costs)?.0)
}

pub fn ann_energy_ops(cfg: &EnergyConfig, costs: &OpCosts) -> Result<(f64, LayerOps), EnergyError> {
    cfg.validate()?;
    costs.validate()?;
    let (r_in, r_out) = match cfg.rates {
        ModelRates::Ann { input_rate, output_rate } => (input_rate, output_rate),
        ModelRates::Snn { .. } => {
            return Err(EnergyError::WrongRates { model: "ann", got: "snn" })
        }
    };
    let bt = (cfg.batch * cfg.steps) as f64;
    let (n0, n1, n2) = (cfg.n0 as f64, cfg.n1 as f64, cfg.n2 as f64);
    let ops = LayerOps {
        layer1_macs: bt * n1 * r_in * n0,
        layer1_acs: bt * n1 * r_in * (n0 - 1.0),
        layer2_macs: bt * n2 * r_out * n1,
        layer2_acs: bt * n2 * r_out * (n1 - 1.0),
    };
    let energy = bt * (n1 * r_in * (n0 * costs.mac_pj + (n0 - 1.0) * costs.ac_pj)
        + n2 * r_out * (n1 * costs.mac_pj + (n1 - 1.0) * costs.ac_pj));
    Ok((energy, ops))
}

/// Side-by-side energy figures and the resulting saving fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub snn_mj: f64,
    pub ann_mj: f64,
    /// `1 - E_snn / E_ann`.
    pub saving: f64,
    pub snn_ops: LayerOps,
    pub ann_ops: LayerOps,
}

/// Compare a spiking and a conventional configuration sharing dimensions.
pub fn energy_report(
    snn: &EnergyConfig,
    ann: &EnergyConfig,
    costs: &OpCosts,
) -> Result<EnergyReport, EnergyError> {
    if (snn.batch, snn.steps, snn.n0, snn.n1, snn.n2)
        != (ann.batch, ann.steps, ann.n0, ann.n1, ann.n2)
    {
        return Err(EnergyError::DimMismatch(format!(
            "snn (B={},T={},{}x{}x{}) vs ann (B={},T={},{}x{}x{})",
            snn.batch, snn.steps, snn.n0, snn.n1, snn.n2, ann.batch, ann.steps, ann.n0, ann.n1,
            ann.n2
        )));
    }
    let (e_snn, snn_ops) = snn_energy_ops(snn, costs)?;
    let (e_ann, ann_ops) = ann_energy_ops(ann, costs)?;
    Ok(EnergyReport {
        snn_mj: e_snn / PJ_PER_MJ,
        ann_mj: e_ann / PJ_PER_MJ,
        saving: 1.0 - e_snn / e_ann,
        snn_ops,
        ann_ops,
    })
}

/// The published reference configuration pair (large-scale batch, audit-mode
/// steps, 18-256-7 layers).
pub fn reference_configs() -> (EnergyConfig, EnergyConfig) {
    let snn = EnergyConfig {
        batch: 8192,
        steps: 500,
        n0: 18,
        n1: 256,
        n2: 7,
        rates: ModelRates::Snn { spike_rate: 0.31, membrane_rate: 1.0 },
    };
    let ann = EnergyConfig {
        rates: ModelRates::Ann { input_rate: 1.0, output_rate: 0.48 },
        ..snn
    };
    (snn, ann)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn spike_rate_counts() {
        assert_eq!(input_spike_rate(&Array2::zeros((4, 4))).unwrap(), 0.0);
        assert_eq!(input_spike_rate(&Array2::ones((4, 4))).unwrap(), 1.0);
        let records = array![[1.0, 0.0], [0.0, 0.0]];
        assert_relative_eq!(input_spike_rate(&records).unwrap(), 0.25);
        assert!(input_spike_rate(&Array2::zeros((0, 0))).is_err());
    }

    #[test]
    fn membrane_rate_counts_ever_active_neurons() {
        assert_eq!(membrane_activation_rate(&Array2::zeros((3, 5))), 0.0);
        let traces = array![
            [0.0, 0.0, 0.1],
            [0.0, 0.0, 0.0],
            [-2.0, 0.0, 0.0],
            [0.0, 0.0, 0.0]
        ];
        assert_relative_eq!(membrane_activation_rate(&traces), 0.5);
    }

    #[test]
    fn ann_rates_count_strict_positives() {
        let inputs = array![[0.5, 0.0], [1.0, 2.0]];
        let hidden = array![[1.0, -1.0], [2.0, 0.0]];
        let (r_in, r_out) = ann_activation_rates(&inputs, &hidden);
        assert_relative_eq!(r_in, 0.75);
        assert_relative_eq!(r_out, 0.5);
    }

    #[test]
    fn snn_energy_zero_rates() {
        let cfg = EnergyConfig {
            batch: 10,
            steps: 10,
            n0: 18,
            n1: 256,
            n2: 7,
            rates: ModelRates::Snn { spike_rate: 0.0, membrane_rate: 0.0 },
        };
        assert_eq!(snn_energy(&cfg, &OpCosts::default()).unwrap(), 0.0);
    }

    #[test]
    fn snn_energy_hand_arithmetic() {
        // B=T=1, 2-2-1, all rates 1: 2*(2*4.6 + 0.9) + 1*2*0.9 = 22.0 pJ
        let cfg = EnergyConfig {
            batch: 1,
            steps: 1,
            n0: 2,
            n1: 2,
            n2: 1,
            rates: ModelRates::Snn { spike_rate: 1.0, membrane_rate: 1.0 },
        };
        assert_relative_eq!(snn_energy(&cfg, &OpCosts::default()).unwrap(), 22.0, epsilon = 1e-12);
    }

    #[test]
    fn ann_energy_hand_arithmetic() {
        // B=T=1, 2-2-1, rates 1: 2*10.1 + 1*(2*4.6 + 0.9) = 30.3 pJ
        let cfg = EnergyConfig {
            batch: 1,
            steps: 1,
            n0: 2,
            n1: 2,
            n2: 1,
            rates: ModelRates::Ann { input_rate: 1.0, output_rate: 1.0 },
        };
        assert_relative_eq!(ann_energy(&cfg, &OpCosts::default()).unwrap(), 30.3, epsilon = 1e-12);
    }

    #[test]
    fn reference_pair_reproduces_published_numbers() {
        let (snn, ann) = reference_configs();
        let report = energy_report(&snn, &ann, &OpCosts::default()).unwrap();
        assert!((report.snn_mj - 38.49).abs() < 0.01, "snn {}", report.snn_mj);
        assert!((report.ann_mj - 122.23).abs() < 0.01, "ann {}", report.ann_mj);
        assert!((report.saving - 0.6851).abs() < 1e-4, "saving {}", report.saving);
    }

    #[test]
    fn equal_energies_zero_saving() {
        // With n1 = 1, unit rates and equal op costs the two formulas agree
        // term by term, so the saving collapses to zero.
        let costs = OpCosts { mac_pj: 1.0, ac_pj: 1.0 };
        let snn = EnergyConfig {
            batch: 7,
            steps: 3,
            n0: 4,
            n1: 1,
            n2: 2,
            rates: ModelRates::Snn { spike_rate: 1.0, membrane_rate: 1.0 },
        };
        let ann = EnergyConfig {
            rates: ModelRates::Ann { input_rate: 1.0, output_rate: 1.0 },
            ..snn
        };
        let report = energy_report(&snn, &ann, &costs).unwrap();
        assert_relative_eq!(report.saving, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn energy_is_linear_in_rates() {
        let (snn, _) = reference_configs();
        let costs = OpCosts::default();
        let half = EnergyConfig {
            rates: ModelRates::Snn { spike_rate: 0.155, membrane_rate: 0.5 },
            ..snn
        };
        let full = snn_energy(&snn, &costs).unwrap();
        let halved = snn_energy(&half, &costs).unwrap();
        assert_relative_eq!(halved * 2.0, full, epsilon = 1e-6);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let (snn, mut ann) = reference_configs();
        ann.n1 = 128;
        assert!(matches!(
            energy_report(&snn, &ann, &OpCosts::default()),
            Err(EnergyError::DimMismatch(_))
        ));
    }

    #[test]
    fn wrong_rate_family_rejected() {
        let (snn, ann) = reference_configs();
        assert!(matches!(
            snn_energy(&ann, &OpCosts::default()),
            Err(EnergyError::WrongRates { .. })
        ));
        assert!(matches!(
            ann_energy(&snn, &OpCosts::default()),
            Err(EnergyError::WrongRates { .. })
        ));
    }

    #[test]
    fn structural_cross_check_first_layer() {
        // With r = 1 and equal op costs the spiking first layer matches the
        // conventional first layer with r_in = 1.
        let costs = OpCosts { mac_pj: 2.0, ac_pj: 2.0 };
        let snn = EnergyConfig {
            batch: 3,
            steps: 4,
            n0: 5,
            n1: 6,
            n2: 1,
            rates: ModelRates::Snn { spike_rate: 1.0, membrane_rate: 0.0 },
        };
        let ann = EnergyConfig {
            rates: ModelRates::Ann { input_rate: 1.0, output_rate: 0.0 },
            ..snn
        };
        assert_relative_eq!(
            snn_energy(&snn, &costs).unwrap(),
            ann_energy(&ann, &costs).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_rates_rejected() {
        let cfg = EnergyConfig {
            batch: 1,
            steps: 1,
            n0: 1,
            n1: 1,
            n2: 1,
            rates: ModelRates::Snn { spike_rate: 1.2, membrane_rate: 0.0 },
        };
        assert!(cfg.validate().is_err());
    }
}
