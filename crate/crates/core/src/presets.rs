//! Pinned world configurations shared by the verification CLI defaults and
//! the acceptance suite. Every constant here is part of a pre-registered
//! check; change them and the recorded verification outcomes no longer mean
//! anything.

use crate::smoothing::RegionGraph;
use crate::synth::{BaseSignal, WorldConfig};
use crate::tensor::{DayTensor, TensorShape};

fn shape(h: usize, r: usize, c: usize) -> TensorShape {
    TensorShape::new(h, r, c).expect("preset shapes are valid")
}

/// Default trial counts for the verifiers.
pub const T1_TRIALS: usize = 2000;
pub const T2_TRIALS: usize = 2000;
pub const T3_TRIALS: usize = 2000;
pub const T4_TRIALS: usize = 100;

/// Alphas at which the EMA identity is verified.
pub const T3_ALPHAS: [f64; 3] = [0.3, 0.7, 0.9];

/// Noiseless world with `||g_1||² = 4` over ten days: the uncorrected-model
/// identity holds exactly on it.
pub fn t1_noiseless() -> WorldConfig {
    let s = shape(1, 2, 2);
    let mut config = WorldConfig::basic(s, 10, 0.0, 0.0, 101);
    config.bias_init = DayTensor::constant(s, 1.0).expect("finite constant");
    config
}

/// Noise-only stochastic world for the uncorrected-model identity.
pub fn t1_noise_world() -> WorldConfig {
    WorldConfig::basic(shape(24, 4, 2), 100, 0.0, 1.0, 102)
}

/// Drift-plus-noise stochastic world for the uncorrected-model identity.
pub fn t1_drift_world() -> WorldConfig {
    WorldConfig::basic(shape(24, 4, 2), 100, 0.3, 1.0, 103)
}

/// World for the previous-day corrector identity.
pub fn t2_world() -> WorldConfig {
    WorldConfig::basic(shape(24, 4, 2), 500, 0.5, 1.0, 104)
}

/// Drift-dominant world for the EMA identity. The identity's noise
/// coefficient is a large-horizon approximation that is only tight when the
/// drift term carries the total, hence the 3:1 ratio of stds.
pub fn t3_world() -> WorldConfig {
    WorldConfig::basic(shape(24, 4, 2), 500, 0.6, 0.2, 105)
}

/// The default synthetic world: mild spatially correlated drift under unit
/// noise on a 4×4 grid of regions, with a daily sine profile as the base
/// signal.
pub fn default_world() -> WorldConfig {
    let s = shape(24, 16, 2);
    let mut config = WorldConfig::basic(s, 500, 0.2, 1.0, 42);
    config.base_signal = BaseSignal::Sine {
        offset: 10.0,
        amplitude: 5.0,
    };
    config.drift_rho = 0.5;
    config
}

/// The grid graph matching [`default_world`]'s sixteen regions.
pub fn default_grid() -> RegionGraph {
    RegionGraph::grid(4, 4)
}

/// Zero-drift world: the base model is unbiased, corrections can only add
/// noise.
pub fn zero_drift_world() -> WorldConfig {
    let mut config = WorldConfig::basic(shape(24, 16, 2), 500, 0.0, 1.0, 106);
    config.base_signal = BaseSignal::Sine {
        offset: 10.0,
        amplitude: 5.0,
    };
    config
}

/// World with fully region-correlated drift, where spatial smoothing of the
/// error signal has the most to offer.
pub fn correlated_drift_world() -> WorldConfig {
    let mut config = WorldConfig::basic(shape(24, 16, 2), 60, 0.3, 1.0, 107);
    config.drift_rho = 1.0;
    config
}

/// Alpha-sweep world with drift and noise, giving an interior optimum.
pub fn ucurve_world() -> WorldConfig {
    WorldConfig::basic(shape(24, 4, 2), 300, 0.2, 1.0, 108)
}

/// Alpha-sweep world without drift: no correction is the optimum.
pub fn ucurve_no_drift_world() -> WorldConfig {
    WorldConfig::basic(shape(24, 4, 2), 300, 0.0, 1.0, 109)
}

/// Alpha-sweep world without noise: immediate correction is the optimum.
pub fn ucurve_no_noise_world() -> WorldConfig {
    WorldConfig::basic(shape(24, 4, 2), 300, 0.3, 0.0, 110)
}

/// The sweep grid: 0 to 0.95 in steps of 0.05, plus 1 (the uncorrected
/// model).
pub fn alpha_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
    grid.push(1.0);
    grid
}
