//! Synthetic day-stream worlds with known ground truth.
//!
//! A world produces `actual_t = base_t + g_t + eps_t` where the bias follows
//! a random walk `g_{t+1} = g_t + v_t` and the noise is independent across
//! days and entries. The generator keeps the bias, drift and noise paths so
//! verifiers can compare realized error against closed forms computed from
//! the same trace.
//!
//! Reproducibility: all randomness comes from ChaCha8 keyed by the config
//! seed (stream 0 unless a trial index is given). Draw order is fixed — for
//! each day, noise entries in row-major order, then, except after the final
//! day, drift entries: one shared draw per `(hour, channel)` slice followed
//! by the per-region draws. Identical `(config, stream)` pairs therefore
//! yield bit-identical traces on every platform.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::DayRecord;
use crate::error::{Error, Result};
use crate::tensor::{DayTensor, TensorShape};

/// Distribution family of the drift and noise draws. Both are zero-mean with
/// the configured standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt(3) * std, sqrt(3) * std]`.
    Uniform,
}

/// The deterministic daily profile standing in for the base model's output.
/// Theorem quantities involve only `actual - base`, so the profile matters
/// only for realism; `Zeros` keeps error arithmetic exact in tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "profile")]
pub enum BaseSignal {
    Zeros,
    /// `offset + amplitude * sin(2π (hour / hours + region / regions))`,
    /// the same every day.
    Sine {
        offset: f64,
        amplitude: f64,
    },
}

impl BaseSignal {
    fn tensor(&self, shape: TensorShape) -> DayTensor {
        match *self {
            BaseSignal::Zeros => DayTensor::zeros(shape),
            BaseSignal::Sine { offset, amplitude } => {
                let mut values = vec![0.0; shape.len()];
                for h in 0..shape.hours {
                    for r in 0..shape.regions {
                        let phase = 2.0
                            * std::f64::consts::PI
                            * (h as f64 / shape.hours as f64 + r as f64 / shape.regions as f64);
                        for c in 0..shape.channels {
                            values[shape.index(h, r, c)] = offset + amplitude * phase.sin();
                        }
                    }
                }
                DayTensor::new(shape, values).expect("sine profile is finite")
            }
        }
    }
}

/// Full description of a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub shape: TensorShape,
    /// Horizon in days, `T >= 1`.
    pub horizon: usize,
    pub base_signal: BaseSignal,
    /// Initial bias `g_1`.
    pub bias_init: DayTensor,
    /// Per-entry standard deviation of each drift draw.
    pub drift_std: f64,
    /// Per-entry standard deviation of each noise draw.
    pub noise_std: f64,
    /// Spatial correlation of the drift in `[0, 1]`: each drift entry is
    /// `std * (sqrt(rho) * z_shared + sqrt(1 - rho) * z_region)` with the
    /// shared draw common to all regions of an `(hour, channel)` slice.
    /// Zero gives fully independent entries, one gives region-identical
    /// drift. Per-entry variance is `std^2` either way.
    pub drift_rho: f64,
    /// Optional per-region noise scale for heteroscedastic worlds; entry
    /// `(h, r, c)` gets standard deviation `noise_std * scale[r]`.
    pub noise_scale: Option<Vec<f64>>,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl WorldConfig {
    /// A world with zero bias and the given stds over the given shape.
    pub fn basic(
        shape: TensorShape,
        horizon: usize,
        drift_std: f64,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        Self {
            shape,
            horizon,
            base_signal: BaseSignal::Zeros,
            bias_init: DayTensor::zeros(shape),
            drift_std,
            noise_std,
            drift_rho: 0.0,
            noise_scale: None,
            noise_kind: NoiseKind::Gaussian,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1".to_string()));
        }
        if !(self.drift_std >= 0.0 && self.noise_std >= 0.0) {
            return Err(Error::invalid(format!(
                "stds must be nonnegative, got drift {} noise {}",
                self.drift_std, self.noise_std
            )));
        }
        if !(0.0..=1.0).contains(&self.drift_rho) {
            return Err(Error::invalid(format!(
                "drift_rho {} outside [0, 1]",
                self.drift_rho
            )));
        }
        if self.bias_init.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: self.bias_init.shape(),
            });
        }
        if let Some(scale) = &self.noise_scale {
            if scale.len() != self.shape.regions {
                return Err(Error::invalid(format!(
                    "noise_scale has {} entries for {} regions",
                    scale.len(),
                    self.shape.regions
                )));
            }
            if scale.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::invalid(
                    "noise_scale entries must be finite and nonnegative".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// `Tr(Σ)` of one day's noise: the summed per-entry noise variance.
    pub fn noise_trace(&self) -> f64 {
        let per_region: f64 = match &self.noise_scale {
            Some(scale) => scale.iter().map(|s| s * s).sum(),
            None => self.shape.regions as f64,
        };
        self.noise_std
            * self.noise_std
            * per_region
            * (self.shape.hours * self.shape.channels) as f64
    }
}

/// A generated world: the day stream plus its ground-truth decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldTrace {
    pub records: Vec<DayRecord>,
    /// `g_t` for every day, length `T`.
    pub bias_path: Vec<DayTensor>,
    /// `v_t` with `g_{t+1} = g_t + v_t`, length `T - 1`.
    pub drift_path: Vec<DayTensor>,
    /// `eps_t` for every day, length `T`.
    pub noise_path: Vec<DayTensor>,
}

impl WorldTrace {
    /// Sum over days of the squared 2-norm of the bias.
    pub fn bias_sq_sum(&self) -> f64 {
        self.bias_path
            .iter()
            .map(|g| g.values().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Sum over days of the squared 2-norm of the drift.
    pub fn drift_sq_sum(&self) -> f64 {
        self.drift_path
            .iter()
            .map(|v| v.values().iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

fn draw(rng: &mut ChaCha8Rng, kind: NoiseKind) -> f64 {
    match kind {
        NoiseKind::Gaussian => rng.sample(StandardNormal),
        NoiseKind::Uniform => {
            let u: f64 = rng.gen();
            (2.0 * u - 1.0) * 3.0f64.sqrt()
        }
    }
}

fn noise_tensor(rng: &mut ChaCha8Rng, config: &WorldConfig) -> DayTensor {
    let shape = config.shape;
    let mut values = vec![0.0; shape.len()];
    for h in 0..shape.hours {
        for r in 0..shape.regions {
            let scale = config.noise_scale.as_ref().map_or(1.0, |s| s[r]);
            for c in 0..shape.channels {
                values[shape.index(h, r, c)] =
                    config.noise_std * scale * draw(rng, config.noise_kind);
            }
        }
    }
    DayTensor::new(shape, values).expect("noise draws are finite")
}

fn drift_tensor(rng: &mut ChaCha8Rng, config: &WorldConfig) -> DayTensor {
    let shape = config.shape;
    let shared_w = config.drift_rho.sqrt();
    let region_w = (1.0 - config.drift_rho).sqrt();
    let mut values = vec![0.0; shape.len()];
    for h in 0..shape.hours {
        for c in 0..shape.channels {
            let shared = draw(rng, config.noise_kind);
            for r in 0..shape.regions {
                let z = draw(rng, config.noise_kind);
                values[shape.index(h, r, c)] =
                    config.drift_std * (shared_w * shared + region_w * z);
            }
        }
    }
    DayTensor::new(shape, values).expect("drift draws are finite")
}

fn generate_inner(
    config: &WorldConfig,
    stream: u64,
    mut bump_drift: impl FnMut(usize, DayTensor) -> Result<DayTensor>,
    mut bump_init: impl FnMut(DayTensor) -> Result<DayTensor>,
) -> Result<WorldTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let base = config.base_signal.tensor(config.shape);
    let horizon = config.horizon;

    let mut bias = bump_init(config.bias_init.clone())?;
    let mut records = Vec::with_capacity(horizon);
    let mut bias_path = Vec::with_capacity(horizon);
    let mut drift_path = Vec::with_capacity(horizon.saturating_sub(1));
    let mut noise_path = Vec::with_capacity(horizon);

    for day in 0..horizon {
        let noise = noise_tensor(&mut rng, config);
        let actual = base.add(&bias)?.add(&noise)?;
        records.push(DayRecord::new(day as u64 + 1, base.clone(), actual)?);
        bias_path.push(bias.clone());
        noise_path.push(noise);
        if day + 1 < horizon {
            let drift = bump_drift(day, drift_tensor(&mut rng, config))?;
            bias = bias.add(&drift)?;
            drift_path.push(drift);
        }
    }
    Ok(WorldTrace {
        records,
        bias_path,
        drift_path,
        noise_path,
    })
}

/// Generates the world for stream 0 of its seed.
pub fn generate(config: &WorldConfig) -> Result<WorldTrace> {
    generate_stream(config, 0)
}

/// Generates one of the independent streams of a seed; Monte Carlo trials use
/// the trial index as the stream.
pub fn generate_stream(config: &WorldConfig, stream: u64) -> Result<WorldTrace> {
    generate_inner(config, stream, |_, d| Ok(d), Ok)
}

/// As [`generate`], with a one-time additive step of `shift_amount` landing
/// on the bias at `shift_day` (1-based). The step is carried by the drift
/// entry leading into that day, so both trace identities stay exact.
pub fn regime_shift_world(
    config: &WorldConfig,
    shift_day: usize,
    shift_amount: &DayTensor,
) -> Result<WorldTrace> {
    regime_shift_world_stream(config, shift_day, shift_amount, 0)
}

/// Stream-indexed variant of [`regime_shift_world`].
pub fn regime_shift_world_stream(
    config: &WorldConfig,
    shift_day: usize,
    shift_amount: &DayTensor,
    stream: u64,
) -> Result<WorldTrace> {
    if shift_day == 0 || shift_day > config.horizon {
        return Err(Error::invalid(format!(
            "shift_day {shift_day} outside 1..={}",
            config.horizon
        )));
    }
    if shift_amount.shape() != config.shape {
        return Err(Error::ShapeMismatch {
            left: config.shape,
            right: shift_amount.shape(),
        });
    }
    generate_inner(
        config,
        stream,
        |day, drift| {
            if day + 2 == shift_day {
                drift.add(shift_amount)
            } else {
                Ok(drift)
            }
        },
        |init| {
            if shift_day == 1 {
                init.add(shift_amount)
            } else {
                Ok(init)
            }
        },
    )
}
