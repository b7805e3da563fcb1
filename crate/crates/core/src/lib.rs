//! Model-agnostic online correction of daily spatiotemporal demand forecasts.
//!
//! A base forecasting model emits one prediction tensor per day over
//! `(hour, region, channel)`; this crate corrects each day's forecast with
//! smoothed residuals from prior days. The correction is maintained by a pool
//! of EMA experts with different smoothing factors, combined by
//! exponentially weighted averaging, and fed an error signal that is smoothed
//! across neighboring regions and adjacent hours with parameters learned by
//! online gradient descent. Alongside the engine live a synthetic-world
//! generator with known ground truth and Monte Carlo verifiers that hold the
//! engine's realized error to closed-form identities.
//!
//! The numeric core ([`tensor`], [`experts`], [`smoothing`], [`engine`]) is
//! generic over the scalar type; every type defaults to `f64`, which is what
//! the simulation and verification layers require.

pub mod engine;
pub mod error;
pub mod experts;
pub mod io;
pub mod presets;
pub mod scalar;
pub mod smoothing;
pub mod synth;
pub mod tensor;
pub mod theory;

pub use engine::{
    run_stream, DayRecord, DayTrace, Engine, EngineConfig, OgdOrder, RunOutput, Strategy,
};
pub use error::{Error, Result};
pub use experts::{EnsembleState, ExpertState};
pub use scalar::Scalar;
pub use smoothing::{Padding, RegionGraph, SmoothParams};
pub use synth::{
    generate, generate_stream, regime_shift_world, BaseSignal, NoiseKind, WorldConfig, WorldTrace,
};
pub use tensor::{
    evaluate, squared_error, squared_error_with, DayTensor, LossReduction, MetricReport,
    TensorShape,
};
pub use theory::{
    alpha_ucurve, regret_audit, verify_t1, verify_t2, verify_t3, RegretAudit, TheoremTarget,
    UcurveResult,
};

/// Single-precision aliases for the generic core types.
pub type DayTensor32 = tensor::DayTensor<f32>;
pub type MetricReport32 = tensor::MetricReport<f32>;
pub type EnsembleState32 = experts::EnsembleState<f32>;
pub type SmoothParams32 = smoothing::SmoothParams<f32>;
pub type Engine32 = engine::Engine<f32>;
