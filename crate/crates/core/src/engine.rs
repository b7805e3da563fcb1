//! The online correction loop and its baseline strategies.
//!
//! One engine owns the state for one day stream. Prediction and observation
//! are separate phases: `predict` is pure and may be called before the day's
//! actuals exist; `observe` consumes the realized actuals and advances the
//! ensemble, the smoothing parameters and the cached raw error. Everything a
//! day's corrected prediction depends on was observed strictly earlier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::EnsembleState;
use crate::scalar::Scalar;
use crate::smoothing::{
    loss_gradients, ogd_step, smooth, Padding, RegionGraph, SmoothGradients, SmoothParams,
};
use crate::tensor::{evaluate, DayTensor, LossReduction, MetricReport, TensorShape};

/// One day of input: the base model's prediction and the observed actual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord<S = f64> {
    pub day_index: u64,
    pub base_pred: DayTensor<S>,
    pub actual: DayTensor<S>,
}

impl<S: Scalar> DayRecord<S> {
    pub fn new(day_index: u64, base_pred: DayTensor<S>, actual: DayTensor<S>) -> Result<Self> {
        if base_pred.shape() != actual.shape() {
            return Err(Error::ShapeMismatch {
                left: base_pred.shape(),
                right: actual.shape(),
            });
        }
        Ok(Self {
            day_index,
            base_pred,
            actual,
        })
    }

    pub fn shape(&self) -> TensorShape {
        self.base_pred.shape()
    }
}

/// Correction strategy run over a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "alpha")]
pub enum Strategy<S = f64> {
    /// Base predictions untouched.
    Ori,
    /// Yesterday's raw error added verbatim.
    PrevDay,
    /// A single EMA corrector with the given smoothing factor, no spatial or
    /// temporal smoothing.
    FixedEma(S),
    /// The complete method: expert ensemble plus adaptive spatiotemporal
    /// smoothing of the error signal.
    Full,
    /// The ensemble alone; the error signal is used raw. The ablation arm.
    NoSmooth,
}

impl<S: Scalar> Strategy<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ori => "ori",
            Strategy::PrevDay => "prev-day",
            Strategy::FixedEma(_) => "fixed-ema",
            Strategy::Full => "full",
            Strategy::NoSmooth => "no-smooth",
        }
    }
}

/// Which end of the observe step applies the parameter gradient.
///
/// `Literal` follows the within-day line order of the update loop: today's
/// error is smoothed with the current parameters, and the gradient step lands
/// afterwards, taking effect from tomorrow. `ParamsFirst` applies the step
/// before smoothing, so today's error is smoothed with the freshly updated
/// parameters. The gradient itself is identical in both: the daily loss
/// differentiated at the current parameters against the cached raw error of
/// the previous day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OgdOrder {
    #[default]
    Literal,
    ParamsFirst,
}

/// Hyperparameters of the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig<S = f64> {
    /// Smoothing factors of the expert pool used by `Full` and `NoSmooth`.
    pub alphas: Vec<S>,
    /// Weight-update learning rate.
    pub eta: S,
    pub eta_gamma: S,
    pub eta_kernel: S,
    pub kernel_len: usize,
    pub gamma_init: S,
    pub padding: Padding,
    pub loss_reduction: LossReduction,
    pub ogd_order: OgdOrder,
}

impl<S: Scalar> Default for EngineConfig<S> {
    fn default() -> Self {
        Self {
            alphas: [0.7, 0.8, 0.9, 1.0]
                .iter()
                .map(|&a| S::from_config(a))
                .collect(),
            eta: S::from_config(10.0),
            eta_gamma: S::from_config(0.01),
            eta_kernel: S::from_config(0.01),
            kernel_len: 3,
            gamma_init: S::from_config(0.1),
            padding: Padding::Zero,
            loss_reduction: LossReduction::Mean,
            ogd_order: OgdOrder::Literal,
        }
    }
}

/// Full engine state for one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engine<S = f64> {
    ensemble: EnsembleState<S>,
    smooth_params: SmoothParams<S>,
    graph: RegionGraph,
    cached_raw_err: Option<DayTensor<S>>,
    /// Corrections as they stood before the latest delta update; the gradient
    /// of today's loss is taken through yesterday's smoothing applied on top
    /// of these.
    prev_deltas: Option<Vec<DayTensor<S>>>,
    day_counter: u64,
    last_day_index: Option<u64>,
    shape: TensorShape,
    smoothing_enabled: bool,
    ogd_enabled: bool,
    loss_reduction: LossReduction,
    ogd_order: OgdOrder,
}

impl<S: Scalar> Engine<S> {
    pub fn new(
        strategy: &Strategy<S>,
        config: &EngineConfig<S>,
        graph: RegionGraph,
        shape: TensorShape,
    ) -> Result<Self> {
        let (alphas, smoothing_enabled, ogd_enabled): (Vec<S>, bool, bool) = match strategy {
            Strategy::Ori => (vec![S::one()], false, false),
            Strategy::PrevDay => (vec![S::zero()], false, false),
            Strategy::FixedEma(a) => {
                if !(S::zero()..=S::one()).contains(a) {
                    return Err(Error::invalid(format!("alpha {a} outside [0, 1]")));
                }
                (vec![*a], false, false)
            }
            Strategy::Full => (config.alphas.clone(), true, true),
            Strategy::NoSmooth => (config.alphas.clone(), false, false),
        };
        if shape.regions != graph.region_count() {
            return Err(Error::RegionCount {
                expected: graph.region_count(),
                found: shape.regions,
            });
        }
        let ensemble = EnsembleState::new(&alphas, config.eta, shape)?;
        let smooth_params = SmoothParams::new(
            config.gamma_init,
            SmoothParams::identity_kernel(config.kernel_len)?,
            config.eta_gamma,
            config.eta_kernel,
            config.padding,
        )?;
        if smoothing_enabled && config.kernel_len > shape.hours {
            return Err(Error::invalid(format!(
                "kernel length {} exceeds {} hours",
                config.kernel_len, shape.hours
            )));
        }
        Ok(Self {
            ensemble,
            smooth_params,
            graph,
            cached_raw_err: None,
            prev_deltas: None,
            day_counter: 0,
            last_day_index: None,
            shape,
            smoothing_enabled,
            ogd_enabled,
            loss_reduction: config.loss_reduction,
            ogd_order: config.ogd_order,
        })
    }

    pub fn ensemble(&self) -> &EnsembleState<S> {
        &self.ensemble
    }

    pub fn smooth_params(&self) -> &SmoothParams<S> {
        &self.smooth_params
    }

    pub fn graph(&self) -> &RegionGraph {
        &self.graph
    }

    pub fn day_counter(&self) -> u64 {
        self.day_counter
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    /// The ensemble-combined corrected prediction for today. Pure: state is
    /// only advanced by [`Engine::observe`].
    pub fn predict(&self, base_pred: &DayTensor<S>) -> Result<DayTensor<S>> {
        if base_pred.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: base_pred.shape(),
            });
        }
        self.ensemble.combine_with_base(base_pred)
    }

    /// Ingests one observed day. `corrected_pred` must be the value
    /// `predict` returned for this record.
    ///
    /// Order of effects: the raw error is computed; the smoothing parameters
    /// take their gradient step (skipped on the first observed day, when no
    /// previous error is cached) either before or after the error is smoothed,
    /// per [`OgdOrder`]; expert corrections advance on the smoothed error;
    /// expert weights update from their realized losses; the raw error is
    /// cached for tomorrow's gradient.
    pub fn observe(&mut self, record: &DayRecord<S>, corrected_pred: &DayTensor<S>) -> Result<()> {
        if record.shape() != self.shape || corrected_pred.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: if record.shape() != self.shape {
                    record.shape()
                } else {
                    corrected_pred.shape()
                },
            });
        }
        if let Some(last) = self.last_day_index {
            if record.day_index <= last {
                return Err(Error::DayOrder {
                    previous: last,
                    found: record.day_index,
                });
            }
        }

        let raw_err = record.actual.sub(&record.base_pred)?;
        let expert_preds = self.ensemble.expert_predictions(&record.base_pred)?;
        let grads = self.pending_gradients(record)?;

        match self.ogd_order {
            OgdOrder::ParamsFirst => {
                if let Some(g) = &grads {
                    self.smooth_params = ogd_step(&self.smooth_params, g)?;
                }
                self.advance_ensemble(&raw_err, &expert_preds, &record.actual)?;
            }
            OgdOrder::Literal => {
                self.advance_ensemble(&raw_err, &expert_preds, &record.actual)?;
                if let Some(g) = &grads {
                    self.smooth_params = ogd_step(&self.smooth_params, g)?;
                }
            }
        }

        self.cached_raw_err = Some(raw_err);
        self.last_day_index = Some(record.day_index);
        self.day_counter += 1;
        Ok(())
    }

    /// Gradient of today's loss at the current parameters, through the cached
    /// raw error of the previous day and the corrections that preceded the
    /// last delta update. `None` when disabled or when nothing is cached yet.
    fn pending_gradients(&self, record: &DayRecord<S>) -> Result<Option<SmoothGradients<S>>> {
        if !self.ogd_enabled {
            return Ok(None);
        }
        let (cached, prev_deltas) = match (&self.cached_raw_err, &self.prev_deltas) {
            (Some(c), Some(p)) => (c, p),
            _ => return Ok(None),
        };
        let view = EnsembleState::from_parts(
            self.ensemble
                .experts()
                .iter()
                .zip(prev_deltas)
                .map(|(e, d)| (e.alpha(), d.clone()))
                .collect(),
            self.ensemble.weights().to_vec(),
            self.ensemble.eta(),
        )?;
        loss_gradients(
            cached,
            &record.base_pred,
            &record.actual,
            &view,
            &self.graph,
            &self.smooth_params,
            self.loss_reduction,
        )
        .map(Some)
    }

    fn advance_ensemble(
        &mut self,
        raw_err: &DayTensor<S>,
        expert_preds: &[DayTensor<S>],
        actual: &DayTensor<S>,
    ) -> Result<()> {
        let smoothed = if self.smoothing_enabled {
            smooth(raw_err, &self.graph, &self.smooth_params)?
        } else {
            raw_err.clone()
        };
        self.prev_deltas = Some(
            self.ensemble
                .experts()
                .iter()
                .map(|e| e.delta().clone())
                .collect(),
        );
        self.ensemble = self.ensemble.update_deltas(&smoothed)?;
        self.ensemble = self
            .ensemble
            .update_weights(expert_preds, actual, self.loss_reduction)?;
        Ok(())
    }
}

/// One row of the per-day state trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTrace<S = f64> {
    pub day: u64,
    /// Expert weights after the day's update.
    pub weights: Vec<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<S>>,
    pub mae: S,
    pub rmse: S,
}

/// Everything a stream run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<S = f64> {
    pub corrected: Vec<DayTensor<S>>,
    pub report: MetricReport<S>,
    pub trace: Vec<DayTrace<S>>,
}

/// Runs a strategy over an ordered day stream.
pub fn run_stream<S: Scalar>(
    records: &[DayRecord<S>],
    strategy: &Strategy<S>,
    config: &EngineConfig<S>,
    graph: &RegionGraph,
) -> Result<RunOutput<S>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("day stream"));
    }
    let shape = records[0].shape();
    let mut engine = Engine::new(strategy, config, graph.clone(), shape)?;
    let mut corrected = Vec::with_capacity(records.len());
    let mut trace = Vec::with_capacity(records.len());
    for record in records {
        let pred = engine.predict(&record.base_pred)?;
        engine.observe(record, &pred)?;
        let day_report = evaluate(
            std::slice::from_ref(&pred),
            std::slice::from_ref(&record.actual),
        )?;
        trace.push(DayTrace {
            day: record.day_index,
            weights: engine.ensemble().weights().to_vec(),
            gamma: engine
                .smoothing_enabled
                .then(|| engine.smooth_params().gamma()),
            kernel: engine
                .smoothing_enabled
                .then(|| engine.smooth_params().kernel().to_vec()),
            mae: day_report.mae,
            rmse: day_report.rmse,
        });
        corrected.push(pred);
    }
    let actuals: Vec<DayTensor<S>> = records.iter().map(|r| r.actual.clone()).collect();
    let report = evaluate(&corrected, &actuals)?;
    Ok(RunOutput {
        corrected,
        report,
        trace,
    })
}
