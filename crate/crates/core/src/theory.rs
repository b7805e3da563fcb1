//! Monte Carlo verification of the engine's error identities.
//!
//! Each verifier runs a correction strategy over many independently seeded
//! synthetic worlds and compares the realized cumulative squared error with a
//! closed form evaluated on the same trace's realized bias and drift paths.
//! Using realized sums instead of their expectations removes one layer of
//! Monte Carlo variance from the comparison. Acceptance rules are
//! pre-registered constants in this module; verifiers never loosen them.
//!
//! Cumulative losses here are raw sums of squared entries (matching the
//! identities), while the engine's weight updates reduce by the mean; the
//! regret audit converts explicitly where it needs to.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_stream, EngineConfig, Strategy};
use crate::error::{Error, Result};
use crate::synth::{generate_stream, WorldConfig, WorldTrace};
use crate::tensor::{pairwise_sum, squared_error_with, LossReduction, MetricReport};

/// Acceptance multiplier for standard-error based rules.
pub const SE_MULTIPLIER: f64 = 3.0;
/// Relative tolerance for the EMA error identity, which is a large-horizon
/// approximation.
pub const EMA_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremId {
    /// Uncorrected-model error identity.
    T1,
    /// Previous-day corrector error identity.
    T2,
    /// Fixed-alpha EMA corrector error identity.
    T3,
    /// Ensemble regret bound.
    T4,
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TheoremId::T1 => "t1",
            TheoremId::T2 => "t2",
            TheoremId::T3 => "t3",
            TheoremId::T4 => "t4",
        };
        f.write_str(s)
    }
}

/// Outcome of one closed-form-versus-empirical comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremTarget {
    pub theorem_id: TheoremId,
    /// Smoothing factor for the EMA identity, absent otherwise.
    pub alpha: Option<f64>,
    /// Mean over trials of the closed form on realized trace quantities.
    pub closed_form: f64,
    /// Mean over trials of the realized cumulative squared error.
    pub empirical: f64,
    pub trials: usize,
    /// Standard error of the per-trial difference `empirical − closed_form`.
    pub standard_error: f64,
    /// Absolute tolerance the comparison was held to.
    pub tolerance: f64,
    pub pass: bool,
}

/// Sample mean via pairwise summation.
pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample standard deviation; zero for fewer than two samples.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&centered) / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    sample_std(xs) / (xs.len() as f64).sqrt()
}

fn cumulative_sq_error(out: &crate::engine::RunOutput, trace: &WorldTrace) -> f64 {
    let per_day: Vec<f64> = out
        .corrected
        .iter()
        .zip(&trace.records)
        .map(|(pred, rec)| {
            squared_error_with(pred, &rec.actual, LossReduction::Sum)
                .expect("shapes agree by construction")
        })
        .collect();
    pairwise_sum(&per_day)
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(Error::invalid(format!(
            "at least 2 trials required, got {trials}"
        )));
    }
    Ok(())
}

fn run_trials(
    config: &WorldConfig,
    trials: usize,
    strategy: Strategy,
    closed: impl Fn(&WorldTrace) -> f64 + Sync,
) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    let engine_config = EngineConfig::default();
    let results: Vec<Result<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trace = generate_stream(config, trial as u64)?;
            let graph = crate::smoothing::RegionGraph::isolated(config.shape.regions);
            let out = run_stream(&trace.records, &strategy, &engine_config, &graph)?;
            Ok((cumulative_sq_error(&out, &trace), closed(&trace)))
        })
        .collect();
    let mut empirical = Vec::with_capacity(trials);
    let mut closed_forms = Vec::with_capacity(trials);
    for r in results {
        let (e, c) = r?;
        empirical.push(e);
        closed_forms.push(c);
    }
    Ok((empirical, closed_forms))
}

fn target(
    theorem_id: TheoremId,
    alpha: Option<f64>,
    empirical: Vec<f64>,
    closed: Vec<f64>,
    tolerance_fn: impl Fn(f64, f64) -> f64,
) -> TheoremTarget {
    let diffs: Vec<f64> = empirical.iter().zip(&closed).map(|(e, c)| e - c).collect();
    let emp = mean(&empirical);
    let cf = mean(&closed);
    let se = standard_error(&diffs);
    let tolerance = tolerance_fn(cf, se);
    TheoremTarget {
        theorem_id,
        alpha,
        closed_form: cf,
        empirical: emp,
        trials: empirical.len(),
        standard_error: se,
        tolerance,
        pass: (emp - cf).abs() <= tolerance,
    }
}

/// Verifies the uncorrected-model identity: cumulative squared error equals
/// the realized `Σ_t ||g_t||²` plus `Σ_t Tr(Σ_t)`.
pub fn verify_t1(config: &WorldConfig, trials: usize) -> Result<TheoremTarget> {
    check_trials(trials)?;
    let ttr = config.horizon as f64 * config.noise_trace();
    let (empirical, closed) = run_trials(config, trials, Strategy::Ori, |trace| {
        trace.bias_sq_sum() + ttr
    })?;
    Ok(target(TheoremId::T1, None, empirical, closed, |_, se| {
        SE_MULTIPLIER * se
    }))
}

/// Closed form of the previous-day corrector identity on realized sums.
pub fn t2_closed_form(drift_sq_sum: f64, noise_trace_total: f64) -> f64 {
    drift_sq_sum + 2.0 * noise_trace_total
}

/// Analytic boundary slack of the previous-day identity: the closed form is a
/// large-horizon approximation whose exact counterpart differs by the day-one
/// bias term and one trailing noise trace.
pub fn t2_boundary_slack(config: &WorldConfig) -> f64 {
    let g1_sq: f64 = config.bias_init.values().iter().map(|v| v * v).sum();
    (g1_sq - config.noise_trace()).abs()
}

/// Verifies the previous-day corrector identity:
/// `Σ_t ||v_t||² + 2 Σ_t Tr(Σ_t)` within three standard errors plus the
/// analytic boundary slack.
pub fn verify_t2(config: &WorldConfig, trials: usize) -> Result<TheoremTarget> {
    check_trials(trials)?;
    let ttr = config.horizon as f64 * config.noise_trace();
    let slack = t2_boundary_slack(config);
    let (empirical, closed) = run_trials(config, trials, Strategy::PrevDay, |trace| {
        t2_closed_form(trace.drift_sq_sum(), ttr)
    })?;
    Ok(target(TheoremId::T2, None, empirical, closed, |_, se| {
        SE_MULTIPLIER * se + slack
    }))
}

/// Closed form of the fixed-alpha EMA identity on realized sums. At
/// `alpha = 0` this reduces to [`t2_closed_form`] exactly.
pub fn t3_closed_form(alpha: f64, drift_sq_sum: f64, noise_trace_total: f64) -> f64 {
    drift_sq_sum / (1.0 - alpha * alpha) + (2.0 + alpha) / (1.0 + alpha) * noise_trace_total
}

/// Verifies the fixed-alpha EMA identity at 5% relative tolerance.
/// `alpha = 1` is rejected: the closed form is singular there and the
/// strategy degenerates to the uncorrected model.
pub fn verify_t3(config: &WorldConfig, alpha: f64, trials: usize) -> Result<TheoremTarget> {
    check_trials(trials)?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha {alpha} outside [0, 1) — the identity is singular at 1"
        )));
    }
    let ttr = config.horizon as f64 * config.noise_trace();
    let (empirical, closed) = run_trials(config, trials, Strategy::FixedEma(alpha), |trace| {
        t3_closed_form(alpha, trace.drift_sq_sum(), ttr)
    })?;
    Ok(target(
        TheoremId::T3,
        Some(alpha),
        empirical,
        closed,
        |cf, _| EMA_REL_TOL * cf.abs(),
    ))
}

/// One row of the alpha sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcurveRow {
    pub alpha: f64,
    /// Pooled over all trials' entries.
    pub report: MetricReport,
    /// Standard error of the per-trial MAE.
    pub mae_se: f64,
}

/// Alpha sweep over paired trials: every grid point sees the same worlds.
#[derive(Debug, Clone, PartialEq)]
pub struct UcurveResult {
    pub rows: Vec<UcurveRow>,
    /// `per_trial_mae[grid_index][trial]`.
    pub per_trial_mae: Vec<Vec<f64>>,
}

impl UcurveResult {
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, row) in self.rows.iter().enumerate() {
            if row.report.mae < self.rows[best].report.mae {
                best = i;
            }
        }
        best
    }

    /// Mean and standard error of the paired per-trial difference
    /// `MAE[i] − MAE[j]`.
    pub fn paired_margin(&self, i: usize, j: usize) -> (f64, f64) {
        let diffs: Vec<f64> = self.per_trial_mae[i]
            .iter()
            .zip(&self.per_trial_mae[j])
            .map(|(a, b)| a - b)
            .collect();
        (mean(&diffs), standard_error(&diffs))
    }
}

/// Runs the fixed-alpha corrector for every grid point over paired trials.
/// A grid value of exactly 1 runs the uncorrected model.
pub fn alpha_ucurve(config: &WorldConfig, grid: &[f64], trials: usize) -> Result<UcurveResult> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("alpha grid"));
    }
    for &a in grid {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(format!("grid alpha {a} outside [0, 1]")));
        }
    }
    check_trials(trials)?;
    config.validate()?;
    let engine_config = EngineConfig::default();
    let graph = crate::smoothing::RegionGraph::isolated(config.shape.regions);

    let mut rows = Vec::with_capacity(grid.len());
    let mut per_trial_mae = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let strategy = if alpha == 1.0 {
            Strategy::Ori
        } else {
            Strategy::FixedEma(alpha)
        };
        let reports: Vec<Result<MetricReport>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let trace = generate_stream(config, trial as u64)?;
                let out = run_stream(&trace.records, &strategy, &engine_config, &graph)?;
                Ok(out.report)
            })
            .collect();
        let reports: Vec<MetricReport> = reports.into_iter().collect::<Result<_>>()?;
        let maes: Vec<f64> = reports.iter().map(|r| r.mae).collect();
        let pooled = reports
            .iter()
            .skip(1)
            .try_fold(reports[0], |acc, r| acc.merge(r))?;
        rows.push(UcurveRow {
            alpha,
            report: pooled,
            mae_se: standard_error(&maes),
        });
        per_trial_mae.push(maes);
    }
    Ok(UcurveResult {
        rows,
        per_trial_mae,
    })
}

/// Outcome of one regret audit: did the ensemble's cumulative loss stay
/// within the theoretical bound of the best expert's?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretAudit {
    /// `Σ_t loss(combined prediction_t, actual_t)`.
    pub mixture_cum_loss: f64,
    /// `min_i Σ_t loss(expert i's prediction_t, actual_t)`.
    pub best_expert_cum_loss: f64,
    /// `sqrt(T · B² · ln(k) / 2)`.
    pub bound: f64,
    /// Realized maximum per-day loss across experts.
    pub b_max: f64,
    pub satisfied: bool,
}

/// Audits the ensemble regret bound over independently seeded worlds. The
/// ensemble runs without smoothing, matching the setting of the bound, and
/// per-day losses use the same mean reduction as the weight update.
pub fn regret_audit(
    config: &WorldConfig,
    alphas: &[f64],
    eta: f64,
    trials: usize,
) -> Result<Vec<RegretAudit>> {
    if alphas.is_empty() {
        return Err(Error::EmptyInput("regret audit alphas"));
    }
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::invalid(format!("eta {eta} must be positive")));
    }
    config.validate()?;
    let engine_config = EngineConfig {
        alphas: alphas.to_vec(),
        eta,
        ..EngineConfig::default()
    };
    let reduction = engine_config.loss_reduction;
    let k = alphas.len();

    let audits: Vec<Result<RegretAudit>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trace = generate_stream(config, trial as u64)?;
            let graph = crate::smoothing::RegionGraph::isolated(config.shape.regions);
            let mut engine = crate::engine::Engine::new(
                &Strategy::NoSmooth,
                &engine_config,
                graph,
                config.shape,
            )?;
            let horizon = trace.records.len();
            let mut mixture_losses = Vec::with_capacity(horizon);
            let mut expert_losses = vec![Vec::with_capacity(horizon); k];
            let mut b_max = 0.0f64;
            for record in &trace.records {
                let expert_preds = engine.ensemble().expert_predictions(&record.base_pred)?;
                let combined = engine.predict(&record.base_pred)?;
                mixture_losses.push(squared_error_with(&combined, &record.actual, reduction)?);
                for (i, pred) in expert_preds.iter().enumerate() {
                    let l = squared_error_with(pred, &record.actual, reduction)?;
                    b_max = b_max.max(l);
                    expert_losses[i].push(l);
                }
                engine.observe(record, &combined)?;
            }
            let mixture_cum_loss = pairwise_sum(&mixture_losses);
            let best_expert_cum_loss = expert_losses
                .iter()
                .map(|l| pairwise_sum(l))
                .fold(f64::INFINITY, f64::min);
            let bound = (0.5 * horizon as f64 * b_max * b_max * (k as f64).ln()).sqrt();
            Ok(RegretAudit {
                mixture_cum_loss,
                best_expert_cum_loss,
                bound,
                b_max,
                satisfied: mixture_cum_loss - best_expert_cum_loss <= bound,
            })
        })
        .collect();
    audits.into_iter().collect()
}
