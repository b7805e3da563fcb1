//! EMA correction experts and their exponentially weighted combination.
//!
//! Each expert keeps an additive correction tensor `delta` and a smoothing
//! factor `alpha`; after every day, `delta <- alpha * delta + (1 - alpha) *
//! smoothed_error`. An expert with `alpha = 1` never moves (it is the
//! uncorrected base model), `alpha = 0` replays yesterday's error verbatim.
//! The ensemble combines expert outputs with weights on the probability
//! simplex and updates them multiplicatively from per-expert squared-error
//! losses: `w' ∝ w * exp(-eta * loss)`, renormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{squared_error_with, DayTensor, LossReduction, TensorShape};

/// One EMA corrector: its smoothing factor and current correction tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertState<S = f64> {
    alpha: S,
    delta: DayTensor<S>,
}

impl<S: Scalar> ExpertState<S> {
    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn delta(&self) -> &DayTensor<S> {
        &self.delta
    }
}

/// The expert pool, their simplex weights and the weight-update rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState<S = f64> {
    experts: Vec<ExpertState<S>>,
    weights: Vec<S>,
    eta: S,
}

/// Weight sums are accepted as a simplex when within this distance of 1.
const SIMPLEX_TOL: f64 = 1e-12;

impl<S: Scalar> EnsembleState<S> {
    /// Builds `k` experts with zero corrections and uniform weights `1/k`.
    pub fn new(alphas: &[S], eta: S, shape: TensorShape) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::EmptyInput("ensemble alphas"));
        }
        for &a in alphas {
            if !(S::zero()..=S::one()).contains(&a) {
                return Err(Error::invalid(format!("alpha {a} outside [0, 1]")));
            }
        }
        if !eta.is_finite() || eta <= S::zero() {
            return Err(Error::invalid(format!("eta {eta} must be positive")));
        }
        let k = alphas.len();
        let uniform = S::one() / S::from_usize(k).expect("k fits in scalar");
        Ok(Self {
            experts: alphas
                .iter()
                .map(|&alpha| ExpertState {
                    alpha,
                    delta: DayTensor::zeros(shape),
                })
                .collect(),
            weights: vec![uniform; k],
            eta,
        })
    }

    /// Rebuilds an ensemble from parts, revalidating every invariant.
    /// Used when restoring snapshots and when evaluating parameter gradients
    /// against the previous day's corrections.
    pub fn from_parts(experts: Vec<(S, DayTensor<S>)>, weights: Vec<S>, eta: S) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::EmptyInput("ensemble experts"));
        }
        if experts.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} experts but {} weights",
                experts.len(),
                weights.len()
            )));
        }
        let shape = experts[0].1.shape();
        for (alpha, delta) in &experts {
            if !(S::zero()..=S::one()).contains(alpha) {
                return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
            }
            if delta.shape() != shape {
                return Err(Error::ShapeMismatch {
                    left: shape,
                    right: delta.shape(),
                });
            }
        }
        if !eta.is_finite() || eta <= S::zero() {
            return Err(Error::invalid(format!("eta {eta} must be positive")));
        }
        let mut sum = S::zero();
        for &w in &weights {
            if !w.is_finite() || w < S::zero() {
                return Err(Error::invalid(format!("weight {w} is negative")));
            }
            sum = sum + w;
        }
        if (sum - S::one()).abs() > S::from_config(SIMPLEX_TOL) {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self {
            experts: experts
                .into_iter()
                .map(|(alpha, delta)| ExpertState { alpha, delta })
                .collect(),
            weights,
            eta,
        })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn experts(&self) -> &[ExpertState<S>] {
        &self.experts
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn eta(&self) -> S {
        self.eta
    }

    pub fn shape(&self) -> TensorShape {
        self.experts[0].delta.shape()
    }

    /// Per-expert corrected predictions `base_pred + delta_i`, in expert order.
    pub fn expert_predictions(&self, base_pred: &DayTensor<S>) -> Result<Vec<DayTensor<S>>> {
        self.experts
            .iter()
            .map(|e| base_pred.add(&e.delta))
            .collect()
    }

    /// Convex combination of the given expert predictions under the current
    /// weights.
    pub fn combine(&self, expert_preds: &[DayTensor<S>]) -> Result<DayTensor<S>> {
        if expert_preds.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} expert predictions for {} experts",
                expert_preds.len(),
                self.len()
            )));
        }
        let shape = expert_preds[0].shape();
        let mut acc = vec![S::zero(); shape.len()];
        for (w, pred) in self.weights.iter().zip(expert_preds) {
            if pred.shape() != shape {
                return Err(Error::ShapeMismatch {
                    left: shape,
                    right: pred.shape(),
                });
            }
            for (a, &v) in acc.iter_mut().zip(pred.values()) {
                *a = *a + *w * v;
            }
        }
        DayTensor::new(shape, acc)
    }

    /// The combined corrected prediction, computed as
    /// `base_pred + Σ_i w_i * delta_i`.
    ///
    /// On the weight simplex this equals the convex combination of the expert
    /// predictions, but it is exact when every correction is zero: the output
    /// is then `base_pred` bit for bit, for any expert count.
    pub fn combine_with_base(&self, base_pred: &DayTensor<S>) -> Result<DayTensor<S>> {
        let shape = base_pred.shape();
        let mut acc = vec![S::zero(); shape.len()];
        for (w, e) in self.weights.iter().zip(&self.experts) {
            if e.delta.shape() != shape {
                return Err(Error::ShapeMismatch {
                    left: shape,
                    right: e.delta.shape(),
                });
            }
            for (a, &v) in acc.iter_mut().zip(e.delta.values()) {
                *a = *a + *w * v;
            }
        }
        let values: Vec<S> = base_pred
            .values()
            .iter()
            .zip(&acc)
            .map(|(&b, &d)| b + d)
            .collect();
        DayTensor::new(shape, values)
    }

    /// Exponentiated weight update from per-expert losses against the actual.
    pub fn update_weights(
        &self,
        expert_preds: &[DayTensor<S>],
        actual: &DayTensor<S>,
        reduction: LossReduction,
    ) -> Result<Self> {
        if expert_preds.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} expert predictions for {} experts",
                expert_preds.len(),
                self.len()
            )));
        }
        let losses: Vec<S> = expert_preds
            .iter()
            .map(|p| squared_error_with(p, actual, reduction))
            .collect::<Result<_>>()?;
        self.update_weights_from_losses(&losses)
    }

    /// Weight update from precomputed losses.
    ///
    /// Stabilized by shifting every loss by the minimum over positively
    /// weighted experts before exponentiation; the update is invariant to a
    /// common loss shift, and the shifted minimum guarantees the denominator
    /// cannot underflow to zero. Zero-weight experts stay at zero without
    /// evaluating an exponential.
    pub fn update_weights_from_losses(&self, losses: &[S]) -> Result<Self> {
        if losses.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} losses for {} experts",
                losses.len(),
                self.len()
            )));
        }
        for (i, l) in losses.iter().enumerate() {
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { expert: i });
            }
        }
        let mut min_active = None::<S>;
        for (&w, &l) in self.weights.iter().zip(losses) {
            if w > S::zero() {
                min_active = Some(match min_active {
                    Some(m) => m.min(l),
                    None => l,
                });
            }
        }
        let shift = min_active.expect("simplex weights cannot be all zero");
        let numerators: Vec<S> = self
            .weights
            .iter()
            .zip(losses)
            .map(|(&w, &l)| {
                if w > S::zero() {
                    w * (-self.eta * (l - shift)).exp()
                } else {
                    S::zero()
                }
            })
            .collect();
        let denom: S = numerators.iter().fold(S::zero(), |a, &b| a + b);
        let weights: Vec<S> = numerators.into_iter().map(|n| n / denom).collect();
        Ok(Self {
            experts: self.experts.clone(),
            weights,
            eta: self.eta,
        })
    }

    /// Advances every expert's correction by its own smoothing factor:
    /// `delta_i <- alpha_i * delta_i + (1 - alpha_i) * smoothed_err`.
    /// Weights are untouched.
    pub fn update_deltas(&self, smoothed_err: &DayTensor<S>) -> Result<Self> {
        let shape = self.shape();
        if smoothed_err.shape() != shape {
            return Err(Error::ShapeMismatch {
                left: shape,
                right: smoothed_err.shape(),
            });
        }
        let experts = self
            .experts
            .iter()
            .map(|e| {
                let one_minus = S::one() - e.alpha;
                let values: Vec<S> = e
                    .delta
                    .values()
                    .iter()
                    .zip(smoothed_err.values())
                    .map(|(&d, &s)| e.alpha * d + one_minus * s)
                    .collect();
                Ok(ExpertState {
                    alpha: e.alpha,
                    delta: DayTensor::new(shape, values)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            experts,
            weights: self.weights.clone(),
            eta: self.eta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::squared_error;

    fn shape1() -> TensorShape {
        TensorShape::new(1, 1, 1).unwrap()
    }

    fn scalar(v: f64) -> DayTensor {
        DayTensor::new(shape1(), vec![v]).unwrap()
    }

    #[test]
    fn init_uniform_weights() {
        let ens = EnsembleState::new(&[0.7, 0.8, 0.9, 1.0], 10.0, shape1()).unwrap();
        assert_eq!(ens.len(), 4);
        assert_eq!(ens.weights(), &[0.25; 4]);
        for e in ens.experts() {
            assert_eq!(e.delta().values(), &[0.0]);
        }
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(EnsembleState::<f64>::new(&[], 10.0, shape1()).is_err());
        assert!(EnsembleState::new(&[0.5, 1.5], 10.0, shape1()).is_err());
        assert!(EnsembleState::new(&[-0.1], 10.0, shape1()).is_err());
        assert!(EnsembleState::new(&[0.5], 0.0, shape1()).is_err());
        assert!(EnsembleState::new(&[0.5], -1.0, shape1()).is_err());
        assert!(EnsembleState::new(&[0.5], f64::NAN, shape1()).is_err());
    }

    #[test]
    fn degenerate_alpha_one_ensemble_stays_at_base() {
        let ens = EnsembleState::new(&[1.0], 10.0, shape1()).unwrap();
        let base = scalar(5.0);
        let err = scalar(100.0);
        let ens = ens.update_deltas(&err).unwrap();
        assert_eq!(ens.combine_with_base(&base).unwrap().values(), &[5.0]);
    }

    #[test]
    fn expert_predictions_order_and_values() {
        let ens = EnsembleState::new(&[0.0, 0.5], 10.0, shape1()).unwrap();
        let base = scalar(5.0);
        let preds = ens.expert_predictions(&base).unwrap();
        assert_eq!(preds[0].values(), &[5.0]);
        assert_eq!(preds[1].values(), &[5.0]);

        let ens = EnsembleState::from_parts(
            vec![(0.0, scalar(1.0)), (0.5, scalar(-1.0))],
            vec![0.5, 0.5],
            10.0,
        )
        .unwrap();
        let preds = ens.expert_predictions(&base).unwrap();
        assert_eq!(preds[0].values(), &[6.0]);
        assert_eq!(preds[1].values(), &[4.0]);

        let single = EnsembleState::from_parts(vec![(0.3, scalar(2.0))], vec![1.0], 10.0).unwrap();
        let preds = single.expert_predictions(&scalar(3.0)).unwrap();
        assert_eq!(preds[0].values(), &[5.0]);
    }

    #[test]
    fn combine_cases() {
        let ens = EnsembleState::new(&[0.0, 1.0], 10.0, shape1()).unwrap();
        let out = ens.combine(&[scalar(2.0), scalar(4.0)]).unwrap();
        assert_eq!(out.values(), &[3.0]);

        let vertex = EnsembleState::from_parts(
            vec![(0.0, scalar(0.0)), (1.0, scalar(0.0))],
            vec![1.0, 0.0],
            10.0,
        )
        .unwrap();
        let out = vertex.combine(&[scalar(7.0), scalar(9.0)]).unwrap();
        assert_eq!(out.values(), &[7.0]);

        let weighted = EnsembleState::from_parts(
            vec![(0.0, scalar(0.0)), (1.0, scalar(0.0))],
            vec![0.25, 0.75],
            10.0,
        )
        .unwrap();
        let out = weighted.combine(&[scalar(0.0), scalar(4.0)]).unwrap();
        assert_eq!(out.values(), &[3.0]);

        assert!(ens.combine(&[scalar(1.0)]).is_err());
    }

    #[test]
    fn vertex_weight_on_frozen_expert_reproduces_base_exactly() {
        // Other experts carry nonzero corrections, but all weight sits on the
        // alpha = 1 expert whose correction never left zero.
        let ens = EnsembleState::from_parts(
            vec![(0.0, scalar(3.25)), (0.5, scalar(-7.5)), (1.0, scalar(0.0))],
            vec![0.0, 0.0, 1.0],
            10.0,
        )
        .unwrap();
        let base = scalar(123.456);
        let out = ens.combine_with_base(&base).unwrap();
        assert_eq!(out.values(), base.values());
        let preds = ens.expert_predictions(&base).unwrap();
        let combined = ens.combine(&preds).unwrap();
        assert_eq!(combined.values(), base.values());
    }

    #[test]
    fn update_weights_symmetry_keeps_uniform() {
        let ens = EnsembleState::new(&[0.7, 0.8, 0.9, 1.0], 10.0, shape1()).unwrap();
        let next = ens
            .update_weights_from_losses(&[0.3, 0.3, 0.3, 0.3])
            .unwrap();
        assert_eq!(next.weights(), &[0.25; 4]);
    }

    #[test]
    fn update_weights_hand_value() {
        let ens = EnsembleState::new(&[0.0, 1.0], 10.0, shape1()).unwrap();
        let next = ens.update_weights_from_losses(&[0.0, 0.1]).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((next.weights()[0] - expected).abs() < 1e-15);
        assert!((next.weights()[1] - (1.0 - expected)).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_is_absorbing() {
        let ens = EnsembleState::from_parts(
            vec![(0.0, scalar(0.0)), (1.0, scalar(0.0))],
            vec![1.0, 0.0],
            10.0,
        )
        .unwrap();
        let next = ens.update_weights_from_losses(&[5.0, 0.0]).unwrap();
        assert_eq!(next.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn stabilization_survives_huge_loss_spreads() {
        let ens = EnsembleState::<f64>::new(&[0.0, 0.5, 1.0], 10.0, shape1()).unwrap();
        let next = ens.update_weights_from_losses(&[1e6, 0.0, 2e6]).unwrap();
        assert!((next.weights()[1] - 1.0).abs() < 1e-12);
        assert!(next.weights().iter().all(|w| w.is_finite()));

        // A zero-weight expert with a far smaller loss must not poison the
        // update with 0 * exp(+huge).
        let ens = EnsembleState::from_parts(
            vec![(0.0, scalar(0.0)), (1.0, scalar(0.0))],
            vec![0.0, 1.0],
            10.0,
        )
        .unwrap();
        let next = ens.update_weights_from_losses(&[0.0, 1e7]).unwrap();
        assert_eq!(next.weights(), &[0.0, 1.0]);
    }

    #[test]
    fn update_weights_rejects_non_finite_loss_with_index() {
        let ens = EnsembleState::new(&[0.0, 1.0], 10.0, shape1()).unwrap();
        match ens
            .update_weights_from_losses(&[0.0, f64::NAN])
            .unwrap_err()
        {
            Error::NonFiniteLoss { expert } => assert_eq!(expert, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn update_weights_from_tensor_losses() {
        let ens = EnsembleState::new(&[0.0, 1.0], 10.0, shape1()).unwrap();
        let preds = vec![scalar(1.0), scalar(2.0)];
        let actual = scalar(1.0);
        let next = ens
            .update_weights(&preds, &actual, LossReduction::Mean)
            .unwrap();
        // Losses are {0, 1}; the first expert gains weight.
        assert!(next.weights()[0] > next.weights()[1]);
        let l0 = squared_error(&preds[0], &actual).unwrap();
        assert_eq!(l0, 0.0);
    }

    #[test]
    fn update_deltas_edge_alphas_and_hand_value() {
        let ens = EnsembleState::from_parts(
            vec![(1.0, scalar(3.0)), (0.0, scalar(3.0)), (0.9, scalar(0.0))],
            vec![0.25, 0.25, 0.5],
            10.0,
        )
        .unwrap();
        let next = ens.update_deltas(&scalar(10.0)).unwrap();
        assert_eq!(next.experts()[0].delta().values(), &[3.0]);
        assert_eq!(next.experts()[1].delta().values(), &[10.0]);
        assert!((next.experts()[2].delta().values()[0] - 1.0).abs() < 1e-15);
        assert_eq!(next.weights(), ens.weights());

        assert!(ens
            .update_deltas(&DayTensor::zeros(TensorShape::new(2, 1, 1).unwrap()))
            .is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(1e-6f64..1.0, k).prop_map(move |raw| {
                let sum: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
                // Pin the exact simplex by recomputing the last coordinate.
                let head: f64 = w[..k - 1].iter().sum();
                w[k - 1] = 1.0 - head;
                w
            })
        }

        fn ensemble_and_losses() -> impl Strategy<Value = (EnsembleState, Vec<f64>)> {
            (2usize..6).prop_flat_map(|k| {
                (
                    proptest::collection::vec(0.0f64..=1.0, k),
                    simplex(k),
                    proptest::collection::vec(0.0f64..10.0, k),
                    0.1f64..20.0,
                )
                    .prop_map(move |(alphas, weights, losses, eta)| {
                        let shape = TensorShape::new(1, 1, 1).unwrap();
                        let experts = alphas
                            .iter()
                            .map(|&a| (a, DayTensor::zeros(shape)))
                            .collect();
                        (
                            EnsembleState::from_parts(experts, weights, eta).unwrap(),
                            losses,
                        )
                    })
            })
        }

        proptest! {
            #[test]
            fn weights_stay_on_simplex((ens, losses) in ensemble_and_losses()) {
                let next = ens.update_weights_from_losses(&losses).unwrap();
                let sum: f64 = next.weights().iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                prop_assert!(next.weights().iter().all(|&w| w >= 0.0));
            }

            #[test]
            fn loss_shift_leaves_weights_nearly_identical(
                (ens, losses) in ensemble_and_losses(),
                c in -100.0f64..100.0,
            ) {
                let a = ens.update_weights_from_losses(&losses).unwrap();
                let shifted: Vec<f64> = losses.iter().map(|l| l + c).collect();
                let b = ens.update_weights_from_losses(&shifted).unwrap();
                for (&x, &y) in a.weights().iter().zip(b.weights()) {
                    prop_assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
                }
            }

            #[test]
            fn exactly_representable_shift_is_bit_identical(
                (ens, _) in ensemble_and_losses(),
                raw in proptest::collection::vec(0u16..512, 2..6),
                c in -64i32..64,
            ) {
                // Dyadic losses plus an integer shift keep every subtraction
                // exact, so the stabilized update must agree bit for bit.
                let k = ens.len();
                let losses: Vec<f64> = (0..k).map(|i| f64::from(raw[i % raw.len()]) / 256.0).collect();
                let shifted: Vec<f64> = losses.iter().map(|l| l + f64::from(c)).collect();
                let a = ens.update_weights_from_losses(&losses).unwrap();
                let b = ens.update_weights_from_losses(&shifted).unwrap();
                prop_assert_eq!(a.weights(), b.weights());
            }

            #[test]
            fn lower_loss_gains_relative_weight((ens, mut losses) in ensemble_and_losses()) {
                losses[0] = 0.1;
                losses[1] = 0.9;
                let next = ens.update_weights_from_losses(&losses).unwrap();
                let before = ens.weights()[0] / ens.weights()[1];
                let after = next.weights()[0] / next.weights()[1];
                prop_assert!(after > before);
            }

            #[test]
            fn delta_recursion_matches_unrolled_form(
                alpha in 0.0f64..=1.0,
                errs in proptest::collection::vec(-100.0f64..100.0, 1..12),
            ) {
                let shape = TensorShape::new(1, 1, 1).unwrap();
                let mut ens = EnsembleState::new(&[alpha], 10.0, shape).unwrap();
                for &e in &errs {
                    ens = ens
                        .update_deltas(&DayTensor::new(shape, vec![e]).unwrap())
                        .unwrap();
                }
                let t = errs.len();
                let unrolled: f64 = (1.0 - alpha)
                    * errs
                        .iter()
                        .enumerate()
                        .map(|(s, e)| alpha.powi((t - 1 - s) as i32) * e)
                        .sum::<f64>();
                let got = ens.experts()[0].delta().values()[0];
                prop_assert!(
                    (got - unrolled).abs() <= 1e-10 * unrolled.abs().max(1.0),
                    "got {got}, unrolled {unrolled}"
                );
            }
        }
    }
}
