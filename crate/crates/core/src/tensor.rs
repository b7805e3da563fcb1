//! Dense day tensors over `(hour, region, channel)` and the MAE/RMSE metrics.
//!
//! A [`DayTensor`] holds one day of values — predictions, actuals,
//! prediction errors or corrections — in row-major `(hour, region, channel)`
//! order. That single canonical layout is shared by every module and by the
//! file formats, so data never has to be transposed. All public operations
//! reject non-finite results; a tensor you can obtain from this crate contains
//! no NaN or infinity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dimensions of one day of data: hours per day, region count, channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub hours: usize,
    pub regions: usize,
    pub channels: usize,
}

impl TensorShape {
    pub fn new(hours: usize, regions: usize, channels: usize) -> Result<Self> {
        if hours == 0 || regions == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "shape dimensions must be >= 1, got ({hours}, {regions}, {channels})"
            )));
        }
        Ok(Self {
            hours,
            regions,
            channels,
        })
    }

    /// Total number of scalar entries in one day.
    pub fn len(&self) -> usize {
        self.hours * self.regions * self.channels
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of `(hour, region, channel)` in row-major order.
    #[inline]
    pub fn index(&self, hour: usize, region: usize, channel: usize) -> usize {
        debug_assert!(hour < self.hours && region < self.regions && channel < self.channels);
        (hour * self.regions + region) * self.channels + channel
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.hours, self.regions, self.channels)
    }
}

/// One day of values over `(hour, region, channel)`, row-major, always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTensor<S = f64> {
    shape: TensorShape,
    values: Vec<S>,
}

impl<S: Scalar> DayTensor<S> {
    /// Builds a tensor from row-major values, validating length and finiteness.
    pub fn new(shape: TensorShape, values: Vec<S>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::invalid(format!(
                "value count {} does not match shape {} with {} entries",
                values.len(),
                shape,
                shape.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!(
                "tensor value at flat index {pos}"
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Self {
            shape,
            values: vec![S::zero(); shape.len()],
        }
    }

    pub fn constant(shape: TensorShape, value: S) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn get(&self, hour: usize, region: usize, channel: usize) -> S {
        self.values[self.shape.index(hour, region, channel)]
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        self.zip_map(other, |a, b| a + b, "add")
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        self.zip_map(other, |a, b| a - b, "sub")
    }

    /// Multiplies every entry by a finite scalar.
    pub fn scale(&self, factor: S) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::non_finite("scale factor"));
        }
        let values: Vec<S> = self.values.iter().map(|&v| v * factor).collect();
        Self::new(self.shape, values).map_err(|_| Error::non_finite("scale result"))
    }

    fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S, op: &str) -> Result<Self> {
        let values: Vec<S> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.shape, values).map_err(|_| Error::non_finite(format!("{op} result")))
    }
}

/// How a squared-norm loss is reduced over tensor entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// Mean of squared entries. The default: it keeps exponentiated weight
    /// updates informative at learning rates around 10, independent of how
    /// many entries a day holds.
    #[default]
    Mean,
    /// Raw sum of squared entries.
    Sum,
}

/// Squared-error loss between two equal-shape tensors, mean-reduced.
pub fn squared_error<S: Scalar>(a: &DayTensor<S>, b: &DayTensor<S>) -> Result<S> {
    squared_error_with(a, b, LossReduction::Mean)
}

/// Squared-error loss with an explicit reduction.
pub fn squared_error_with<S: Scalar>(
    a: &DayTensor<S>,
    b: &DayTensor<S>,
    reduction: LossReduction,
) -> Result<S> {
    a.check_shape(b)?;
    let n = a.values().len();
    let sum = pairwise_sum_by(n, &|i| {
        let d = a.values()[i] - b.values()[i];
        d * d
    });
    Ok(match reduction {
        LossReduction::Mean => sum / S::from_usize(n).expect("entry count fits in scalar"),
        LossReduction::Sum => sum,
    })
}

/// MAE and RMSE aggregated over every scalar entry of a stream of days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<S = f64> {
    pub mae: S,
    pub rmse: S,
    /// Number of scalar entries aggregated.
    pub count: u64,
}

impl<S: Scalar> MetricReport<S> {
    fn from_sums(abs_sum: S, sq_sum: S, count: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptyInput("metric aggregation"));
        }
        let n = S::from_u64(count).expect("count fits in scalar");
        let mae = abs_sum / n;
        let rmse = (sq_sum / n).sqrt();
        if !mae.is_finite() || !rmse.is_finite() {
            return Err(Error::non_finite("metric report"));
        }
        Ok(Self { mae, rmse, count })
    }

    /// Pools two reports as if their underlying entries had been evaluated
    /// together, weighting by entry counts.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        let (na, nb) = (
            S::from_u64(self.count).expect("count fits in scalar"),
            S::from_u64(other.count).expect("count fits in scalar"),
        );
        Self::from_sums(
            self.mae * na + other.mae * nb,
            self.rmse * self.rmse * na + other.rmse * other.rmse * nb,
            self.count + other.count,
        )
    }
}

/// Evaluates a stream of predictions against actuals.
///
/// Both aggregates run over every scalar entry of every day: `mae` is the mean
/// absolute difference, `rmse` the root of the mean squared difference.
pub fn evaluate<S: Scalar>(
    predictions: &[DayTensor<S>],
    actuals: &[DayTensor<S>],
) -> Result<MetricReport<S>> {
    if predictions.is_empty() || actuals.is_empty() {
        return Err(Error::EmptyInput("evaluate"));
    }
    if predictions.len() != actuals.len() {
        return Err(Error::invalid(format!(
            "evaluate got {} predictions but {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    let mut abs_sums = Vec::with_capacity(predictions.len());
    let mut sq_sums = Vec::with_capacity(predictions.len());
    let mut count = 0u64;
    for (day, (p, a)) in predictions.iter().zip(actuals).enumerate() {
        if p.shape() != a.shape() {
            return Err(Error::ShapeMismatchAtDay {
                day,
                left: p.shape(),
                right: a.shape(),
            });
        }
        let n = p.values().len();
        abs_sums.push(pairwise_sum_by(n, &|i| {
            (p.values()[i] - a.values()[i]).abs()
        }));
        sq_sums.push(pairwise_sum_by(n, &|i| {
            let d = p.values()[i] - a.values()[i];
            d * d
        }));
        count += n as u64;
    }
    MetricReport::from_sums(pairwise_sum(&abs_sums), pairwise_sum(&sq_sums), count)
}

/// Pairwise (cascade) summation: deterministic order, error growth O(log n).
pub fn pairwise_sum<S: Scalar>(values: &[S]) -> S {
    pairwise_sum_by(values.len(), &|i| values[i])
}

/// Pairwise summation over `f(0), …, f(len − 1)` without materializing them.
pub fn pairwise_sum_by<S: Scalar>(len: usize, f: &impl Fn(usize) -> S) -> S {
    fn go<S: Scalar>(start: usize, len: usize, f: &impl Fn(usize) -> S) -> S {
        if len <= 32 {
            let mut acc = S::zero();
            for i in start..start + len {
                acc = acc + f(i);
            }
            acc
        } else {
            let half = len / 2;
            go(start, half, f) + go(start + half, len - half, f)
        }
    }
    go(0, len, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(h: usize, r: usize, c: usize) -> TensorShape {
        TensorShape::new(h, r, c).unwrap()
    }

    fn t(shape: TensorShape, v: &[f64]) -> DayTensor {
        DayTensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn shape_rejects_zero_dims() {
        assert!(TensorShape::new(0, 1, 1).is_err());
        assert!(TensorShape::new(24, 0, 2).is_err());
        let s = shape(24, 5, 2);
        assert_eq!(s.len(), 240);
    }

    #[test]
    fn new_rejects_wrong_length_and_non_finite() {
        let s = shape(2, 1, 1);
        assert!(DayTensor::new(s, vec![1.0]).is_err());
        assert!(DayTensor::new(s, vec![1.0, f64::NAN]).is_err());
        assert!(DayTensor::new(s, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn add_identity_and_doubling() {
        let s = shape(2, 1, 1);
        let zero = DayTensor::zeros(s);
        let b = t(s, &[3.0, -1.0]);
        assert_eq!(zero.add(&b).unwrap().values(), &[3.0, -1.0]);

        let a = t(s, &[1.0, 2.0]);
        assert_eq!(a.add(&a).unwrap().values(), &[2.0, 4.0]);
    }

    #[test]
    fn add_rejects_shape_mismatch_reporting_both() {
        let a = DayTensor::<f64>::zeros(shape(24, 5, 2));
        let b = DayTensor::zeros(shape(24, 6, 2));
        let err = a.add(&b).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("(24, 5, 2)") && msg.contains("(24, 6, 2)"),
            "{msg}"
        );
    }

    #[test]
    fn sub_cases() {
        let s = shape(1, 1, 1);
        let y = t(s, &[10.0]);
        let pred = t(s, &[7.0]);
        assert_eq!(y.sub(&pred).unwrap().values(), &[3.0]);
        assert_eq!(y.sub(&y).unwrap().values(), &[0.0]);
        assert!(y.sub(&DayTensor::zeros(shape(2, 1, 1))).is_err());
    }

    #[test]
    fn scale_cases() {
        let s = shape(2, 1, 1);
        let a = t(s, &[2.0, -4.0]);
        assert_eq!(a.scale(1.0).unwrap().values(), a.values());
        assert_eq!(a.scale(0.0).unwrap().values(), &[0.0, 0.0]);
        assert_eq!(a.scale(0.5).unwrap().values(), &[1.0, -2.0]);
        assert!(a.scale(f64::NAN).is_err());
        assert!(a.scale(f64::INFINITY).is_err());
    }

    #[test]
    fn evaluate_exact_and_hand_values() {
        let s = shape(2, 1, 1);
        let p = t(s, &[1.0, 2.0]);
        let m = evaluate(std::slice::from_ref(&p), std::slice::from_ref(&p)).unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.count, 2);

        // Constant |error| of 3: MAE and RMSE coincide.
        let pred = t(s, &[0.0, 0.0]);
        let act = t(s, &[3.0, -3.0]);
        let m = evaluate(&[pred], &[act]).unwrap();
        assert_eq!(m.mae, 3.0);
        assert_eq!(m.rmse, 3.0);

        let pred = t(s, &[0.0, 0.0]);
        let act = t(s, &[1.0, 3.0]);
        let m = evaluate(&[pred], &[act]).unwrap();
        assert_eq!(m.mae, 2.0);
        assert!((m.rmse - 5.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn evaluate_rejects_empty_and_names_mismatched_day() {
        let empty: Vec<DayTensor> = vec![];
        assert!(matches!(
            evaluate(&empty, &empty).unwrap_err(),
            Error::EmptyInput(_)
        ));

        let a = DayTensor::<f64>::zeros(shape(2, 1, 1));
        let b = DayTensor::zeros(shape(3, 1, 1));
        let err = evaluate(&[a.clone(), a.clone()], &[a.clone(), b]).unwrap_err();
        match err {
            Error::ShapeMismatchAtDay { day, .. } => assert_eq!(day, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn squared_error_hand_values() {
        let s = shape(2, 1, 1);
        let a = t(s, &[1.0, 1.0]);
        let b = t(s, &[0.0, 0.0]);
        assert_eq!(squared_error(&a, &a).unwrap(), 0.0);
        assert_eq!(squared_error(&a, &b).unwrap(), 1.0);
        let c = t(s, &[2.0, 0.0]);
        assert_eq!(squared_error(&c, &b).unwrap(), 2.0);
        assert_eq!(squared_error_with(&c, &b, LossReduction::Sum).unwrap(), 4.0);
        assert!(squared_error(&a, &DayTensor::zeros(shape(1, 1, 1))).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
    }

    #[test]
    fn works_in_f32_too() {
        let s = shape(2, 1, 1);
        let a = DayTensor::<f32>::new(s, vec![1.0, 2.0]).unwrap();
        let b = a.scale(2.0f32).unwrap();
        assert_eq!(b.values(), &[2.0f32, 4.0]);
        assert_eq!(squared_error(&a, &b).unwrap(), 2.5f32);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn tensor_pair() -> impl Strategy<Value = (DayTensor, DayTensor)> {
            (1usize..4, 1usize..4, 1usize..3).prop_flat_map(|(h, r, c)| {
                let s = TensorShape::new(h, r, c).unwrap();
                let n = s.len();
                (
                    proptest::collection::vec(-1e6f64..1e6, n),
                    proptest::collection::vec(-1e6f64..1e6, n),
                )
                    .prop_map(move |(a, b)| {
                        (DayTensor::new(s, a).unwrap(), DayTensor::new(s, b).unwrap())
                    })
            })
        }

        proptest! {
            #[test]
            fn rmse_dominates_mae((a, b) in tensor_pair()) {
                let m = evaluate(&[a], &[b]).unwrap();
                prop_assert!(m.rmse >= m.mae * (1.0 - 1e-14));
            }

            #[test]
            fn sub_undoes_add((a, b) in tensor_pair()) {
                let back = a.add(&b).unwrap().sub(&b).unwrap();
                for (&x, &y) in back.values().iter().zip(a.values()) {
                    let tol = 1e-12 * x.abs().max(y.abs()).max(1.0);
                    prop_assert!((x - y).abs() <= tol);
                }
            }

            #[test]
            fn merge_matches_joint_evaluation(
                (a, b) in tensor_pair(),
                (c, d) in tensor_pair(),
            ) {
                let m1 = evaluate(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap();
                let m2 = evaluate(std::slice::from_ref(&c), std::slice::from_ref(&d)).unwrap();
                let merged = m1.merge(&m2).unwrap();
                // Joint evaluation needs equal shapes per day only, so evaluate
                // pairwise and pool by hand over the flattened entries.
                let n1 = m1.count as f64;
                let n2 = m2.count as f64;
                let mae = (m1.mae * n1 + m2.mae * n2) / (n1 + n2);
                let rmse = ((m1.rmse.powi(2) * n1 + m2.rmse.powi(2) * n2) / (n1 + n2)).sqrt();
                prop_assert!((merged.mae - mae).abs() <= 1e-12 * mae.abs().max(1.0));
                prop_assert!((merged.rmse - rmse).abs() <= 1e-12 * rmse.abs().max(1.0));
            }
        }
    }
}
