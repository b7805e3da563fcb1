//! Spatiotemporal smoothing of daily error tensors and its parameter learning.
//!
//! The smoothed error used for expert updates is produced in two linear steps
//! that act on different axes: first a one-hop graph convolution across
//! regions mixes each region's error with its neighbor mean (`gamma`), then a
//! same-length 1-D convolution along the hour axis applies the temporal
//! kernel `K`. Both parameters are updated online by gradient descent on the
//! realized daily loss; the gradients are analytic because the whole pipeline
//! is affine in `gamma` and in each kernel tap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::EnsembleState;
use crate::scalar::Scalar;
use crate::tensor::{pairwise_sum_by, DayTensor, LossReduction};

/// Undirected adjacency over the region axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionGraph {
    n: usize,
    neighbors: Vec<Vec<usize>>,
}

impl RegionGraph {
    /// A graph with no edges; smoothing over it is the identity.
    pub fn isolated(n: usize) -> Self {
        Self {
            n,
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds from an edge list: symmetrized, deduplicated, self-loops
    /// dropped. Returns the graph and the number of self-loops dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<(Self, usize)> {
        let mut neighbors = vec![Vec::new(); n];
        let mut self_loops = 0usize;
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n} regions"
                )));
            }
            if a == b {
                self_loops += 1;
                continue;
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok((Self { n, neighbors }, self_loops))
    }

    /// Path graph 0 — 1 — … — (n−1).
    pub fn path(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges)
            .expect("path edges are in range")
            .0
    }

    /// 4-neighbor grid of `rows * cols` regions, row-major region ids.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let id = r * cols + c;
                if c + 1 < cols {
                    edges.push((id, id + 1));
                }
                if r + 1 < rows {
                    edges.push((id, id + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges)
            .expect("grid edges are in range")
            .0
    }

    pub fn region_count(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, region: usize) -> &[usize] {
        &self.neighbors[region]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Zero-padding at the day boundaries, or 24-hour wraparound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Zero,
    Circular,
}

/// The learnable smoothing parameters and their step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams<S = f64> {
    gamma: S,
    kernel: Vec<S>,
    eta_gamma: S,
    eta_kernel: S,
    padding: Padding,
}

impl<S: Scalar> SmoothParams<S> {
    pub fn new(
        gamma: S,
        kernel: Vec<S>,
        eta_gamma: S,
        eta_kernel: S,
        padding: Padding,
    ) -> Result<Self> {
        if !(S::zero()..=S::one()).contains(&gamma) {
            return Err(Error::invalid(format!("gamma {gamma} outside [0, 1]")));
        }
        if kernel.is_empty() || kernel.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel length {} must be odd and >= 1",
                kernel.len()
            )));
        }
        if kernel.iter().any(|k| !k.is_finite()) {
            return Err(Error::non_finite("kernel entry"));
        }
        if !eta_gamma.is_finite()
            || eta_gamma <= S::zero()
            || !eta_kernel.is_finite()
            || eta_kernel <= S::zero()
        {
            return Err(Error::invalid(
                "learning rates must be positive".to_string(),
            ));
        }
        Ok(Self {
            gamma,
            kernel,
            eta_gamma,
            eta_kernel,
            padding,
        })
    }

    /// Identity kernel of the given odd length: a one at the center tap.
    pub fn identity_kernel(len: usize) -> Result<Vec<S>> {
        if len == 0 || len.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel length {len} must be odd and >= 1"
            )));
        }
        let mut k = vec![S::zero(); len];
        k[len / 2] = S::one();
        Ok(k)
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn kernel(&self) -> &[S] {
        &self.kernel
    }

    pub fn eta_gamma(&self) -> S {
        self.eta_gamma
    }

    pub fn eta_kernel(&self) -> S {
        self.eta_kernel
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }
}

/// Per-region neighbor mean over each `(hour, channel)` slice. Regions
/// without neighbors pass through unchanged, which makes the later convex mix
/// an identity there.
pub fn neighbor_mean<S: Scalar>(x: &DayTensor<S>, graph: &RegionGraph) -> Result<DayTensor<S>> {
    let shape = x.shape();
    if shape.regions != graph.region_count() {
        return Err(Error::RegionCount {
            expected: graph.region_count(),
            found: shape.regions,
        });
    }
    let mut out = vec![S::zero(); shape.len()];
    for hour in 0..shape.hours {
        for region in 0..shape.regions {
            let nbrs = graph.neighbors(region);
            for channel in 0..shape.channels {
                let idx = shape.index(hour, region, channel);
                out[idx] = if nbrs.is_empty() {
                    x.values()[idx]
                } else {
                    let sum = nbrs.iter().fold(S::zero(), |acc, &j| {
                        acc + x.values()[shape.index(hour, j, channel)]
                    });
                    sum / S::from_usize(nbrs.len()).expect("neighbor count fits in scalar")
                };
            }
        }
    }
    DayTensor::new(shape, out)
}

/// One-hop spatial smoothing: each region's value moves toward its neighbor
/// mean by `gamma`. Isolated regions are untouched for any `gamma`.
pub fn spatial_smooth<S: Scalar>(
    err: &DayTensor<S>,
    graph: &RegionGraph,
    gamma: S,
) -> Result<DayTensor<S>> {
    if !(S::zero()..=S::one()).contains(&gamma) {
        return Err(Error::invalid(format!("gamma {gamma} outside [0, 1]")));
    }
    let means = neighbor_mean(err, graph)?;
    let values: Vec<S> = err
        .values()
        .iter()
        .zip(means.values())
        .map(|(&v, &m)| (S::one() - gamma) * v + gamma * m)
        .collect();
    DayTensor::new(err.shape(), values)
}

/// Hour-axis shift with the given padding; `offset` is added to the source
/// index, so `out[h] = in[h + offset]`.
pub fn shift_hours<S: Scalar>(
    x: &DayTensor<S>,
    offset: isize,
    padding: Padding,
) -> Result<DayTensor<S>> {
    let shape = x.shape();
    let hours = shape.hours as isize;
    let mut out = vec![S::zero(); shape.len()];
    for hour in 0..shape.hours {
        let src = hour as isize + offset;
        let src = match padding {
            Padding::Zero => {
                if src < 0 || src >= hours {
                    continue;
                }
                src as usize
            }
            Padding::Circular => src.rem_euclid(hours) as usize,
        };
        for region in 0..shape.regions {
            for channel in 0..shape.channels {
                out[shape.index(hour, region, channel)] =
                    x.values()[shape.index(src, region, channel)];
            }
        }
    }
    DayTensor::new(shape, out)
}

/// Same-length 1-D correlation along the hour axis:
/// `out[h] = Σ_j K[j] · in[h + j − (len−1)/2]`, out-of-range terms given by
/// the padding mode.
pub fn temporal_smooth<S: Scalar>(
    err: &DayTensor<S>,
    kernel: &[S],
    padding: Padding,
) -> Result<DayTensor<S>> {
    let shape = err.shape();
    if kernel.is_empty() || kernel.len().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "kernel length {} must be odd and >= 1",
            kernel.len()
        )));
    }
    if kernel.len() > shape.hours {
        return Err(Error::invalid(format!(
            "kernel length {} exceeds {} hours",
            kernel.len(),
            shape.hours
        )));
    }
    if kernel.iter().any(|k| !k.is_finite()) {
        return Err(Error::non_finite("kernel entry"));
    }
    let center = (kernel.len() / 2) as isize;
    let hours = shape.hours as isize;
    let mut out = vec![S::zero(); shape.len()];
    for hour in 0..shape.hours {
        for (j, &k) in kernel.iter().enumerate() {
            let src = hour as isize + j as isize - center;
            let src = match padding {
                Padding::Zero => {
                    if src < 0 || src >= hours {
                        continue;
                    }
                    src as usize
                }
                Padding::Circular => src.rem_euclid(hours) as usize,
            };
            for region in 0..shape.regions {
                for channel in 0..shape.channels {
                    let idx = shape.index(hour, region, channel);
                    out[idx] = out[idx] + k * err.values()[shape.index(src, region, channel)];
                }
            }
        }
    }
    DayTensor::new(shape, out)
}

/// Full smoothing pipeline: spatial first, temporal second.
pub fn smooth<S: Scalar>(
    err: &DayTensor<S>,
    graph: &RegionGraph,
    params: &SmoothParams<S>,
) -> Result<DayTensor<S>> {
    let spatial = spatial_smooth(err, graph, params.gamma)?;
    temporal_smooth(&spatial, &params.kernel, params.padding)
}

/// Gradients of the daily loss with respect to `gamma` and the kernel taps.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothGradients<S = f64> {
    pub d_gamma: S,
    pub d_kernel: Vec<S>,
}

/// Analytic gradients of `L = squared_error(y_hat, actual)` where
///
/// ```text
/// y_hat   = base_pred + Σ_i w_i · delta_i'
/// delta_i' = alpha_i · delta_i + (1 − alpha_i) · smooth(raw_err_prev; gamma, K)
/// ```
///
/// with the ensemble's stored corrections `delta_i` and weights `w_i` treated
/// as constants (one-step truncation: gradients flow only through the most
/// recent smoothing of the previous day's raw error). Writing
/// `c = Σ_i w_i (1 − alpha_i)`:
///
/// ```text
/// ∂y_hat/∂gamma = c · temporal(neighbor_mean(e) − e, K)
/// ∂y_hat/∂K_j   = c · shift_{j−center}(spatial(e, gamma))
/// ```
pub fn loss_gradients<S: Scalar>(
    raw_err_prev: &DayTensor<S>,
    base_pred: &DayTensor<S>,
    actual: &DayTensor<S>,
    ens: &EnsembleState<S>,
    graph: &RegionGraph,
    params: &SmoothParams<S>,
    reduction: LossReduction,
) -> Result<SmoothGradients<S>> {
    let shape = raw_err_prev.shape();
    if base_pred.shape() != shape || actual.shape() != shape || ens.shape() != shape {
        return Err(Error::ShapeMismatch {
            left: shape,
            right: if base_pred.shape() != shape {
                base_pred.shape()
            } else if actual.shape() != shape {
                actual.shape()
            } else {
                ens.shape()
            },
        });
    }
    let smoothed = smooth(raw_err_prev, graph, params)?;

    // Residual of the modeled prediction at the current parameters.
    let mut coeff = S::zero();
    let mut residual: Vec<S> = base_pred
        .values()
        .iter()
        .zip(actual.values())
        .map(|(&b, &y)| b - y)
        .collect();
    for (w, e) in ens.weights().iter().zip(ens.experts()) {
        let wa = *w * e.alpha();
        let ws = *w * (S::one() - e.alpha());
        coeff = coeff + ws;
        for (r, (&d, &s)) in residual
            .iter_mut()
            .zip(e.delta().values().iter().zip(smoothed.values()))
        {
            *r = *r + wa * d + ws * s;
        }
    }

    let factor = match reduction {
        LossReduction::Mean => {
            S::from_config(2.0) / S::from_usize(shape.len()).expect("entry count fits in scalar")
        }
        LossReduction::Sum => S::from_config(2.0),
    };

    let dot = |t: &DayTensor<S>| -> S {
        pairwise_sum_by(residual.len(), &|i| residual[i] * t.values()[i])
    };

    let means = neighbor_mean(raw_err_prev, graph)?;
    let direction = means.sub(raw_err_prev)?;
    let d_gamma_path = temporal_smooth(&direction, &params.kernel, params.padding)?;
    let d_gamma = factor * coeff * dot(&d_gamma_path);

    let spatial = spatial_smooth(raw_err_prev, graph, params.gamma)?;
    let center = (params.kernel.len() / 2) as isize;
    let mut d_kernel = Vec::with_capacity(params.kernel.len());
    for j in 0..params.kernel.len() {
        let shifted = shift_hours(&spatial, j as isize - center, params.padding)?;
        d_kernel.push(factor * coeff * dot(&shifted));
    }

    if !d_gamma.is_finite() || d_kernel.iter().any(|g| !g.is_finite()) {
        return Err(Error::non_finite("smoothing gradients"));
    }
    Ok(SmoothGradients { d_gamma, d_kernel })
}

/// One projected gradient step: `gamma` is clipped back into `[0, 1]`, the
/// kernel moves unconstrained.
pub fn ogd_step<S: Scalar>(
    params: &SmoothParams<S>,
    grads: &SmoothGradients<S>,
) -> Result<SmoothParams<S>> {
    if !grads.d_gamma.is_finite() || grads.d_kernel.iter().any(|g| !g.is_finite()) {
        return Err(Error::non_finite("ogd gradients"));
    }
    if grads.d_kernel.len() != params.kernel.len() {
        return Err(Error::invalid(format!(
            "kernel gradient length {} does not match kernel length {}",
            grads.d_kernel.len(),
            params.kernel.len()
        )));
    }
    let gamma = (params.gamma - params.eta_gamma * grads.d_gamma)
        .max(S::zero())
        .min(S::one());
    let kernel: Vec<S> = params
        .kernel
        .iter()
        .zip(&grads.d_kernel)
        .map(|(&k, &g)| k - params.eta_kernel * g)
        .collect();
    SmoothParams::new(
        gamma,
        kernel,
        params.eta_gamma,
        params.eta_kernel,
        params.padding,
    )
}
