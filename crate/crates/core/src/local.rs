//! Localized GP regression.
//!
//! For a target point `x0` every training point is weighted by
//! `w_i = k_h(x_i, x0)`. Only points with positive weight enter the model,
//! and the posterior of `f(x0)` is
//!
//! ```text
//! mean     = K_{x0,I} (K_{I,I} + σ² W⁻¹)⁻¹ y_I
//! variance = K(x0, x0) − K_{x0,I} (K_{I,I} + σ² W⁻¹)⁻¹ K_{I,x0}
//! ```
//!
//! which is an ordinary GP posterior with heteroscedastic noise `σ² / w_i`.
//! A compact profile therefore turns one `n × n` solve into a `|I| × |I|`
//! solve per query. Infinite weights (the Hilbert profile at distance zero)
//! give a zero noise entry, i.e. a noise-free observation at `x0`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::gp::{clamp_variance, to_rows, GpModel, PredictiveDistribution};
use crate::kernel::{dist, CovKernelParams, Covariance, LocalKernelSpec};
use crate::linalg::{cholesky, CholeskyFactor};

/// Relative inflation applied to the m-th neighbour distance so that the
/// m-th neighbour keeps a strictly positive weight under profiles that
/// vanish on the boundary of their support.
pub const BANDWIDTH_INFLATION: f64 = 1e-6;

/// Size above which fixed-bandwidth queries with a compact profile use the
/// uniform grid index instead of a full scan.
pub const GRID_INDEX_THRESHOLD: usize = 10_000;

// 3^d neighbouring cells are visited, so the grid only pays off in low d.
const GRID_INDEX_MAX_DIM: usize = 6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// How the bandwidth is chosen at each target point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthPolicy {
    /// The same bandwidth everywhere.
    FixedH(f64),
    /// The smallest bandwidth that gives at least `m` neighbours.
    MinNeighbors(usize),
}

impl BandwidthPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthPolicy::FixedH(h) if !(h > 0.0 && h.is_finite()) => {
                Err(Error::invalid(format!("bandwidth must be positive, got {h}")))
            }
            BandwidthPolicy::MinNeighbors(0) => Err(Error::invalid("min_neighbors must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Positive-weight neighbours of a target point, in ascending index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Neighborhood {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn neighbors_from_distances(dists: &[f64], h: f64, spec: &LocalKernelSpec) -> Neighborhood {
    let mut out = Neighborhood::default();
    for (i, &d) in dists.iter().enumerate() {
        if d <= h || !spec.profile().is_compact() {
            let w = spec.weight_at(d, h);
            if w > 0.0 {
                out.indices.push(i);
                out.weights.push(w);
            }
        }
    }
    out
}

fn check_h(h: f64) -> Result<()> {
    BandwidthPolicy::FixedH(h).validate()
}

/// Indices with `‖x_i − x0‖ ≤ h` and strictly positive weight, together
/// with their weights. Infinite weights are passed through unchanged.
pub fn select_neighbors(
    x: ArrayView2<f64>,
    x0: &[f64],
    h: f64,
    spec: &LocalKernelSpec,
) -> Result<Neighborhood> {
    check_h(h)?;
    check_dim(x.ncols(), x0.len())?;
    let rows = x.as_standard_layout();
    let dists = distances(rows.as_slice().unwrap(), x.ncols(), x0);
    Ok(neighbors_from_distances(&dists, h, spec))
}

fn distances(flat: &[f64], d: usize, x0: &[f64]) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    flat.chunks_exact(d).map(|xi| dist(xi, x0)).collect()
}

fn bounding_diagonal(flat: &[f64], d: usize) -> f64 {
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in flat.chunks_exact(d) {
        for (k, v) in row.iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

fn bandwidth_from_distances(dists: &[f64], m: usize, flat: &[f64], d: usize) -> Result<f64> {
    let n = dists.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "min_neighbors must lie in 1..={n}, got {m}"
        )));
    }
    let mut work = dists.to_vec();
    let (_, dm, _) = work.select_nth_unstable_by(m - 1, f64::total_cmp);
    let dm = *dm;
    if dm > 0.0 {
        return Ok(dm * (1.0 + BANDWIDTH_INFLATION));
    }
    // the m nearest points coincide with x0
    let smallest_positive = dists
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .min_by(f64::total_cmp);
    Ok(match smallest_positive {
        Some(v) => v,
        None => {
            let diam = bounding_diagonal(flat, d);
            if diam > 0.0 {
                BANDWIDTH_INFLATION * diam
            } else {
                BANDWIDTH_INFLATION
            }
        }
    })
}

/// Bandwidth giving at least `m` neighbours at `x0`:
/// `d_(m) · (1 + 1e−6)` where `d_(m)` is the m-th smallest distance.
/// Points tied with the m-th neighbour are all admitted.
pub fn adapt_bandwidth(
    x: ArrayView2<f64>,
    x0: &[f64],
    m: usize,
    spec: &LocalKernelSpec,
) -> Result<f64> {
    check_dim(x.ncols(), x0.len())?;
    check_dim(spec.dim(), x0.len())?;
    let rows = x.as_standard_layout();
    let flat = rows.as_slice().unwrap();
    let dists = distances(flat, x.ncols(), x0);
    bandwidth_from_distances(&dists, m, flat, x.ncols())
}

/// Uniform grid of cell size `h` over the training inputs. Visiting the
/// `3^d` cells around a query finds every point within distance `h`.
#[derive(Debug, Clone)]
struct GridIndex {
    h: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl GridIndex {
    fn build(flat: &[f64], d: usize, h: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, row) in flat.chunks_exact(d).enumerate() {
            cells.entry(Self::key(row, h)).or_default().push(i);
        }
        Self { h, cells }
    }

    fn key(p: &[f64], h: f64) -> Vec<i64> {
        p.iter().map(|v| (v / h).floor() as i64).collect()
    }

    /// Candidate indices in ascending order.
    fn candidates(&self, x0: &[f64]) -> Vec<usize> {
        let base = Self::key(x0, self.h);
        let d = base.len();
        let mut out = Vec::new();
        let mut offset = vec![-1i64; d];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(v) = self.cells.get(&key) {
                out.extend_from_slice(v);
            }
            // odometer over {-1, 0, 1}^d
            let mut k = 0;
            while k < d {
                offset[k] += 1;
                if offset[k] <= 1 {
                    break;
                }
                offset[k] = -1;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        out.sort_unstable();
        out
    }
}

/// Per-target local model: neighbour set, weights and the factorized
/// system `K_{I,I} + σ² W⁻¹`.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub x0: Vec<f64>,
    pub h: f64,
    pub neighbors: Neighborhood,
    factor: CholeskyFactor,
    alpha: Vec<f64>,
    cross: Vec<f64>,
    prior: f64,
    y_local: Vec<f64>,
}

impl LocalModel {
    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Posterior of `f(x0)`.
    pub fn predict(&self) -> Result<PredictiveDistribution> {
        if self.neighbors.is_empty() {
            return Ok(prior_prediction(self.prior));
        }
        let mean = self.cross.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.factor.solve_lower(&self.cross)?;
        let variance = clamp_variance(self.prior - v.iter().map(|t| t * t).sum::<f64>())?;
        Ok(PredictiveDistribution {
            mean,
            variance,
            neighbor_count: self.neighbors.len(),
            empty_neighborhood: false,
        })
    }

    /// Local marginal log-likelihood of `y_I`, with `|I|` in the
    /// normalizing constant.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let fit: f64 = self.y_local.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * fit - 0.5 * self.factor.log_det() - 0.5 * self.neighbors.len() as f64 * LN_2PI
    }
}

fn prior_prediction(prior: f64) -> PredictiveDistribution {
    PredictiveDistribution {
        mean: 0.0,
        variance: prior,
        neighbor_count: 0,
        empty_neighborhood: true,
    }
}

/// `K_{I,I} + σ² W⁻¹` for the selected rows.
pub(crate) fn local_system<K: Covariance + ?Sized>(
    kernel: &K,
    rows: &[&[f64]],
    weights: &[f64],
    noise: f64,
) -> Array2<f64> {
    let s = rows.len();
    let mut a = Array2::zeros((s, s));
    for i in 0..s {
        for j in i..s {
            let v = kernel.cov(rows[i], rows[j]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
        // σ²/∞ = 0 for noise-free points
        a[[i, i]] += noise / weights[i];
    }
    a
}

pub(crate) fn validate_noise(noise: f64) -> Result<()> {
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be positive, got {noise}")));
    }
    Ok(())
}

/// Training data and hyperparameters shared by every local model.
#[derive(Debug, Clone)]
pub struct LocalGp<K> {
    x: Array2<f64>,
    y: Vec<f64>,
    kernel: K,
    noise: f64,
    spec: LocalKernelSpec,
}

impl<K: Covariance> LocalGp<K> {
    pub fn new(
        x: ArrayView2<f64>,
        y: &[f64],
        kernel: K,
        noise: f64,
        spec: LocalKernelSpec,
    ) -> Result<Self> {
        validate_noise(noise)?;
        check_dim(x.nrows(), y.len())?;
        check_dim(spec.dim(), x.ncols())?;
        Ok(Self {
            x: to_rows(x),
            y: y.to_vec(),
            kernel,
            noise,
            spec,
        })
    }

    fn flat(&self) -> &[f64] {
        self.x.as_slice().unwrap()
    }

    fn row(&self, i: usize) -> &[f64] {
        let d = self.x.ncols();
        &self.flat()[i * d..(i + 1) * d]
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn resolve(&self, policy: BandwidthPolicy, x0: &[f64], index: Option<&GridIndex>) -> Result<(f64, Neighborhood)> {
        policy.validate()?;
        let d = self.x.ncols();
        match policy {
            BandwidthPolicy::FixedH(h) => {
                let nb = match index {
                    Some(idx) => {
                        let mut nb = Neighborhood::default();
                        for i in idx.candidates(x0) {
                            let di = dist(self.row(i), x0);
                            if di <= h {
                                let w = self.spec.weight_at(di, h);
                                if w > 0.0 {
                                    nb.indices.push(i);
                                    nb.weights.push(w);
                                }
                            }
                        }
                        nb
                    }
                    None => neighbors_from_distances(&distances(self.flat(), d, x0), h, &self.spec),
                };
                Ok((h, nb))
            }
            BandwidthPolicy::MinNeighbors(m) => {
                let dists = distances(self.flat(), d, x0);
                let h = bandwidth_from_distances(&dists, m, self.flat(), d)?;
                Ok((h, neighbors_from_distances(&dists, h, &self.spec)))
            }
        }
    }

    fn grid_index_for(&self, policy: BandwidthPolicy) -> Option<GridIndex> {
        match policy {
            BandwidthPolicy::FixedH(h)
                if h > 0.0
                    && self.len() > GRID_INDEX_THRESHOLD
                    && self.spec.profile().is_compact()
                    && self.x.ncols() <= GRID_INDEX_MAX_DIM =>
            {
                Some(GridIndex::build(self.flat(), self.x.ncols(), h))
            }
            _ => None,
        }
    }

    fn build_model(&self, x0: &[f64], h: f64, neighbors: Neighborhood) -> Result<LocalModel> {
        let prior = self.kernel.cov(x0, x0);
        let rows: Vec<&[f64]> = neighbors.indices.iter().map(|&i| self.row(i)).collect();
        let y_local: Vec<f64> = neighbors.indices.iter().map(|&i| self.y[i]).collect();
        let a = local_system(&self.kernel, &rows, &neighbors.weights, self.noise);
        let factor = cholesky(&a).map_err(|e| Error::QueryFailed {
            point: x0.to_vec(),
            source: Box::new(e),
        })?;
        let alpha = factor.solve(&y_local)?;
        let cross = rows.iter().map(|r| self.kernel.cov(x0, r)).collect();
        Ok(LocalModel {
            x0: x0.to_vec(),
            h,
            neighbors,
            factor,
            alpha,
            cross,
            prior,
            y_local,
        })
    }

    /// Builds the local model at `x0` under the given bandwidth policy.
    pub fn local_model(&self, policy: BandwidthPolicy, x0: &[f64]) -> Result<LocalModel> {
        check_dim(self.x.ncols(), x0.len())?;
        let (h, nb) = self.resolve(policy, x0, None)?;
        self.build_model(x0, h, nb)
    }

    pub fn predict(&self, policy: BandwidthPolicy, x0: &[f64]) -> Result<PredictiveDistribution> {
        self.local_model(policy, x0)?.predict()
    }

    /// Predictions at every row of `queries`, in order. Queries run in
    /// parallel; a failing query does not stop the others.
    pub fn predict_batch(
        &self,
        policy: BandwidthPolicy,
        queries: ArrayView2<f64>,
    ) -> Vec<Result<PredictiveDistribution>> {
        let index = self.grid_index_for(policy);
        let q = to_rows(queries);
        let d = q.ncols();
        if d != self.x.ncols() {
            return (0..q.nrows())
                .map(|_| Err(Error::DimensionMismatch { expected: self.x.ncols(), found: d }))
                .collect();
        }
        q.as_slice()
            .unwrap()
            .par_chunks_exact(d.max(1))
            .map(|x0| {
                let (h, nb) = self.resolve(policy, x0, index.as_ref())?;
                self.build_model(x0, h, nb)?.predict()
            })
            .collect()
    }
}

/// Localized posterior at `x0`, computed by Cholesky of
/// `K_{I,I} + σ² W⁻¹`. Returns the prior with `empty_neighborhood` set when
/// no training point has positive weight.
#[allow(clippy::too_many_arguments)]
pub fn local_predict<K: Covariance + Clone>(
    x: ArrayView2<f64>,
    y: &[f64],
    kernel: &K,
    noise: f64,
    spec: &LocalKernelSpec,
    policy: BandwidthPolicy,
    x0: &[f64],
) -> Result<PredictiveDistribution> {
    LocalGp::new(x, y, kernel.clone(), noise, *spec)?.predict(policy, x0)
}

/// [`local_predict`] at every row of `queries`; order is preserved and
/// failures are reported per query.
pub fn local_predict_batch<K: Covariance + Clone>(
    x: ArrayView2<f64>,
    y: &[f64],
    kernel: &K,
    noise: f64,
    spec: &LocalKernelSpec,
    policy: BandwidthPolicy,
    queries: ArrayView2<f64>,
) -> Result<Vec<Result<PredictiveDistribution>>> {
    Ok(LocalGp::new(x, y, kernel.clone(), noise, *spec)?.predict_batch(policy, queries))
}

/// Local marginal log-likelihood
/// `−½ y_Iᵀ A⁻¹ y_I − ½ log|A| − (|I|/2) log 2π` with `A = K + σ² W⁻¹`.
pub fn local_mll<K: Covariance + ?Sized>(
    x_local: ArrayView2<f64>,
    y_local: &[f64],
    weights: &[f64],
    kernel: &K,
    noise: f64,
) -> Result<f64> {
    validate_noise(noise)?;
    let s = x_local.nrows();
    check_dim(s, y_local.len())?;
    check_dim(s, weights.len())?;
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::invalid(format!("local weights must be positive, got {w}")));
    }
    let rows = to_rows(x_local);
    let d = rows.ncols();
    let refs: Vec<&[f64]> = if d == 0 {
        vec![&[][..]; s]
    } else {
        rows.as_slice().unwrap().chunks_exact(d).collect()
    };
    let a = local_system(kernel, &refs, weights, noise);
    let factor = cholesky(&a)?;
    let alpha = factor.solve(y_local)?;
    let fit: f64 = y_local.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    Ok(-0.5 * fit - 0.5 * factor.log_det() - 0.5 * s as f64 * LN_2PI)
}

/// The same posterior as [`local_predict`] with a fixed bandwidth, obtained
/// by fitting an unlocalized GP to the neighbours with per-point noise
/// `σ² / k_h(x_i, x0)`.
pub fn hetero_predict(
    x: ArrayView2<f64>,
    y: &[f64],
    params: &CovKernelParams,
    noise: f64,
    spec: &LocalKernelSpec,
    h: f64,
    x0: &[f64],
) -> Result<PredictiveDistribution> {
    validate_noise(noise)?;
    check_dim(x.nrows(), y.len())?;
    let nb = select_neighbors(x, x0, h, spec)?;
    if nb.is_empty() {
        params.validate()?;
        return Ok(prior_prediction(params.cov(x0, x0)));
    }
    let x_local = x.select(ndarray::Axis(0), &nb.indices);
    let y_local: Vec<f64> = nb.indices.iter().map(|&i| y[i]).collect();
    let per_point: Vec<f64> = nb.weights.iter().map(|w| noise / w).collect();
    let model = GpModel::fit_heteroscedastic(x_local.view(), &y_local, *params, &per_point)?;
    let mut p = model.predict(x0)?;
    p.neighbor_count = nb.len();
    Ok(p)
}
