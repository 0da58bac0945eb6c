//! Classical local regressors: k-nearest neighbours, Nadaraya–Watson and
//! locally weighted kernel ridge regression.

use ndarray::ArrayView2;

use crate::error::{check_dim, Error, Result};
use crate::gp::to_rows;
use crate::kernel::{dist, Covariance, LocalKernelSpec};
use crate::linalg::cholesky;
use crate::local::{local_system, select_neighbors, validate_noise};

fn rows_of(flat: &[f64], d: usize) -> impl Iterator<Item = &[f64]> {
    // zero-dimensional inputs are all at distance zero from each other
    let n = flat.len().checked_div(d).unwrap_or(0);
    (0..n).map(move |i| &flat[i * d..(i + 1) * d])
}

/// Mean target of the `k` nearest training inputs. Ties at the k-th
/// distance go to the lowest index.
pub fn knn_predict(x: ArrayView2<f64>, y: &[f64], k: usize, x0: &[f64]) -> Result<f64> {
    check_dim(x.nrows(), y.len())?;
    check_dim(x.ncols(), x0.len())?;
    let n = y.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    let rows = to_rows(x);
    let dists: Vec<f64> = if x.ncols() == 0 {
        vec![0.0; n]
    } else {
        rows_of(rows.as_slice().unwrap(), x.ncols()).map(|r| dist(r, x0)).collect()
    };
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ascending index order among equal distances
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]));
    Ok(order[..k].iter().map(|&i| y[i]).sum::<f64>() / k as f64)
}

/// Output of a Nadaraya–Watson estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwPrediction {
    pub value: f64,
    /// No training point had positive weight; `value` is 0.
    pub no_support: bool,
}

/// Kernel-weighted average `Σ k_h y_i / Σ k_h`. Points with infinite weight
/// (the Hilbert profile at distance zero) dominate, and the estimate is
/// the mean of their targets.
pub fn nadaraya_watson(
    x: ArrayView2<f64>,
    y: &[f64],
    spec: &LocalKernelSpec,
    h: f64,
    x0: &[f64],
) -> Result<NwPrediction> {
    check_dim(x.nrows(), y.len())?;
    let nb = select_neighbors(x, x0, h, spec)?;
    if nb.is_empty() {
        return Ok(NwPrediction { value: 0.0, no_support: true });
    }
    let infinite: Vec<usize> = nb
        .indices
        .iter()
        .zip(&nb.weights)
        .filter(|(_, w)| w.is_infinite())
        .map(|(i, _)| *i)
        .collect();
    if !infinite.is_empty() {
        let value = infinite.iter().map(|&i| y[i]).sum::<f64>() / infinite.len() as f64;
        return Ok(NwPrediction { value, no_support: false });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&i, &w) in nb.indices.iter().zip(&nb.weights) {
        num += w * y[i];
        den += w;
    }
    Ok(NwPrediction { value: num / den, no_support: false })
}

/// Minimizer of the locally weighted kernel ridge objective
/// `Σ k_h(x_i, x0) (y_i − f(x_i))² + σ² ‖f‖²` evaluated at `x0`, obtained
/// from the representer system `(K_{I,I} + σ² W⁻¹) α = y_I`. With ridge
/// weight `σ²` this coincides with the localized posterior mean. Returns 0
/// when no point has positive weight.
pub fn local_krr<K: Covariance + ?Sized>(
    x: ArrayView2<f64>,
    y: &[f64],
    kernel: &K,
    noise: f64,
    spec: &LocalKernelSpec,
    h: f64,
    x0: &[f64],
) -> Result<f64> {
    validate_noise(noise)?;
    check_dim(x.nrows(), y.len())?;
    let nb = select_neighbors(x, x0, h, spec)?;
    if nb.is_empty() {
        return Ok(0.0);
    }
    let rows = to_rows(x);
    let d = rows.ncols();
    let flat = rows.as_slice().unwrap();
    let local: Vec<&[f64]> = nb.indices.iter().map(|&i| &flat[i * d..(i + 1) * d]).collect();
    let y_local: Vec<f64> = nb.indices.iter().map(|&i| y[i]).collect();
    let factor = cholesky(&local_system(kernel, &local, &nb.weights, noise))?;
    let alpha = factor.solve(&y_local)?;
    Ok(local.iter().zip(&alpha).map(|(r, a)| kernel.cov(x0, r) * a).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{CovKernelParams, Profile};
    use crate::local::{local_predict, BandwidthPolicy};
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn knn_examples() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = [0.0, 10.0, 20.0];
        assert_eq!(knn_predict(x.view(), &y, 2, &[0.1]).unwrap(), 5.0);
        assert_eq!(knn_predict(x.view(), &y, 3, &[7.0]).unwrap(), 10.0);
        assert_eq!(knn_predict(x.view(), &y, 1, &[2.0]).unwrap(), 20.0);
        assert!(knn_predict(x.view(), &y, 4, &[0.0]).is_err());
        assert!(knn_predict(x.view(), &y, 0, &[0.0]).is_err());
    }

    #[test]
    fn knn_tie_goes_to_lowest_index() {
        let x = array![[1.0], [-1.0], [0.0]];
        let y = [3.0, 5.0, 0.0];
        // index 2 is nearest; 0 and 1 tie for second
        assert_eq!(knn_predict(x.view(), &y, 2, &[0.0]).unwrap(), 1.5);
    }

    #[test]
    fn nadaraya_watson_examples() {
        let x = array![[0.0], [0.2], [1.0]];
        let y = [1.0, 3.0, 10.0];
        let rect = LocalKernelSpec::new(Profile::Rectangular, 1).unwrap();
        let out = nadaraya_watson(x.view(), &y, &rect, 0.5, &[0.1]).unwrap();
        assert_relative_eq!(out.value, 2.0, epsilon = 1e-15);
        assert!(!out.no_support);
        let out = nadaraya_watson(x.view(), &y, &rect, 0.1, &[0.95]).unwrap();
        assert_eq!(out.value, 10.0);
        let out = nadaraya_watson(x.view(), &y, &rect, 0.05, &[0.5]).unwrap();
        assert!(out.no_support);
        assert_eq!(out.value, 0.0);
        let hil = LocalKernelSpec::new(Profile::Hilbert, 1).unwrap();
        let out = nadaraya_watson(x.view(), &y, &hil, 0.5, &[0.2]).unwrap();
        assert_eq!(out.value, 3.0);
    }

    #[test]
    fn local_krr_matches_local_mean() {
        let x = array![[0.0, 0.0], [0.3, 0.1], [0.5, 0.9], [0.2, 0.4], [1.5, 1.5]];
        let y = [0.5, -0.2, 1.1, 0.3, 9.0];
        let p = CovKernelParams::rbf(0.6, 1.4);
        let s = LocalKernelSpec::new(Profile::Epanechnikov, 2).unwrap();
        let x0 = [0.2, 0.2];
        let krr = local_krr(x.view(), &y, &p, 0.07, &s, 1.0, &x0).unwrap();
        let gp = local_predict(x.view(), &y, &p, 0.07, &s, BandwidthPolicy::FixedH(1.0), &x0).unwrap();
        assert_relative_eq!(krr, gp.mean, epsilon = 1e-12);
    }
}
