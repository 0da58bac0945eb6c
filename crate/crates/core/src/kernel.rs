//! Covariance kernels, localization profiles and Gram-matrix assembly.
//!
//! A localization profile `k(u)` turns into a weighting function
//! `k_h(x, x0) = k(‖x − x0‖ / h) / h`. Multiplying a base covariance by the
//! square roots of these weights gives the localized covariance
//! `√k_h(x, x0) · K(x, x') · √k_h(x', x0)`, which is again a valid covariance
//! because it has the form `D K D` with `D` diagonal and non-negative.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use statrs::function::gamma::gamma;

use crate::error::{check_dim, Error, Result};

/// Squared Euclidean distance between two points of equal length.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Anything that can act as a covariance function on points of a fixed
/// dimension. Implementations must be symmetric in their arguments.
pub trait Covariance: Sync {
    /// Evaluates the covariance without validating argument lengths.
    fn cov(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovFamily {
    /// `amplitude · exp(−‖x − x'‖² / (2ℓ²))`
    Rbf,
    /// `amplitude · exp(−‖x − x'‖ / ℓ)`
    Exponential,
    /// `amplitude · (offset + x·x' / ℓ²)^degree`
    Polynomial,
}

impl std::str::FromStr for CovFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "gaussian" | "se" => Ok(CovFamily::Rbf),
            "exponential" | "exp" => Ok(CovFamily::Exponential),
            "polynomial" | "poly" => Ok(CovFamily::Polynomial),
            other => Err(Error::invalid(format!("unknown kernel family {other:?}"))),
        }
    }
}

/// Base covariance kernel with its hyperparameters.
///
/// The lengthscale is in input units and the amplitude in squared output
/// units. `degree` and `offset` only matter for the polynomial family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovKernelParams {
    pub family: CovFamily,
    pub lengthscale: f64,
    pub amplitude: f64,
    pub degree: u32,
    pub offset: f64,
}

impl CovKernelParams {
    pub fn rbf(lengthscale: f64, amplitude: f64) -> Self {
        Self {
            family: CovFamily::Rbf,
            lengthscale,
            amplitude,
            degree: 1,
            offset: 0.0,
        }
    }

    pub fn exponential(lengthscale: f64, amplitude: f64) -> Self {
        Self {
            family: CovFamily::Exponential,
            ..Self::rbf(lengthscale, amplitude)
        }
    }

    pub fn polynomial(degree: u32, offset: f64) -> Self {
        Self {
            family: CovFamily::Polynomial,
            lengthscale: 1.0,
            amplitude: 1.0,
            degree,
            offset,
        }
    }

    pub fn with_lengthscale(self, lengthscale: f64) -> Self {
        Self { lengthscale, ..self }
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::invalid(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if self.family == CovFamily::Polynomial {
            if self.degree < 1 {
                return Err(Error::invalid("polynomial degree must be at least 1"));
            }
            if !(self.offset >= 0.0) {
                return Err(Error::invalid("polynomial offset must be non-negative"));
            }
        }
        Ok(())
    }

    /// Prior variance `K(x, x)` for stationary families.
    pub fn stationary_variance(&self) -> Option<f64> {
        match self.family {
            CovFamily::Rbf | CovFamily::Exponential => Some(self.amplitude),
            CovFamily::Polynomial => None,
        }
    }
}

impl Covariance for CovKernelParams {
    #[inline]
    fn cov(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.family {
            CovFamily::Rbf => {
                let r2 = sq_dist(a, b);
                self.amplitude * (-r2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
            CovFamily::Exponential => {
                let r = dist(a, b);
                self.amplitude * (-r / self.lengthscale).exp()
            }
            CovFamily::Polynomial => {
                let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                let base = self.offset + dot / (self.lengthscale * self.lengthscale);
                self.amplitude * base.powi(self.degree as i32)
            }
        }
    }
}

/// Checked evaluation of `K(x, x')`.
pub fn cov_eval(params: &CovKernelParams, x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dim(x.len(), x2.len())?;
    params.validate()?;
    Ok(params.cov(x, x2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// `𝕀(u ≤ 1)`
    Rectangular,
    /// `(d + 2) / (2 V_d) · (1 − u²) · 𝕀(u ≤ 1)`
    Epanechnikov,
    /// `e^(−u²) / (2π)`
    Gaussian,
    /// `u⁻¹ · 𝕀(u ≤ 1)`, infinite at the origin.
    Hilbert,
}

impl Profile {
    pub const ALL: [Profile; 4] = [
        Profile::Rectangular,
        Profile::Epanechnikov,
        Profile::Gaussian,
        Profile::Hilbert,
    ];

    pub fn is_compact(self) -> bool {
        !matches!(self, Profile::Gaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Rectangular => "rectangular",
            Profile::Epanechnikov => "epanechnikov",
            Profile::Gaussian => "gaussian",
            Profile::Hilbert => "hilbert",
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" | "uniform" => Ok(Profile::Rectangular),
            "epanechnikov" | "epa" => Ok(Profile::Epanechnikov),
            "gaussian" => Ok(Profile::Gaussian),
            "hilbert" => Ok(Profile::Hilbert),
            other => Err(Error::invalid(format!("unknown localization profile {other:?}"))),
        }
    }
}

/// Volume of the unit ball in `d` dimensions, `π^(d/2) / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    PI.powf(half) / gamma(half + 1.0)
}

/// A localization profile bound to an input dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalKernelSpec {
    profile: Profile,
    dim: usize,
    epanechnikov_const: f64,
}

impl LocalKernelSpec {
    pub fn new(profile: Profile, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let epanechnikov_const = (dim as f64 + 2.0) / (2.0 * unit_ball_volume(dim));
        Ok(Self {
            profile,
            dim,
            epanechnikov_const,
        })
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalizing constant of the Epanechnikov profile in this dimension.
    pub fn epanechnikov_constant(&self) -> f64 {
        self.epanechnikov_const
    }

    /// Unchecked profile value at a non-negative scaled distance.
    #[inline]
    pub(crate) fn eval_unchecked(&self, u: f64) -> f64 {
        match self.profile {
            Profile::Rectangular => {
                if u <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Epanechnikov => {
                if u <= 1.0 {
                    self.epanechnikov_const * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Profile::Gaussian => (-u * u).exp() / (2.0 * PI),
            Profile::Hilbert => {
                if u == 0.0 {
                    f64::INFINITY
                } else if u <= 1.0 {
                    1.0 / u
                } else {
                    0.0
                }
            }
        }
    }

    /// `k_h` at a given distance. Compact profiles vanish for `distance > h`.
    #[inline]
    pub(crate) fn weight_at(&self, distance: f64, h: f64) -> f64 {
        if self.profile.is_compact() && distance > h {
            return 0.0;
        }
        self.eval_unchecked(distance / h) / h
    }
}

/// Profile value `k(u)`; the Hilbert profile returns `+∞` at `u = 0`.
pub fn profile_eval(spec: &LocalKernelSpec, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::invalid(format!(
            "profile argument must be non-negative, got {u}"
        )));
    }
    Ok(spec.eval_unchecked(u))
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

/// Weighting function `k_h(x, x0) = k(‖x − x0‖ / h) / h`.
pub fn local_weight(spec: &LocalKernelSpec, x: &[f64], x0: &[f64], h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    check_dim(x0.len(), x.len())?;
    Ok(spec.weight_at(dist(x, x0), h))
}

/// Localized covariance `√k_h(x, x0) · K(x, x') · √k_h(x', x0)`.
///
/// Returns an error if either weight is infinite (Hilbert profile at the
/// target itself); that case is handled by the local posterior directly.
pub fn localized_cov(
    params: &CovKernelParams,
    spec: &LocalKernelSpec,
    h: f64,
    x0: &[f64],
    x: &[f64],
    x2: &[f64],
) -> Result<f64> {
    check_bandwidth(h)?;
    check_dim(x0.len(), x.len())?;
    check_dim(x0.len(), x2.len())?;
    params.validate()?;
    let w1 = spec.weight_at(dist(x, x0), h);
    let w2 = spec.weight_at(dist(x2, x0), h);
    if w1 == 0.0 || w2 == 0.0 {
        return Ok(0.0);
    }
    if !w1.is_finite() || !w2.is_finite() {
        return Err(Error::invalid(
            "localized covariance undefined at infinite weight",
        ));
    }
    // the product of weights is commutative, so the result is exactly symmetric
    Ok((w1 * w2).sqrt() * params.cov(x, x2))
}

/// Cross-covariance matrix with entries `K(X_i, X'_j)`.
pub fn gram<K: Covariance + ?Sized>(
    kernel: &K,
    x: ArrayView2<f64>,
    x2: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_dim(x.ncols(), x2.ncols())?;
    let a = x.as_standard_layout();
    let b = x2.as_standard_layout();
    let d = x.ncols();
    let mut out = Array2::zeros((x.nrows(), x2.nrows()));
    if d == 0 {
        return Ok(out);
    }
    for (i, ai) in a.as_slice().unwrap().chunks_exact(d).enumerate() {
        for (j, bj) in b.as_slice().unwrap().chunks_exact(d).enumerate() {
            out[[i, j]] = kernel.cov(ai, bj);
        }
    }
    Ok(out)
}

/// Symmetric Gram matrix `K_XX`; the upper triangle is mirrored so the
/// result is exactly symmetric.
pub fn gram_symmetric<K: Covariance + ?Sized>(kernel: &K, x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let a = x.as_standard_layout();
    let flat = a.as_slice().unwrap();
    let row = |i: usize| &flat[i * d..(i + 1) * d];
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = kernel.cov(row(i), row(j));
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Median of pairwise distances, computed over at most `cap` evenly strided
/// rows so it stays cheap on large inputs.
pub fn median_pairwise_distance(x: ArrayView2<f64>, cap: usize) -> f64 {
    let n = x.nrows();
    if n < 2 {
        return 1.0;
    }
    let stride = n.div_ceil(cap.max(2));
    let rows: Vec<Vec<f64>> = (0..n).step_by(stride).map(|i| x.row(i).to_vec()).collect();
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            d.push(dist(&rows[i], &rows[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn rbf_values() {
        let p = CovKernelParams::rbf(1.0, 1.0);
        assert_eq!(cov_eval(&p, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        let v = cov_eval(&p, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(v, 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn polynomial_at_orthogonal_inputs() {
        for k in 1..5 {
            let p = CovKernelParams::polynomial(k, 1.0);
            assert_eq!(cov_eval(&p, &[1.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        }
    }

    #[test]
    fn cov_eval_errors() {
        let p = CovKernelParams::rbf(1.0, 1.0);
        assert!(matches!(
            cov_eval(&p, &[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = CovKernelParams::rbf(0.0, 1.0);
        assert!(cov_eval(&bad, &[0.0], &[1.0]).is_err());
        let bad = CovKernelParams::rbf(-1.0, 1.0);
        assert!(cov_eval(&bad, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn profile_values() {
        let epa = LocalKernelSpec::new(Profile::Epanechnikov, 1).unwrap();
        assert_relative_eq!(profile_eval(&epa, 0.0).unwrap(), 0.75, epsilon = 1e-13);
        assert_relative_eq!(epa.epanechnikov_constant(), 0.75, epsilon = 1e-13);
        let rect = LocalKernelSpec::new(Profile::Rectangular, 3).unwrap();
        assert_eq!(profile_eval(&rect, 1.5).unwrap(), 0.0);
        assert_eq!(profile_eval(&rect, 1.0).unwrap(), 1.0);
        let gauss = LocalKernelSpec::new(Profile::Gaussian, 2).unwrap();
        assert_relative_eq!(profile_eval(&gauss, 0.0).unwrap(), 0.159155, epsilon = 1e-6);
        let hil = LocalKernelSpec::new(Profile::Hilbert, 2).unwrap();
        assert_eq!(profile_eval(&hil, 0.0).unwrap(), f64::INFINITY);
        assert!(profile_eval(&hil, -0.1).is_err());
        assert!(profile_eval(&hil, f64::NAN).is_err());
    }

    #[test]
    fn unit_ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0, epsilon = 1e-12);
        assert_relative_eq!(unit_ball_volume(2), PI, epsilon = 1e-12);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-12);
        // d = 2: (2 + 2) / (2π)
        let epa = LocalKernelSpec::new(Profile::Epanechnikov, 2).unwrap();
        assert_relative_eq!(epa.epanechnikov_constant(), 2.0 / PI, epsilon = 1e-12);
    }

    #[test]
    fn local_weight_examples() {
        let rect = LocalKernelSpec::new(Profile::Rectangular, 1).unwrap();
        assert_eq!(local_weight(&rect, &[0.5], &[0.0], 2.0).unwrap(), 0.5);
        let hil = LocalKernelSpec::new(Profile::Hilbert, 1).unwrap();
        assert_eq!(local_weight(&hil, &[0.5], &[0.0], 1.0).unwrap(), 2.0);
        let epa = LocalKernelSpec::new(Profile::Epanechnikov, 1).unwrap();
        assert_eq!(local_weight(&epa, &[1.0], &[0.0], 1.0).unwrap(), 0.0);
        assert!(local_weight(&epa, &[1.0], &[0.0], 0.0).is_err());
        assert!(local_weight(&epa, &[1.0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn localized_cov_examples() {
        let p = CovKernelParams::rbf(1.0, 1.0);
        let rect = LocalKernelSpec::new(Profile::Rectangular, 1).unwrap();
        assert_eq!(localized_cov(&p, &rect, 1.0, &[0.2], &[0.2], &[0.2]).unwrap(), 1.0);
        for profile in [Profile::Rectangular, Profile::Epanechnikov, Profile::Hilbert] {
            let spec = LocalKernelSpec::new(profile, 1).unwrap();
            let v = localized_cov(&p, &spec, 0.5, &[0.0], &[0.7], &[0.1]).unwrap();
            assert_eq!(v, 0.0);
        }
        assert!(localized_cov(&p, &rect, 0.0, &[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn localized_cov_matches_termwise_product() {
        // Independent path: closed-form 1-d Epanechnikov weights and RBF.
        let p = CovKernelParams::rbf(0.7, 1.3);
        let spec = LocalKernelSpec::new(Profile::Epanechnikov, 1).unwrap();
        let (h, x0, a, b): (f64, f64, f64, f64) = (0.9, 0.1, 0.45, -0.3);
        let w = |x: f64| {
            let u = (x - x0).abs() / h;
            0.75 * (1.0 - u * u) / h
        };
        let k = 1.3 * (-(a - b) * (a - b) / (2.0 * 0.49)).exp();
        let expected = w(a).sqrt() * k * w(b).sqrt();
        let got = localized_cov(&p, &spec, h, &[x0], &[a], &[b]).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn gram_examples() {
        let p = CovKernelParams::rbf(1.0, 1.0);
        let x = array![[0.4, -1.0]];
        assert_eq!(gram(&p, x.view(), x.view()).unwrap(), array![[1.0]]);
        let x = array![[0.1, 0.2], [0.9, -0.3], [1.5, 0.0], [0.0, 0.0], [-2.0, 1.0]];
        let g = gram(&p, x.view(), x.view()).unwrap();
        for i in 0..5 {
            assert_eq!(g[[i, i]], 1.0);
            for j in 0..5 {
                assert_eq!(g[[i, j]], g[[j, i]]);
                let e = cov_eval(&p, &x.row(i).to_vec(), &x.row(j).to_vec()).unwrap();
                assert_eq!(g[[i, j]], e);
            }
        }
        assert_eq!(g, gram_symmetric(&p, x.view()));
        let y = array![[0.1, 0.2, 0.3]];
        assert!(gram(&p, x.view(), y.view()).is_err());
    }

    #[test]
    fn median_distance_simple() {
        let x = array![[0.0], [1.0], [3.0]];
        // distances 1, 3, 2
        assert_eq!(median_pairwise_distance(x.view(), 1000), 2.0);
    }
}
