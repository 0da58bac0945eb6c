//! Independent reference implementations used by the integration tests.
//! Nothing here calls the library's numerical routines.

#![allow(dead_code)]

use lsgpr::kernel::{CovFamily, CovKernelParams, Profile};
use lsgpr::random::SeededRng;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn cov(p: &CovKernelParams, a: &[f64], b: &[f64]) -> f64 {
    match p.family {
        CovFamily::Rbf => {
            let r = euclid(a, b);
            p.amplitude * (-(r * r) / (2.0 * p.lengthscale * p.lengthscale)).exp()
        }
        CovFamily::Exponential => p.amplitude * (-euclid(a, b) / p.lengthscale).exp(),
        CovFamily::Polynomial => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            p.amplitude * (p.offset + dot / (p.lengthscale * p.lengthscale)).powi(p.degree as i32)
        }
    }
}

/// Γ(k/2) by the half-integer recursion.
fn gamma_half(k: usize) -> f64 {
    match k {
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (k as f64 / 2.0 - 1.0) * gamma_half(k - 2),
    }
}

pub fn ball_volume(d: usize) -> f64 {
    std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half(d + 2)
}

/// `k(dist/h)/h`, with `∞` for the Hilbert profile at distance 0.
pub fn weight(profile: Profile, d: usize, dist: f64, h: f64) -> f64 {
    let u = dist / h;
    let k = match profile {
        Profile::Rectangular => f64::from(u <= 1.0),
        Profile::Epanechnikov => {
            if u <= 1.0 {
                (d as f64 + 2.0) / (2.0 * ball_volume(d)) * (1.0 - u * u)
            } else {
                0.0
            }
        }
        Profile::Gaussian => (-u * u).exp() / (2.0 * std::f64::consts::PI),
        Profile::Hilbert => {
            if u == 0.0 {
                f64::INFINITY
            } else if u <= 1.0 {
                1.0 / u
            } else {
                0.0
            }
        }
    };
    k / h
}

pub fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Localized posterior by explicit matrix inversion:
/// `m = k₀ᵀ (K + σ² W⁻¹)⁻¹ y`, `v = K₀₀ − k₀ᵀ (K + σ² W⁻¹)⁻¹ k₀` over the
/// positive-weight points within distance `h`. Returns the prior for an
/// empty neighbourhood.
pub fn local_direct(
    x: &Array2<f64>,
    y: &[f64],
    p: &CovKernelParams,
    noise: f64,
    profile: Profile,
    h: f64,
    x0: &[f64],
) -> (f64, f64, usize) {
    let xs = rows(x);
    let d = x.ncols();
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for (i, xi) in xs.iter().enumerate() {
        let r = euclid(xi, x0);
        let wi = weight(profile, d, r, h);
        if r <= h && wi > 0.0 || (profile == Profile::Gaussian && wi > 0.0) {
            idx.push(i);
            w.push(wi);
        }
    }
    let prior = cov(p, x0, x0);
    if idx.is_empty() {
        return (0.0, prior, 0);
    }
    let s = idx.len();
    let m = DMatrix::from_fn(s, s, |a, b| {
        cov(p, &xs[idx[a]], &xs[idx[b]]) + if a == b { noise / w[a] } else { 0.0 }
    });
    let inv = m.try_inverse().expect("invertible local system");
    let k0 = DVector::from_fn(s, |a, _| cov(p, x0, &xs[idx[a]]));
    let yi = DVector::from_fn(s, |a, _| y[idx[a]]);
    let mean = k0.dot(&(&inv * &yi));
    let var = prior - k0.dot(&(&inv * &k0));
    (mean, var, s)
}

/// Global GP posterior by explicit inversion of `K + σ² I`.
pub fn global_direct(x: &Array2<f64>, y: &[f64], p: &CovKernelParams, noise: f64, x0: &[f64]) -> (f64, f64) {
    let xs = rows(x);
    let n = xs.len();
    let m = DMatrix::from_fn(n, n, |a, b| cov(p, &xs[a], &xs[b]) + if a == b { noise } else { 0.0 });
    let inv = m.try_inverse().expect("invertible");
    let k0 = DVector::from_fn(n, |a, _| cov(p, x0, &xs[a]));
    let yv = DVector::from_row_slice(y);
    (k0.dot(&(&inv * &yv)), cov(p, x0, x0) - k0.dot(&(&inv * &k0)))
}

/// Log density of `y ~ N(0, A)` by explicit inverse and determinant.
pub fn mvn_log_density(a: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let yv = DVector::from_row_slice(y);
    let inv = a.clone().try_inverse().expect("invertible");
    let quad = yv.dot(&(&inv * &yv));
    -0.5 * quad - 0.5 * a.determinant().ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `P(W⁺ ≤ w)` by enumerating all `2ⁿ` sign assignments of the differences'
/// average ranks. Zeros are dropped first.
pub fn wilcoxon_brute(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    // average ranks by counting
    let ranks: Vec<f64> = mags
        .iter()
        .map(|m| {
            let less = mags.iter().filter(|o| *o < m).count() as f64;
            let equal = mags.iter().filter(|o| *o == m).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// A random regression instance.
pub struct Instance {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub x0: Vec<f64>,
    pub params: CovKernelParams,
    pub noise: f64,
    pub profile: Profile,
    pub h: f64,
}

pub fn random_instance(rng: &mut SeededRng, max_n: usize, max_d: usize, profile: Profile) -> Instance {
    let n = 1 + rng.index(max_n);
    let d = 1 + rng.index(max_d);
    let x = Array2::from_shape_fn((n, d), |_| rng.uniform());
    let y = (0..n).map(|_| rng.normal()).collect();
    let x0 = (0..d).map(|_| rng.uniform()).collect();
    let params = match rng.index(2) {
        0 => CovKernelParams::rbf(0.3 + rng.uniform(), 0.5 + 1.5 * rng.uniform()),
        _ => CovKernelParams::exponential(0.3 + rng.uniform(), 0.5 + 1.5 * rng.uniform()),
    };
    Instance {
        x,
        y,
        x0,
        params,
        noise: 0.05 + 0.45 * rng.uniform(),
        profile,
        h: 0.4 + 1.2 * rng.uniform(),
    }
}
