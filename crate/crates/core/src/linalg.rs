//! Dense symmetric positive-definite algebra: Cholesky with a fixed jitter
//! ladder, triangular solves, log-determinants and Gaussian sampling.

use ndarray::Array2;

use crate::error::{check_dim, Error, Result};
use crate::random::SeededRng;

/// Jitter multipliers, relative to the mean diagonal, tried in order.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

const SYMMETRY_TOL: f64 = 1e-12;

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter_used · I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    // row-major, only the lower triangle is meaningful
    l: Vec<f64>,
    jitter_used: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.l[i * self.n..i * self.n + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.l[i * self.n + j]
        }
    }

    /// `L` as a dense matrix with an explicit zero upper triangle.
    pub fn lower(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.get(i, j))
    }

    /// Forward substitution: solves `L v = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, b.len())?;
        let mut v = b.to_vec();
        for i in 0..self.n {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&v[..i]).map(|(l, x)| l * x).sum();
            v[i] = (v[i] - s) / row[i];
        }
        Ok(v)
    }

    /// Back substitution: solves `Lᵀ x = v`.
    pub fn solve_upper(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        let n = self.n;
        let mut x = v.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            // subtract column i of Lᵀ, i.e. row i of L, from the entries above
            for (k, l) in self.row(i)[..i].iter().enumerate() {
                x[k] -= l * xi;
            }
        }
        Ok(x)
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let v = self.solve_lower(b)?;
        self.solve_upper(&v)
    }

    /// `log |L Lᵀ| = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// `(L Lᵀ)⁻¹` as a dense symmetric matrix.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.n;
        // M = L⁻¹, row-major lower triangle
        let mut m = vec![0.0; n * n];
        let mut acc = vec![0.0; n];
        for i in 0..n {
            acc[..i].iter_mut().for_each(|a| *a = 0.0);
            let li = self.row(i);
            for k in 0..i {
                let c = li[k];
                if c != 0.0 {
                    for (a, mk) in acc[..=k].iter_mut().zip(&m[k * n..k * n + k + 1]) {
                        *a += c * mk;
                    }
                }
            }
            let d = li[i];
            for j in 0..i {
                m[i * n + j] = -acc[j] / d;
            }
            m[i * n + i] = 1.0 / d;
        }
        // Mᵀ M, accumulated row by row of M
        let mut out = Array2::<f64>::zeros((n, n));
        {
            let o = out.as_slice_mut().unwrap();
            for k in 0..n {
                let mk = &m[k * n..k * n + k + 1];
                for i in 0..=k {
                    let c = mk[i];
                    if c == 0.0 {
                        continue;
                    }
                    let orow = &mut o[i * n..i * n + i + 1];
                    for (oj, mj) in orow.iter_mut().zip(&mk[..=i]) {
                        *oj += c * mj;
                    }
                }
            }
            for i in 0..n {
                for j in 0..i {
                    o[j * n + i] = o[i * n + j];
                }
            }
        }
        out
    }
}

fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    let n = a.nrows();
    check_dim(n, a.ncols())?;
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    let rel = worst / scale;
    if rel > SYMMETRY_TOL || rel.is_nan() {
        return Err(Error::NotSymmetric(rel));
    }
    Ok(())
}

fn try_factor(a: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (head, tail) = l.split_at_mut(i * n);
            let li = &mut tail[..n];
            let dot: f64 = if j == i {
                li[..j].iter().map(|v| v * v).sum()
            } else {
                li[..j].iter().zip(&head[j * n..j * n + j]).map(|(p, q)| p * q).sum()
            };
            let s = a[i * n + j] - dot;
            if i == j {
                let s = s + jitter;
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                li[i] = s.sqrt();
            } else {
                li[j] = s / head[j * n + j];
            }
        }
    }
    Some(l)
}

/// Cholesky factorization with the fixed jitter ladder
/// `{0, 1e−10, 1e−8, 1e−6} · mean(diag A)`.
pub fn cholesky(a: &Array2<f64>) -> Result<CholeskyFactor> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(CholeskyFactor {
            n,
            l: Vec::new(),
            jitter_used: 0.0,
        });
    }
    let flat = a.as_standard_layout();
    let flat = flat.as_slice().unwrap();
    let mean_diag = (0..n).map(|i| a[[i, i]]).sum::<f64>() / n as f64;
    let mut attempted = Vec::with_capacity(JITTER_LADDER.len());
    for rel in JITTER_LADDER {
        let jitter = rel * mean_diag;
        attempted.push(jitter);
        if let Some(l) = try_factor(flat, n, jitter) {
            return Ok(CholeskyFactor {
                n,
                l,
                jitter_used: jitter,
            });
        }
    }
    Err(Error::Singular { attempted })
}

pub fn solve_psd(factor: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    factor.solve(b)
}

pub fn log_det(factor: &CholeskyFactor) -> f64 {
    factor.log_det()
}

/// Draws `count` samples from `N(0, cov)` using a seeded generator.
///
/// Coordinates whose variance is exactly zero are deterministic and come
/// out as exact zeros; the remaining block is factorized and sampled as
/// `L z` with `z` standard normal.
pub fn sample_gaussian(cov: &Array2<f64>, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
    check_symmetric(cov)?;
    let n = cov.nrows();
    if let Some(i) = (0..n).find(|&i| cov[[i, i]] < 0.0) {
        return Err(Error::Numerical(format!(
            "negative variance {} at index {i}",
            cov[[i, i]]
        )));
    }
    let support: Vec<usize> = (0..n).filter(|&i| cov[[i, i]] > 0.0).collect();
    let sub = Array2::from_shape_fn((support.len(), support.len()), |(i, j)| {
        cov[[support[i], support[j]]]
    });
    let factor = cholesky(&sub)?;
    let mut rng = SeededRng::new(seed);
    let s = support.len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z: Vec<f64> = (0..s).map(|_| rng.normal()).collect();
        let mut draw = vec![0.0; n];
        for (r, &idx) in support.iter().enumerate() {
            draw[idx] = factor.row(r).iter().zip(&z).map(|(l, z)| l * z).sum();
        }
        out.push(draw);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn random_spd(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        let b = Array2::from_shape_fn((n, n), |_| rng.normal());
        b.dot(&b.t()) + Array2::<f64>::eye(n)
    }

    #[test]
    fn diagonal_factor() {
        let f = cholesky(&array![[4.0, 0.0], [0.0, 9.0]]).unwrap();
        assert_eq!(f.lower(), array![[2.0, 0.0], [0.0, 3.0]]);
        assert_eq!(f.jitter_used(), 0.0);
        assert_eq!(f.solve(&[8.0, 27.0]).unwrap(), vec![2.0, 3.0]);
        assert_relative_eq!(f.log_det(), 36f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(f.log_det(), 3.583519, epsilon = 1e-6);
    }

    #[test]
    fn identity_factor() {
        let f = cholesky(&Array2::eye(3)).unwrap();
        assert_eq!(f.lower(), Array2::<f64>::eye(3));
        assert_eq!(f.solve(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
        assert_eq!(f.log_det(), 0.0);
    }

    #[test]
    fn reconstruction_and_residual() {
        let a = random_spd(10, 11);
        let f = cholesky(&a).unwrap();
        assert_eq!(f.jitter_used(), 0.0);
        let l = f.lower();
        let err = (&l.dot(&l.t()) - &a).mapv(|v| v * v).sum().sqrt();
        let norm = a.mapv(|v| v * v).sum().sqrt();
        assert!(err / norm < 1e-10, "relative reconstruction error {}", err / norm);

        let a = random_spd(15, 12);
        let f = cholesky(&a).unwrap();
        let b: Vec<f64> = (0..15).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b).unwrap();
        let ax = a.dot(&ndarray::Array1::from(x));
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res / nb < 1e-10);
    }

    #[test]
    fn inverse_matches_solves() {
        let a = random_spd(12, 5);
        let f = cholesky(&a).unwrap();
        let inv = f.inverse();
        let prod = a.dot(&inv);
        for i in 0..12 {
            for j in 0..12 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jitter_escalates_on_semidefinite() {
        // rank-one matrix needs jitter
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let f = cholesky(&a).unwrap();
        assert!(f.jitter_used() > 0.0);
        let l = f.lower();
        let r = l.dot(&l.t());
        assert_relative_eq!(r[[0, 1]], 1.0, epsilon = 1e-12);
        assert_relative_eq!(r[[0, 0]], 1.0 + f.jitter_used(), epsilon = 1e-15);
    }

    #[test]
    fn singular_reports_ladder() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        match cholesky(&a) {
            Err(Error::Singular { attempted }) => assert_eq!(attempted.len(), 4),
            other => panic!("expected singular error, got {other:?}"),
        }
        assert!(matches!(
            cholesky(&array![[1.0, 0.5], [0.4, 1.0]]),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let f = cholesky(&Array2::eye(3)).unwrap();
        assert!(f.solve(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn sampling_degenerate_and_deterministic() {
        let zero = Array2::zeros((4, 4));
        let s = sample_gaussian(&zero, 1, 3).unwrap();
        assert!(s.iter().flatten().all(|v| v.abs() < 1e-3));

        let cov = random_spd(5, 2);
        let a = sample_gaussian(&cov, 99, 4).unwrap();
        let b = sample_gaussian(&cov, 99, 4).unwrap();
        let bits = |s: &Vec<Vec<f64>>| s.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn sampling_moments_identity() {
        let n = 3;
        let draws = sample_gaussian(&Array2::eye(n), 2024, 10_000).unwrap();
        for c in 0..n {
            let m = draws.iter().map(|d| d[c]).sum::<f64>() / draws.len() as f64;
            let v = draws.iter().map(|d| (d[c] - m).powi(2)).sum::<f64>() / draws.len() as f64;
            assert!(m.abs() < 0.05, "mean {m}");
            assert!((0.9..=1.1).contains(&v), "variance {v}");
        }
    }
}
