//! Hyperparameter selection and paired comparison of methods.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{median_pairwise_distance, Covariance, LocalKernelSpec};
use crate::local::{BandwidthPolicy, LocalGp};
use crate::random::SeededRng;

/// Mean squared error.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_dim(targets.len(), predictions.len())?;
    if targets.is_empty() {
        return Err(Error::Empty("mse of an empty sample".into()));
    }
    let s: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / targets.len() as f64)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

pub const DEFAULT_GRID_M: [usize; 6] = [5, 10, 20, 50, 100, 200];
pub const DEFAULT_LENGTHSCALE_FACTORS: [f64; 5] = [0.05, 0.1, 0.3, 1.0, 3.0];
pub const DEFAULT_NOISE_FACTORS: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Cross-validation settings. Grid values are in data units.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    /// Neighbour counts; an empty grid means the method has no `m`.
    pub grid_m: Vec<usize>,
    pub grid_lengthscale: Vec<f64>,
    pub grid_noise: Vec<f64>,
    pub seed: u64,
}

impl CvConfig {
    /// Default grids scaled to the data: lengthscales relative to the median
    /// pairwise distance, noise levels relative to the target variance.
    pub fn default_for(x: ArrayView2<f64>, y: &[f64], seed: u64) -> Self {
        let med = median_pairwise_distance(x, 1000);
        let mut vy = variance(y);
        if !(vy > 0.0) {
            vy = 1.0;
        }
        Self {
            folds: 3,
            grid_m: DEFAULT_GRID_M.to_vec(),
            grid_lengthscale: DEFAULT_LENGTHSCALE_FACTORS.iter().map(|f| f * med).collect(),
            grid_noise: DEFAULT_NOISE_FACTORS.iter().map(|f| f * vy).collect(),
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("at least 2 folds are required"));
        }
        if self.folds > n {
            return Err(Error::InvalidSplit(format!(
                "{} folds requested for {n} points",
                self.folds
            )));
        }
        if self.grid_lengthscale.is_empty() || self.grid_noise.is_empty() {
            return Err(Error::invalid("cross-validation grids must be non-empty"));
        }
        if self.grid_m.contains(&0) {
            return Err(Error::invalid("grid_m entries must be positive"));
        }
        if let Some(v) = self
            .grid_lengthscale
            .iter()
            .chain(&self.grid_noise)
            .find(|v| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::invalid(format!("grid values must be positive, got {v}")));
        }
        Ok(())
    }

    /// The Cartesian grid, `m` slowest and noise fastest.
    pub fn cells(&self) -> Vec<GridCell> {
        let ms: Vec<Option<usize>> = if self.grid_m.is_empty() {
            vec![None]
        } else {
            self.grid_m.iter().map(|&m| Some(m)).collect()
        };
        let mut out = Vec::new();
        for &m in &ms {
            for &lengthscale in &self.grid_lengthscale {
                for &noise in &self.grid_noise {
                    out.push(GridCell { m, lengthscale, noise });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub m: Option<usize>,
    pub lengthscale: f64,
    pub noise: f64,
}

impl GridCell {
    /// Tie-break order: smaller `m`, then larger lengthscale, then larger noise.
    fn preference(&self, other: &GridCell) -> Ordering {
        self.m
            .cmp(&other.m)
            .then(other.lengthscale.total_cmp(&self.lengthscale))
            .then(other.noise.total_cmp(&self.noise))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    pub cell: GridCell,
    /// Mean validation MSE over folds; infinite if any fold failed.
    pub score: f64,
    pub fold_scores: Vec<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best: GridCell,
    pub best_score: f64,
    pub table: Vec<CvScore>,
}

/// Seeded partition of `0..n` into `folds` groups whose sizes differ by at
/// most one. Each group is sorted.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidSplit(format!("cannot make {folds} folds from {n} points")));
    }
    let perm = SeededRng::new(seed).permutation(n);
    let mut out = Vec::with_capacity(folds);
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut part = perm[start..start + len].to_vec();
        part.sort_unstable();
        out.push(part);
        start += len;
    }
    Ok(out)
}

fn complement(n: usize, part: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in part {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn best_of<T>(items: &[T], score: impl Fn(&T) -> f64, prefer: impl Fn(&T, &T) -> Ordering) -> Option<usize> {
    let key = |t: &T| {
        let s = score(t);
        if s.is_nan() {
            f64::INFINITY
        } else {
            s
        }
    };
    (0..items.len()).min_by(|&a, &b| {
        key(&items[a])
            .total_cmp(&key(&items[b]))
            .then_with(|| prefer(&items[a], &items[b]))
    })
}

/// K-fold cross-validation over the Cartesian grid of `config`.
///
/// `predict(cell, train_x, train_y, val_x)` returns predictions for the
/// validation inputs. A failing cell scores `+∞` and is kept in the table.
pub fn kfold_cv<F>(x: ArrayView2<f64>, y: &[f64], config: &CvConfig, mut predict: F) -> Result<CvResult>
where
    F: FnMut(&GridCell, ArrayView2<f64>, &[f64], ArrayView2<f64>) -> Result<Vec<f64>>,
{
    check_dim(x.nrows(), y.len())?;
    config.validate(y.len())?;
    let folds = fold_indices(y.len(), config.folds, config.seed)?;
    // (train x, train y, validation x, validation y) per fold
    type Fold = (Array2<f64>, Vec<f64>, Array2<f64>, Vec<f64>);
    let parts: Vec<Fold> = folds
        .iter()
        .map(|val| {
            let train = complement(y.len(), val);
            (
                x.select(Axis(0), &train),
                train.iter().map(|&i| y[i]).collect(),
                x.select(Axis(0), val),
                val.iter().map(|&i| y[i]).collect(),
            )
        })
        .collect();

    let mut table = Vec::new();
    for cell in config.cells() {
        let mut fold_scores = Vec::with_capacity(parts.len());
        let mut failures = 0;
        for (tx, ty, vx, vy) in &parts {
            let s = predict(&cell, tx.view(), ty, vx.view()).and_then(|p| mse(&p, vy));
            match s {
                Ok(v) if v.is_finite() => fold_scores.push(v),
                _ => {
                    failures += 1;
                    fold_scores.push(f64::INFINITY);
                }
            }
        }
        let score = if failures > 0 { f64::INFINITY } else { mean(&fold_scores) };
        table.push(CvScore { cell, score, fold_scores, failures });
    }
    let i = best_of(&table, |s| s.score, |a, b| a.cell.preference(&b.cell))
        .ok_or_else(|| Error::Empty("empty grid".into()))?;
    Ok(CvResult {
        best: table[i].cell,
        best_score: table[i].score,
        table,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthScore {
    pub policy: BandwidthPolicy,
    pub mse: f64,
    pub empty_neighborhoods: usize,
    pub failed_queries: usize,
    pub mean_neighbors: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSearch {
    pub best: BandwidthPolicy,
    pub best_mse: f64,
    pub table: Vec<BandwidthScore>,
}

fn policy_value(p: &BandwidthPolicy) -> f64 {
    match *p {
        BandwidthPolicy::FixedH(h) => h,
        BandwidthPolicy::MinNeighbors(m) => m as f64,
    }
}

/// Picks the bandwidth policy with the lowest validation MSE; ties go to the
/// smallest value. Queries that fail make the whole grid value score `+∞`.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_h<K: Covariance + Clone>(
    train_x: ArrayView2<f64>,
    train_y: &[f64],
    val_x: ArrayView2<f64>,
    val_y: &[f64],
    kernel: &K,
    noise: f64,
    spec: &LocalKernelSpec,
    grid: &[BandwidthPolicy],
) -> Result<BandwidthSearch> {
    if grid.is_empty() {
        return Err(Error::Empty("bandwidth grid".into()));
    }
    check_dim(val_x.nrows(), val_y.len())?;
    let model = LocalGp::new(train_x, train_y, kernel.clone(), noise, *spec)?;
    let mut table = Vec::with_capacity(grid.len());
    for &policy in grid {
        policy.validate()?;
        let out = model.predict_batch(policy, val_x);
        let mut preds = Vec::with_capacity(out.len());
        let mut failed = 0;
        let mut empty = 0;
        let mut neighbors = 0usize;
        for r in out {
            match r {
                Ok(p) => {
                    empty += usize::from(p.empty_neighborhood);
                    neighbors += p.neighbor_count;
                    preds.push(p.mean);
                }
                Err(_) => {
                    failed += 1;
                    preds.push(f64::NAN);
                }
            }
        }
        let err = if failed > 0 { f64::INFINITY } else { mse(&preds, val_y)? };
        table.push(BandwidthScore {
            policy,
            mse: err,
            empty_neighborhoods: empty,
            failed_queries: failed,
            mean_neighbors: neighbors as f64 / val_y.len().max(1) as f64,
        });
    }
    let i = best_of(&table, |s| s.mse, |a, b| policy_value(&a.policy).total_cmp(&policy_value(&b.policy)))
        .expect("non-empty grid");
    Ok(BandwidthSearch {
        best: table[i].policy,
        best_mse: table[i].mse,
        table,
    })
}

/// Largest effective sample size for which the exact null distribution is used.
pub const WILCOXON_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Sum of the ranks of positive differences `a − b`.
    pub statistic: f64,
    /// Number of non-zero differences.
    pub n_effective: usize,
    pub exact: bool,
    /// Every difference was zero; `p_value` is 1.
    pub degenerate: bool,
}

/// Average ranks (1-based) of `v`, ties sharing their mean rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One-sided Wilcoxon signed-rank test of the alternative "a tends to be
/// smaller than b" on paired samples. Zero differences are dropped and tied
/// magnitudes get average ranks. The p-value is `P(W⁺ ≤ w)` under the null,
/// computed exactly for up to [`WILCOXON_EXACT_MAX`] non-zero differences
/// and by a tie-corrected normal approximation with continuity correction
/// above.
pub fn wilcoxon_one_sided(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    check_dim(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Empty("wilcoxon test on empty samples".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite paired difference".into()));
    }
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            p_value: 1.0,
            statistic: 0.0,
            n_effective: 0,
            exact: true,
            degenerate: true,
        });
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&mags);
    let w: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    let (p, exact) = if n <= WILCOXON_EXACT_MAX {
        (exact_lower_tail(&ranks, w), true)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let tie_term = tie_correction(&mags);
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w - mu + 0.5) / var.sqrt();
        (Normal::standard().cdf(z), false)
    };
    Ok(WilcoxonResult {
        p_value: p.clamp(0.0, 1.0),
        statistic: w,
        n_effective: n,
        exact,
        degenerate: false,
    })
}

fn tie_correction(mags: &[f64]) -> f64 {
    let mut sorted = mags.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// `P(W⁺ ≤ w)` when each rank carries a positive sign with probability ½.
/// Average ranks are multiples of ½, so the distribution lives on doubled
/// integer ranks.
fn exact_lower_tail(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let target = (2.0 * w).round() as usize;
    let below: f64 = counts[..=target.min(total)].iter().sum();
    below / 2f64.powi(ranks.len() as i32)
}

/// Per-method test errors over repeated splits, with summaries and pairwise
/// one-sided comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub methods: Vec<String>,
    /// `mse[m][s]` is method `m` on split `s`; `NaN` marks a failed split.
    pub mse: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub std_devs: Vec<f64>,
    /// `p_values[i][j]` tests "method i has lower MSE than method j";
    /// `None` on the diagonal or when either method has a failed split.
    pub p_values: Vec<Vec<Option<f64>>>,
}

impl BenchReport {
    pub fn new(methods: Vec<String>, mse: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(methods.len(), mse.len())?;
        let means: Vec<f64> = mse.iter().map(|v| mean(v)).collect();
        let std_devs = mse.iter().map(|v| variance(v).sqrt()).collect();
        let k = methods.len();
        let mut p_values = vec![vec![None; k]; k];
        for i in 0..k {
            for j in 0..k {
                if i == j || means[i].is_nan() || means[j].is_nan() {
                    continue;
                }
                p_values[i][j] = Some(wilcoxon_one_sided(&mse[i], &mse[j])?.p_value);
            }
        }
        Ok(Self { methods, mse, means, std_devs, p_values })
    }

    pub fn index_of(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn folds_partition() {
        let f = fold_indices(10, 3, 1).unwrap();
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(f, fold_indices(10, 3, 1).unwrap());
        assert!(fold_indices(2, 3, 1).is_err());
        assert!(fold_indices(5, 1, 1).is_err());
    }

    #[test]
    fn cv_single_cell_and_tie_rule() {
        let x = Array2::from_shape_fn((9, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let cfg = CvConfig {
            folds: 3,
            grid_m: vec![],
            grid_lengthscale: vec![1.0],
            grid_noise: vec![0.5],
            seed: 0,
        };
        let r = kfold_cv(x.view(), &y, &cfg, |_, _, _, vx| Ok(vec![0.0; vx.nrows()])).unwrap();
        assert_eq!(r.table.len(), 1);
        let expected = mean(&r.table[0].fold_scores);
        assert_eq!(r.best_score, expected);

        let cfg = CvConfig {
            folds: 3,
            grid_m: vec![10, 5],
            grid_lengthscale: vec![1.0, 2.0],
            grid_noise: vec![0.1, 0.2],
            seed: 0,
        };
        let r = kfold_cv(x.view(), &y, &cfg, |_, _, _, vx| Ok(vec![1.0; vx.nrows()])).unwrap();
        assert_eq!(r.best, GridCell { m: Some(5), lengthscale: 2.0, noise: 0.2 });
    }

    #[test]
    fn cv_failure_scores_infinite() {
        let x = Array2::from_shape_fn((6, 1), |(i, _)| i as f64);
        let y = vec![0.0; 6];
        let cfg = CvConfig {
            folds: 2,
            grid_m: vec![],
            grid_lengthscale: vec![1.0, 2.0],
            grid_noise: vec![1.0],
            seed: 3,
        };
        let r = kfold_cv(x.view(), &y, &cfg, |c, _, _, vx| {
            if c.lengthscale > 1.5 {
                Err(Error::Numerical("boom".into()))
            } else {
                Ok(vec![0.5; vx.nrows()])
            }
        })
        .unwrap();
        assert_eq!(r.best.lengthscale, 1.0);
        assert_eq!(r.table[1].score, f64::INFINITY);
        assert_eq!(r.table[1].failures, 2);
    }

    #[test]
    fn wilcoxon_examples() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 1.0 + *v * 0.1).collect();
        let r = wilcoxon_one_sided(&a, &b).unwrap();
        assert_relative_eq!(r.p_value, 1.0 / 1024.0, epsilon = 1e-15);
        assert!(r.exact);
        let r = wilcoxon_one_sided(&a, &a).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        // all positive: W⁺ is the maximum, so p = 1
        let r = wilcoxon_one_sided(&b, &a).unwrap();
        assert_relative_eq!(r.p_value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn wilcoxon_normal_approximation_is_close_to_exact() {
        let d: Vec<f64> = (1..=20).map(|i| if i % 3 == 0 { i as f64 } else { -(i as f64) }).collect();
        let zeros = vec![0.0; 20];
        let exact = wilcoxon_one_sided(&d, &zeros).unwrap();
        let mut d21 = d.clone();
        d21.push(-21.0);
        let approx = wilcoxon_one_sided(&d21, &[0.0; 21]).unwrap();
        assert!(exact.exact && !approx.exact);
        assert!(approx.p_value < exact.p_value);
        assert!((approx.p_value - exact.p_value).abs() < 0.05);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn report_summaries() {
        let r = BenchReport::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 3.0], vec![2.0, 4.0]],
        )
        .unwrap();
        assert_eq!(r.means, vec![2.0, 3.0]);
        assert_eq!(r.std_devs, vec![1.0, 1.0]);
        assert_relative_eq!(r.p_values[0][1].unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(r.p_values[0][0], None);
    }
}
