//! Experiment drivers behind the command-line tool: the Doppler
//! demonstration, localized prior samples and the repeated-split benchmark.
//! Everything here is deterministic given its configuration and seed.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};

use crate::baselines::{knn_predict, nadaraya_watson};
use crate::data::{doppler_fn, gen_doppler, preprocess, split_indices, Dataset, Preprocess, SplitSpec};
use crate::error::{Error, Result};
use crate::gp::{optimize_hypers_multistart, FittedHypers, GpModel, OptimizerConfig, PredictiveDistribution};
use crate::kernel::{localized_cov, median_pairwise_distance, CovFamily, CovKernelParams, LocalKernelSpec, Profile};
use crate::linalg::sample_gaussian;
use crate::local::{adapt_bandwidth, BandwidthPolicy, LocalGp};
use crate::selection::{
    grid_search_h, kfold_cv, mse, variance, BandwidthSearch, BenchReport, CvConfig, GridCell,
    DEFAULT_LENGTHSCALE_FACTORS, DEFAULT_NOISE_FACTORS,
};

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn column(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).expect("column")
}

fn collect_predictions(out: Vec<Result<PredictiveDistribution>>) -> Result<Vec<PredictiveDistribution>> {
    out.into_iter().collect()
}

/// A predictive curve over a one-dimensional query grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub truth: f64,
    pub prediction: PredictiveDistribution,
}

/// CSV with columns `x,true,mean,variance,lower95,upper95`.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("x,true,mean,variance,lower95,upper95\n");
    for p in points {
        let d = &p.prediction;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.x,
            p.truth,
            d.mean,
            d.variance,
            d.lower95(),
            d.upper95()
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerConfig {
    /// Training points.
    pub n: usize,
    /// Size of the independent validation sample used to pick the bandwidth.
    pub n_validation: usize,
    pub noise_variance: f64,
    pub grid_points: usize,
    /// Candidate neighbour counts for the adaptive bandwidth.
    pub grid_m: Vec<usize>,
    /// Candidate multiples of the marginal-likelihood noise variance for the
    /// localized model, selected jointly with `m` on the validation sample.
    pub noise_multipliers: Vec<f64>,
    pub profile: Profile,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for DopplerConfig {
    fn default() -> Self {
        Self {
            n: 400,
            n_validation: 200,
            noise_variance: 0.1,
            grid_points: 500,
            grid_m: vec![3, 5, 7, 10, 15, 20, 30, 50],
            noise_multipliers: vec![1.0, 3.0, 10.0, 30.0, 100.0, 300.0],
            profile: Profile::Epanechnikov,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerOutcome {
    pub gp_curve: Vec<CurvePoint>,
    pub lsgpr_curve: Vec<CurvePoint>,
    /// MSE of the predictive mean against the noiseless function on the grid.
    pub gp_test_mse: f64,
    pub lsgpr_test_mse: f64,
    /// Average neighbour count over the grid queries.
    pub mean_neighbors: f64,
    pub hypers: FittedHypers,
    /// Noise variance of the localized model.
    pub local_noise: f64,
    pub bandwidth: BandwidthSearch,
}

impl DopplerOutcome {
    pub fn summary_line(&self) -> String {
        let m = match self.bandwidth.best {
            BandwidthPolicy::MinNeighbors(m) => m.to_string(),
            BandwidthPolicy::FixedH(h) => format!("h={h}"),
        };
        format!(
            "gp_test_mse={} lsgpr_test_mse={} mean_neighbors={} selected_m={} lengthscale={} amplitude={} noise={} local_noise={}",
            self.gp_test_mse,
            self.lsgpr_test_mse,
            self.mean_neighbors,
            m,
            self.hypers.params.lengthscale,
            self.hypers.params.amplitude,
            self.hypers.noise,
            self.local_noise
        )
    }
}

/// Global GP with marginal-likelihood hyperparameters against the localized
/// model. The localized model keeps the fitted lengthscale and amplitude;
/// its neighbour count and a multiple of the fitted noise variance are
/// chosen on a separate validation sample, since the localized noise
/// `σ² / k_h` carries the `1/h` weight scale.
pub fn run_doppler(cfg: &DopplerConfig) -> Result<DopplerOutcome> {
    let train = gen_doppler(cfg.n, cfg.noise_variance, cfg.seed)?;
    let val = gen_doppler(cfg.n_validation.max(1), cfg.noise_variance, cfg.seed.wrapping_add(0x5eed))?;
    let vy = variance(&train.y).max(1e-12);
    let base = CovKernelParams::rbf(1.0, vy);
    let hypers = optimize_hypers_multistart(train.x.view(), &train.y, &base, 0.1 * vy, &cfg.optimizer)?;

    let grid = linspace(0.0, 1.0, cfg.grid_points);
    let truth: Vec<f64> = grid.iter().map(|&x| doppler_fn(x)).collect();
    let gx = column(&grid);

    let gp = GpModel::fit(train.x.view(), &train.y, hypers.params, hypers.noise)?;
    let gp_pred = gp.predict_many(gx.view())?;

    let spec = LocalKernelSpec::new(cfg.profile, 1)?;
    let policies: Vec<BandwidthPolicy> = cfg
        .grid_m
        .iter()
        .filter(|&&m| m >= 1 && m <= cfg.n)
        .map(|&m| BandwidthPolicy::MinNeighbors(m))
        .collect();
    let mut best: Option<(f64, BandwidthSearch)> = None;
    for &mult in &cfg.noise_multipliers {
        let noise = mult * hypers.noise;
        let search = grid_search_h(
            train.x.view(),
            &train.y,
            val.x.view(),
            &val.y,
            &hypers.params,
            noise,
            &spec,
            &policies,
        )?;
        // strict improvement keeps the smallest multiplier on ties
        if best.as_ref().is_none_or(|(_, b)| search.best_mse < b.best_mse) {
            best = Some((noise, search));
        }
    }
    let (local_noise, bandwidth) = best.ok_or_else(|| Error::invalid("noise_multipliers is empty"))?;
    let local = LocalGp::new(train.x.view(), &train.y, hypers.params, local_noise, spec)?;
    let local_pred = collect_predictions(local.predict_batch(bandwidth.best, gx.view()))?;

    let means = |p: &[PredictiveDistribution]| p.iter().map(|d| d.mean).collect::<Vec<_>>();
    let gp_test_mse = mse(&means(&gp_pred), &truth)?;
    let lsgpr_test_mse = mse(&means(&local_pred), &truth)?;
    let mean_neighbors =
        local_pred.iter().map(|p| p.neighbor_count as f64).sum::<f64>() / local_pred.len().max(1) as f64;
    let curve = |preds: Vec<PredictiveDistribution>| {
        grid.iter()
            .zip(&truth)
            .zip(preds)
            .map(|((&x, &t), p)| CurvePoint { x, truth: t, prediction: p })
            .collect()
    };
    Ok(DopplerOutcome {
        gp_curve: curve(gp_pred),
        lsgpr_curve: curve(local_pred),
        gp_test_mse,
        lsgpr_test_mse,
        mean_neighbors,
        hypers,
        local_noise,
        bandwidth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSampleConfig {
    /// `None` draws from the unlocalized prior.
    pub profile: Option<Profile>,
    pub h: f64,
    pub x0: f64,
    pub lengthscale: f64,
    pub amplitude: f64,
    pub grid_points: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PriorSampleConfig {
    fn default() -> Self {
        Self {
            profile: None,
            h: 0.5,
            x0: 0.0,
            lengthscale: 0.3,
            amplitude: 1.0,
            grid_points: 200,
            samples: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSamples {
    pub x: Vec<f64>,
    /// `samples[s][i]` is sample `s` at `x[i]`.
    pub samples: Vec<Vec<f64>>,
    /// Pointwise prior standard deviation.
    pub std_dev: Vec<f64>,
}

/// Samples from the exponential-kernel prior on `[−1, 1]`, localized at `x0`
/// when a profile is given.
pub fn prior_samples(cfg: &PriorSampleConfig) -> Result<PriorSamples> {
    let params = CovKernelParams::exponential(cfg.lengthscale, cfg.amplitude);
    params.validate()?;
    let x = linspace(-1.0, 1.0, cfg.grid_points);
    let n = x.len();
    let mut cov = Array2::zeros((n, n));
    match cfg.profile {
        None => {
            let xs = column(&x);
            cov = crate::kernel::gram_symmetric(&params, xs.view());
        }
        Some(profile) => {
            let spec = LocalKernelSpec::new(profile, 1)?;
            for i in 0..n {
                for j in i..n {
                    let v = localized_cov(&params, &spec, cfg.h, &[cfg.x0], &[x[i]], &[x[j]])?;
                    cov[[i, j]] = v;
                    cov[[j, i]] = v;
                }
            }
        }
    }
    let std_dev = (0..n).map(|i| cov[[i, i]].max(0.0).sqrt()).collect();
    let samples = sample_gaussian(&cov, cfg.seed, cfg.samples)?;
    Ok(PriorSamples { x, samples, std_dev })
}

/// CSV with columns `x,sample1,…,sampleK`.
pub fn samples_csv(s: &PriorSamples) -> String {
    let mut out = String::from("x");
    for k in 1..=s.samples.len() {
        let _ = write!(out, ",sample{k}");
    }
    out.push('\n');
    for (i, x) in s.x.iter().enumerate() {
        let _ = write!(out, "{x}");
        for sample in &s.samples {
            let _ = write!(out, ",{}", sample[i]);
        }
        out.push('\n');
    }
    out
}

/// A method in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gp,
    Lsgpr(Profile),
    Knn,
    /// Nadaraya–Watson with the bandwidth adapted to `m` neighbours.
    Nw(Profile),
}

impl Method {
    /// Parses `gp`, `knn`, `lsgpr`, `nw`, optionally suffixed with a profile
    /// as in `lsgpr-hilbert`; bare `lsgpr`/`nw` use `default_profile`.
    pub fn parse(s: &str, default_profile: Profile) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, tail) = match s.split_once(['-', ':']) {
            Some((h, t)) => (h, Some(t)),
            None => (s.as_str(), None),
        };
        let profile = tail.map(str::parse::<Profile>).transpose()?.unwrap_or(default_profile);
        match (head, tail) {
            ("gp", None) => Ok(Method::Gp),
            ("knn", None) => Ok(Method::Knn),
            ("lsgpr", _) => Ok(Method::Lsgpr(profile)),
            ("nw", _) => Ok(Method::Nw(profile)),
            _ => Err(Error::invalid(format!("unknown method {s:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Method::Gp => "gp".into(),
            Method::Knn => "knn".into(),
            Method::Lsgpr(p) => format!("lsgpr-{}", p.name()),
            Method::Nw(p) => format!("nw-{}", p.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub splits: usize,
    /// Train, validation and test fractions. Cross-validation runs on the
    /// union of train and validation.
    pub fractions: (f64, f64, f64),
    pub folds: usize,
    pub seed: u64,
    pub preprocess: Preprocess,
    pub family: CovFamily,
    /// Neighbour counts for the localized methods.
    pub grid_m: Vec<usize>,
    /// Neighbour counts for KNN.
    pub grid_k: Vec<usize>,
    /// Lengthscales as multiples of the median pairwise distance.
    pub lengthscale_factors: Vec<f64>,
    /// Noise variances as multiples of the target variance.
    pub noise_factors: Vec<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Lsgpr(Profile::Hilbert), Method::Gp, Method::Knn],
            splits: 10,
            fractions: (0.7, 0.15, 0.15),
            folds: 3,
            seed: 0,
            preprocess: Preprocess::MinMax,
            family: CovFamily::Rbf,
            grid_m: crate::selection::DEFAULT_GRID_M.to_vec(),
            grid_k: vec![1, 2, 3, 5, 10, 20],
            lengthscale_factors: DEFAULT_LENGTHSCALE_FACTORS.to_vec(),
            noise_factors: DEFAULT_NOISE_FACTORS.to_vec(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.splits == 0 {
            return Err(Error::invalid("at least one split is required"));
        }
        SplitSpec::new(self.fractions.0, self.fractions.1, self.fractions.2, 0)?;
        if self.grid_m.is_empty() || self.grid_k.is_empty() {
            return Err(Error::invalid("neighbour grids must be non-empty"));
        }
        if self.lengthscale_factors.is_empty() || self.noise_factors.is_empty() {
            return Err(Error::invalid("lengthscale and noise grids must be non-empty"));
        }
        Ok(())
    }

    /// Seed of split `s`.
    pub fn split_seed(&self, s: usize) -> u64 {
        self.seed.wrapping_add(s as u64)
    }
}

fn base_params(family: CovFamily, lengthscale: f64, amplitude: f64) -> CovKernelParams {
    match family {
        CovFamily::Rbf => CovKernelParams::rbf(lengthscale, amplitude),
        CovFamily::Exponential => CovKernelParams::exponential(lengthscale, amplitude),
        CovFamily::Polynomial => CovKernelParams::polynomial(2, 1.0).with_lengthscale(lengthscale).with_amplitude(amplitude),
    }
}

/// Predictions of `method` with hyperparameters `cell`, trained on
/// `(tx, ty)` and evaluated at the rows of `qx`.
pub fn predict_method(
    method: Method,
    family: CovFamily,
    amplitude: f64,
    cell: &GridCell,
    tx: ArrayView2<f64>,
    ty: &[f64],
    qx: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    let n = ty.len();
    let m = cell.m.map(|m| m.min(n));
    let rows = qx.rows().into_iter().map(|r| r.to_vec());
    match method {
        Method::Gp => {
            let model = GpModel::fit(tx, ty, base_params(family, cell.lengthscale, amplitude), cell.noise)?;
            Ok(model.predict_many(qx)?.into_iter().map(|p| p.mean).collect())
        }
        Method::Lsgpr(profile) => {
            let spec = LocalKernelSpec::new(profile, tx.ncols())?;
            let params = base_params(family, cell.lengthscale, amplitude);
            let policy = BandwidthPolicy::MinNeighbors(m.ok_or_else(|| Error::invalid("lsgpr needs m"))?);
            let model = LocalGp::new(tx, ty, params, cell.noise, spec)?;
            Ok(collect_predictions(model.predict_batch(policy, qx))?.into_iter().map(|p| p.mean).collect())
        }
        Method::Knn => {
            let k = m.ok_or_else(|| Error::invalid("knn needs k"))?;
            rows.map(|x0| knn_predict(tx, ty, k, &x0)).collect()
        }
        Method::Nw(profile) => {
            let spec = LocalKernelSpec::new(profile, tx.ncols())?;
            let m = m.ok_or_else(|| Error::invalid("nw needs m"))?;
            rows.map(|x0| {
                let h = adapt_bandwidth(tx, &x0, m, &spec)?;
                Ok(nadaraya_watson(tx, ty, &spec, h, &x0)?.value)
            })
            .collect()
        }
    }
}

fn cv_config(method: Method, cfg: &BenchmarkConfig, pool: &Dataset, seed: u64) -> CvConfig {
    let med = median_pairwise_distance(pool.x.view(), 1000);
    let mut vy = variance(&pool.y);
    if !(vy > 0.0) {
        vy = 1.0;
    }
    let ls = cfg.lengthscale_factors.iter().map(|f| f * med).collect();
    let noise = cfg.noise_factors.iter().map(|f| f * vy).collect();
    let dedup = |mut v: Vec<usize>| {
        // neighbour counts above the fold size collapse onto it
        let cap = pool.len() - pool.len().div_ceil(cfg.folds);
        v.iter_mut().for_each(|m| *m = (*m).min(cap.max(1)));
        v.sort_unstable();
        v.dedup();
        v
    };
    match method {
        Method::Gp => CvConfig { folds: cfg.folds, grid_m: vec![], grid_lengthscale: ls, grid_noise: noise, seed },
        Method::Lsgpr(_) => CvConfig {
            folds: cfg.folds,
            grid_m: dedup(cfg.grid_m.clone()),
            grid_lengthscale: ls,
            grid_noise: noise,
            seed,
        },
        Method::Knn => CvConfig {
            folds: cfg.folds,
            grid_m: dedup(cfg.grid_k.clone()),
            grid_lengthscale: vec![1.0],
            grid_noise: vec![1.0],
            seed,
        },
        Method::Nw(_) => CvConfig {
            folds: cfg.folds,
            grid_m: dedup(cfg.grid_m.clone()),
            grid_lengthscale: vec![1.0],
            grid_noise: vec![1.0],
            seed,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub method: String,
    pub split: usize,
    pub mse: f64,
    pub selected: Option<GridCell>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub report: BenchReport,
    pub runs: Vec<SplitResult>,
}

impl BenchmarkOutcome {
    pub fn all_failed(&self) -> bool {
        self.runs.iter().all(|r| r.error.is_some())
    }
}

fn run_one(method: Method, cfg: &BenchmarkConfig, pool: &Dataset, test: &Dataset, seed: u64) -> Result<(f64, GridCell)> {
    let cv = cv_config(method, cfg, pool, seed);
    let amplitude = {
        let v = variance(&pool.y);
        if v > 0.0 { v } else { 1.0 }
    };
    let result = kfold_cv(pool.x.view(), &pool.y, &cv, |cell, tx, ty, vx| {
        predict_method(method, cfg.family, amplitude, cell, tx, ty, vx)
    })?;
    if !result.best_score.is_finite() {
        return Err(Error::Numerical("every hyperparameter setting failed in cross-validation".into()));
    }
    let preds = predict_method(method, cfg.family, amplitude, &result.best, pool.x.view(), &pool.y, test.x.view())?;
    Ok((mse(&preds, &test.y)?, result.best))
}

/// Repeated-split protocol: preprocess once, then for every split select
/// hyperparameters by k-fold CV on train ∪ validation, refit there and
/// score on the test part. A failing method is recorded as `NaN` for that
/// split and the others continue.
// split index is both a seed offset and a column of the table
#[allow(clippy::needless_range_loop)]
pub fn run_benchmark(data: &Dataset, cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let data = preprocess(data, cfg.preprocess);
    let k = cfg.methods.len();
    let mut table = vec![vec![f64::NAN; cfg.splits]; k];
    let mut runs = Vec::new();
    for s in 0..cfg.splits {
        let seed = cfg.split_seed(s);
        let spec = SplitSpec::new(cfg.fractions.0, cfg.fractions.1, cfg.fractions.2, seed)?;
        let (tr, va, te) = split_indices(data.len(), &spec)?;
        if te.is_empty() {
            return Err(Error::InvalidSplit("the test part is empty".into()));
        }
        let pool_idx: Vec<usize> = tr.iter().chain(&va).copied().collect();
        let pool = data.subset(&pool_idx);
        let test = data.subset(&te);
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let outcome = run_one(method, cfg, &pool, &test, seed);
            let (mse, selected, error) = match outcome {
                Ok((v, c)) => (v, Some(c), None),
                Err(e) => (f64::NAN, None, Some(e.to_string())),
            };
            table[mi][s] = mse;
            runs.push(SplitResult { method: method.label(), split: s, mse, selected, error });
        }
    }
    let report = BenchReport::new(cfg.methods.iter().map(Method::label).collect(), table)?;
    Ok(BenchmarkOutcome { report, runs })
}

/// Long format: `method,split,mse`.
pub fn report_csv(r: &BenchReport) -> String {
    let mut s = String::from("method,split,mse\n");
    for (m, row) in r.methods.iter().zip(&r.mse) {
        for (i, v) in row.iter().enumerate() {
            let _ = writeln!(s, "{m},{i},{v}");
        }
    }
    s
}

/// `method,mean_mse,sd_mse,splits,failed` with the population standard
/// deviation, followed by the resolved grids.
pub fn summary_csv(r: &BenchReport, cfg: &BenchmarkConfig) -> String {
    let list = |v: Vec<String>| v.join(" ");
    let mut s = String::from("method,mean_mse,sd_mse,splits,failed,preprocess,folds,seed,grid_m,grid_k,lengthscale_factors,noise_factors\n");
    for (i, m) in r.methods.iter().enumerate() {
        let failed = r.mse[i].iter().filter(|v| v.is_nan()).count();
        let _ = writeln!(
            s,
            "{m},{},{},{},{failed},{:?},{},{},{},{},{},{}",
            r.means[i],
            r.std_devs[i],
            r.mse[i].len(),
            cfg.preprocess,
            cfg.folds,
            cfg.seed,
            list(cfg.grid_m.iter().map(ToString::to_string).collect()),
            list(cfg.grid_k.iter().map(ToString::to_string).collect()),
            list(cfg.lengthscale_factors.iter().map(ToString::to_string).collect()),
            list(cfg.noise_factors.iter().map(ToString::to_string).collect()),
        );
    }
    s
}

/// Square table: the entry in row `a`, column `b` is the one-sided p-value
/// for "a has lower MSE than b"; `NA` where undefined.
pub fn pvalues_csv(r: &BenchReport) -> String {
    let mut s = String::from("method");
    for m in &r.methods {
        let _ = write!(s, ",{m}");
    }
    s.push('\n');
    for (i, m) in r.methods.iter().enumerate() {
        s.push_str(m);
        for p in &r.p_values[i] {
            match p {
                Some(p) => {
                    let _ = write!(s, ",{p}");
                }
                None => s.push_str(",NA"),
            }
        }
        s.push('\n');
    }
    s
}

/// Hyperparameters chosen per split: `method,split,m,lengthscale,noise,error`.
pub fn selections_csv(runs: &[SplitResult]) -> String {
    let mut s = String::from("method,split,m,lengthscale,noise,error\n");
    for r in runs {
        let (m, l, n) = match r.selected {
            Some(c) => (c.m.map_or("NA".into(), |m| m.to_string()), c.lengthscale.to_string(), c.noise.to_string()),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(s, "{},{},{m},{l},{n},{err}", r.method, r.split);
    }
    s
}

/// Rows `query columns…,mean,variance,neighbor_count`.
pub fn predictions_csv(names: &[String], queries: ArrayView2<f64>, preds: &[PredictiveDistribution]) -> String {
    let mut s = String::new();
    for n in names {
        let _ = write!(s, "{n},");
    }
    s.push_str("mean,variance,neighbor_count\n");
    for (row, p) in queries.axis_iter(Axis(0)).zip(preds) {
        for v in row {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{},{},{}", p.mean, p.variance, p.neighbor_count);
    }
    s
}
