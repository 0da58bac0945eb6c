//! Exact Gaussian process regression.
//!
//! Targets are modelled as `y ~ N(0, K_XX + Σ)` where `Σ` is `σ² I` for the
//! usual homoscedastic model, or an arbitrary non-negative diagonal for the
//! heteroscedastic variant used by the localized posterior. Prediction
//! follows the textbook Cholesky route: `α = (K + Σ)⁻¹ y`, mean `k₀ᵀ α` and
//! variance `K(x0, x0) − ‖L⁻¹ k₀‖²`.


use ndarray::{Array2, ArrayView2};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{gram_symmetric, median_pairwise_distance, CovFamily, CovKernelParams, Covariance};
use crate::linalg::{cholesky, CholeskyFactor};
use crate::optim::{maximize, LbfgsConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Variances in `[-VARIANCE_CLAMP, 0)` are rounded up to zero; anything
/// more negative is reported as a numerical error.
pub const VARIANCE_CLAMP: f64 = 1e-10;

/// Posterior mean and variance of `f(x0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
    /// Number of training points that entered the solve (`n` for global
    /// predictions, `|I|` for localized ones).
    pub neighbor_count: usize,
    /// Set when no training point had positive weight and the prior was
    /// returned instead.
    pub empty_neighborhood: bool,
}

impl PredictiveDistribution {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Lower end of the central 95% band.
    pub fn lower95(&self) -> f64 {
        self.mean - 1.96 * self.std_dev()
    }

    pub fn upper95(&self) -> f64 {
        self.mean + 1.96 * self.std_dev()
    }
}

pub(crate) fn clamp_variance(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -VARIANCE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("negative predictive variance {v:e}")))
    }
}

pub(crate) fn to_rows(x: ArrayView2<f64>) -> Array2<f64> {
    x.as_standard_layout().into_owned()
}

fn validate_noise(noise: f64) -> Result<()> {
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be positive, got {noise}")));
    }
    Ok(())
}

/// A fitted exact GP.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Array2<f64>,
    y: Vec<f64>,
    params: CovKernelParams,
    noise: Vec<f64>,
    factor: CholeskyFactor,
    alpha: Vec<f64>,
}

impl GpModel {
    /// Factorizes `K_XX + σ² I` and precomputes `α`. Costs `O(n³)`.
    pub fn fit(x: ArrayView2<f64>, y: &[f64], params: CovKernelParams, noise: f64) -> Result<Self> {
        validate_noise(noise)?;
        Self::fit_heteroscedastic(x, y, params, &vec![noise; y.len()])
    }

    /// Fits with a per-point noise variance; zero entries mean the
    /// corresponding observation is noise free.
    pub fn fit_heteroscedastic(
        x: ArrayView2<f64>,
        y: &[f64],
        params: CovKernelParams,
        noise: &[f64],
    ) -> Result<Self> {
        params.validate()?;
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Empty("training set".into()));
        }
        check_dim(n, y.len())?;
        check_dim(n, noise.len())?;
        if let Some(v) = noise.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("noise variances must be finite and non-negative, got {v}")));
        }
        let x = to_rows(x);
        let mut k = gram_symmetric(&params, x.view());
        for (i, s) in noise.iter().enumerate() {
            k[[i, i]] += s;
        }
        let factor = cholesky(&k)?;
        let alpha = factor.solve(y)?;
        Ok(Self {
            x,
            y: y.to_vec(),
            params,
            noise: noise.to_vec(),
            factor,
            alpha,
        })
    }

    pub fn params(&self) -> &CovKernelParams {
        &self.params
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Homoscedastic noise level; for heteroscedastic fits this is the
    /// first entry.
    pub fn noise(&self) -> f64 {
        self.noise[0]
    }

    pub fn predict(&self, x0: &[f64]) -> Result<PredictiveDistribution> {
        check_dim(self.dim(), x0.len())?;
        let d = self.dim();
        let flat = self.x.as_slice().unwrap();
        let k0: Vec<f64> = flat.chunks_exact(d).map(|xi| self.params.cov(x0, xi)).collect();
        let mean = k0.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.factor.solve_lower(&k0)?;
        let prior = self.params.cov(x0, x0);
        let variance = clamp_variance(prior - v.iter().map(|t| t * t).sum::<f64>())?;
        Ok(PredictiveDistribution {
            mean,
            variance,
            neighbor_count: self.len(),
            empty_neighborhood: false,
        })
    }

    pub fn predict_many(&self, queries: ArrayView2<f64>) -> Result<Vec<PredictiveDistribution>> {
        queries
            .rows()
            .into_iter()
            .map(|q| self.predict(&q.to_vec()))
            .collect()
    }

    /// `−½ yᵀα − ½ log|K + Σ| − (n/2) log 2π`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let fit: f64 = self.y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * fit - 0.5 * self.factor.log_det() - 0.5 * self.len() as f64 * LN_2PI
    }
}

pub fn fit(x: ArrayView2<f64>, y: &[f64], params: CovKernelParams, noise: f64) -> Result<GpModel> {
    GpModel::fit(x, y, params, noise)
}

pub fn predict(model: &GpModel, x0: &[f64]) -> Result<PredictiveDistribution> {
    model.predict(x0)
}

pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    model.log_marginal_likelihood()
}

/// Marginal log-likelihood and its gradient with respect to
/// `(log ℓ, log amplitude, log σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MllGradient {
    pub value: f64,
    pub gradient: [f64; 3],
}

/// Objective over log-hyperparameters with the pairwise geometry cached.
struct MllObjective<'a> {
    y: &'a [f64],
    family: CovFamily,
    base: CovKernelParams,
    // squared distances for stationary kernels, inner products otherwise
    pair: Array2<f64>,
}

impl<'a> MllObjective<'a> {
    fn new(x: ArrayView2<f64>, y: &'a [f64], base: CovKernelParams) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Empty("training set".into()));
        }
        check_dim(n, y.len())?;
        let rows = to_rows(x);
        let d = rows.ncols();
        let flat = rows.as_slice().unwrap();
        let row = |i: usize| &flat[i * d..(i + 1) * d];
        let mut pair = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = match base.family {
                    CovFamily::Polynomial => row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum(),
                    _ => crate::kernel::sq_dist(row(i), row(j)),
                };
                pair[[i, j]] = v;
                pair[[j, i]] = v;
            }
        }
        Ok(Self {
            y,
            family: base.family,
            base,
            pair,
        })
    }

    fn params(&self, theta: &[f64]) -> (CovKernelParams, f64) {
        let p = CovKernelParams {
            lengthscale: theta[0].exp(),
            amplitude: theta[1].exp(),
            ..self.base
        };
        (p, theta[2].exp())
    }

    /// Kernel value and its derivative with respect to `log ℓ` for a cached
    /// pair quantity.
    #[inline]
    fn kernel_and_dlog_ell(&self, p: &CovKernelParams, pair: f64) -> (f64, f64) {
        let ell2 = p.lengthscale * p.lengthscale;
        match self.family {
            CovFamily::Rbf => {
                let k = p.amplitude * (-pair / (2.0 * ell2)).exp();
                (k, k * pair / ell2)
            }
            CovFamily::Exponential => {
                let r = pair.sqrt();
                let k = p.amplitude * (-r / p.lengthscale).exp();
                (k, k * r / p.lengthscale)
            }
            CovFamily::Polynomial => {
                let base = p.offset + pair / ell2;
                let deg = p.degree as i32;
                let k = p.amplitude * base.powi(deg);
                let dk = p.amplitude * deg as f64 * base.powi(deg - 1) * (-2.0 * pair / ell2);
                (k, dk)
            }
        }
    }

    fn system(&self, theta: &[f64]) -> Option<(Array2<f64>, Array2<f64>, f64)> {
        let (p, noise) = self.params(theta);
        if !(p.lengthscale.is_finite() && p.amplitude.is_finite() && noise.is_finite())
            || p.lengthscale <= 0.0
            || p.amplitude <= 0.0
            || noise <= 0.0
        {
            return None;
        }
        let n = self.y.len();
        let mut k = Array2::zeros((n, n));
        let mut dk = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let (v, dv) = self.kernel_and_dlog_ell(&p, self.pair[[i, j]]);
                k[[i, j]] = v;
                k[[j, i]] = v;
                dk[[i, j]] = dv;
                dk[[j, i]] = dv;
            }
            k[[i, i]] += noise;
        }
        Some((k, dk, noise))
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let Some((k, _, _)) = self.system(theta) else {
            return f64::NAN;
        };
        let Ok(factor) = cholesky(&k) else {
            return f64::NAN;
        };
        let Ok(alpha) = factor.solve(self.y) else {
            return f64::NAN;
        };
        let fit: f64 = self.y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        -0.5 * fit - 0.5 * factor.log_det() - 0.5 * self.y.len() as f64 * LN_2PI
    }

    fn value_grad(&self, theta: &[f64]) -> Option<MllGradient> {
        let (k, dk, noise) = self.system(theta)?;
        let factor = cholesky(&k).ok()?;
        let alpha = factor.solve(self.y).ok()?;
        let inv = factor.inverse();
        let n = self.y.len();
        let fit: f64 = self.y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let value = -0.5 * fit - 0.5 * factor.log_det() - 0.5 * n as f64 * LN_2PI;

        // ∂/∂θ = ½ αᵀ D α − ½ tr(A⁻¹ D) with A = K + σ² I
        let (mut q_ell, mut q_amp, mut t_ell, mut t_amp) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let kf = if i == j { k[[i, j]] - noise } else { k[[i, j]] };
                let aa = alpha[i] * alpha[j];
                let w = inv[[i, j]];
                q_ell += aa * dk[[i, j]];
                t_ell += w * dk[[i, j]];
                q_amp += aa * kf;
                t_amp += w * kf;
            }
        }
        let alpha_sq: f64 = alpha.iter().map(|a| a * a).sum();
        let trace: f64 = (0..n).map(|i| inv[[i, i]]).sum();
        let gradient = [
            0.5 * (q_ell - t_ell),
            0.5 * (q_amp - t_amp),
            0.5 * noise * (alpha_sq - trace),
        ];
        Some(MllGradient { value, gradient })
    }
}

fn log_theta(params: &CovKernelParams, noise: f64) -> [f64; 3] {
    [params.lengthscale.ln(), params.amplitude.ln(), noise.ln()]
}

/// Analytic gradient of the marginal log-likelihood in log-parameter space,
/// ordered as `(log ℓ, log amplitude, log σ²)`.
pub fn mll_gradient(
    x: ArrayView2<f64>,
    y: &[f64],
    params: &CovKernelParams,
    noise: f64,
) -> Result<MllGradient> {
    params.validate()?;
    validate_noise(noise)?;
    let obj = MllObjective::new(x, y, *params)?;
    obj.value_grad(&log_theta(params, noise))
        .ok_or_else(|| Error::Numerical("marginal likelihood is not finite".into()))
}

/// Settings for marginal-likelihood maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Stop once the gradient norm in log space falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Lengthscale restarts, as multiples of the median pairwise distance.
    pub restart_factors: [f64; 3],
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-5,
            max_iter: 200,
            restart_factors: [0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedHypers {
    pub params: CovKernelParams,
    pub noise: f64,
    pub mll: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes the marginal log-likelihood over `(ℓ, amplitude, σ²)` from a
/// single starting point, optimizing in log space.
pub fn optimize_hypers(
    x: ArrayView2<f64>,
    y: &[f64],
    init: &CovKernelParams,
    init_noise: f64,
    config: &OptimizerConfig,
) -> Result<FittedHypers> {
    init.validate()?;
    validate_noise(init_noise)?;
    let obj = MllObjective::new(x, y, *init)?;
    let theta0 = log_theta(init, init_noise).to_vec();
    let cfg = LbfgsConfig {
        grad_tol: config.grad_tol,
        max_iter: config.max_iter,
        memory: 7,
    };
    let out = maximize(
        |t| obj.value(t),
        |t| match obj.value_grad(t) {
            Some(g) => (g.value, g.gradient.to_vec()),
            None => (f64::NAN, vec![f64::NAN; 3]),
        },
        theta0,
        cfg,
    )
    .ok_or_else(|| Error::Numerical("marginal likelihood is not finite at the initial point".into()))?;
    let (params, noise) = obj.params(&out.x);
    Ok(FittedHypers {
        params,
        noise,
        mll: out.value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// Runs [`optimize_hypers`] from lengthscales `{0.1, 1, 10} × median
/// pairwise distance` and keeps the best marginal likelihood. Restarts that
/// fail numerically are skipped; an error is returned only if all fail.
pub fn optimize_hypers_multistart(
    x: ArrayView2<f64>,
    y: &[f64],
    base: &CovKernelParams,
    init_noise: f64,
    config: &OptimizerConfig,
) -> Result<FittedHypers> {
    let med = median_pairwise_distance(x, 1000);
    let mut best: Option<FittedHypers> = None;
    let mut last_err = None;
    for factor in config.restart_factors {
        let init = base.with_lengthscale(factor * med);
        match optimize_hypers(x, y, &init, init_noise, config) {
            Ok(fit) => {
                if best.is_none_or(|b| fit.mll > b.mll) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Numerical("no restart succeeded".into())))
}
