use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use lsgpr::bench::{
    curve_csv, pvalues_csv, predictions_csv, prior_samples, report_csv, run_benchmark, run_doppler,
    samples_csv, selections_csv, summary_csv, BenchmarkConfig, DopplerConfig, Method, PriorSampleConfig,
};
use lsgpr::data::{load_csv, load_table, CsvOptions, Delimiter, Preprocess, TargetColumn};
use lsgpr::gp::{optimize_hypers_multistart, GpModel, OptimizerConfig};
use lsgpr::kernel::{CovFamily, CovKernelParams, LocalKernelSpec, Profile};
use lsgpr::local::{BandwidthPolicy, LocalGp};
use lsgpr::selection::variance;

mod config;

use config::Settings;

/// Environment variable naming the directory searched for dataset files.
const DATA_DIR_ENV: &str = "LSGP_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "lsgpr", version, about = "Locally smoothed Gaussian process regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Global GP vs localized GP on noisy Doppler data; writes predictive curves.
    DopplerDemo(DopplerFlags),
    /// Samples from an exponential-kernel prior, optionally localized at x0.
    PriorSamples(PriorFlags),
    /// Repeated-split benchmark with cross-validated hyperparameters.
    Benchmark(BenchmarkFlags),
    /// Predictions at query points from a training file.
    Predict(PredictFlags),
}

fn help_for(key: &str) -> &'static str {
    match key {
        "seed" => "Random seed",
        "out" => "Output directory",
        "data" => "Training data file (relative paths are also looked up in $LSGP_DATA_DIR)",
        "target" => "Target column: name, zero-based index or `last`",
        "delimiter" => "comma, whitespace or auto (by file extension)",
        "header" => "true, false or auto",
        "methods" => "Comma-separated methods: gp, lsgpr, knn, nw (optionally lsgpr-<profile>)",
        "method" => "gp or lsgpr",
        "profile" => "Localizing profile: rectangular, epanechnikov, gaussian, hilbert (prior-samples also accepts none)",
        "splits" => "Number of repeated train/test splits",
        "fractions" => "Train, validation and test fractions",
        "folds" => "Cross-validation folds",
        "preprocess" => "minmax, standardize or none",
        "family" => "Covariance family: rbf, exponential or polynomial",
        "grid_m" => "Neighbour counts for the localized methods",
        "grid_k" => "Neighbour counts for KNN",
        "lengthscale_factors" => "Lengthscale grid as multiples of the median pairwise distance",
        "noise_factors" => "Noise grid as multiples of the target variance",
        "noise_multipliers" => "Localized noise grid as multiples of the fitted noise variance",
        "n" => "Number of training points",
        "n_validation" => "Number of validation points",
        "noise_variance" => "Observation noise level (a variance unless --noise-is-sd)",
        "noise_is_sd" => "Interpret noise_variance as a standard deviation",
        "grid_points" => "Number of output grid points",
        "h" => "Localizing bandwidth",
        "x0" => "Localization centre",
        "lengthscale" => "Kernel lengthscale (fitted by marginal likelihood if omitted)",
        "amplitude" => "Kernel amplitude (fitted by marginal likelihood if omitted)",
        "noise" => "Noise variance (fitted by marginal likelihood if omitted)",
        "samples" => "Number of samples",
        "queries" => "Query file with feature columns only",
        "min_neighbors" => "Adapt the bandwidth to at least this many neighbours",
        _ => "",
    }
}

macro_rules! flag_set {
    ($name:ident { $($field:ident),* $(,)? } switches { $($switch:ident),* $(,)? }) => {
        #[derive(Debug, Args)]
        struct $name {
            /// Flat `key = value` configuration file; flags override it.
            #[arg(long)]
            config: Option<PathBuf>,
            $(
                #[arg(long, value_name = "VALUE", help = help_for(stringify!($field)))]
                $field: Option<String>,
            )*
            $(
                #[arg(long, help = help_for(stringify!($switch)))]
                $switch: bool,
            )*
        }

        impl $name {
            const KEYS: &'static [&'static str] = &[$(stringify!($field),)* $(stringify!($switch),)*];

            fn settings(&self) -> Result<Settings> {
                let mut set: Vec<(&'static str, String)> = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        set.push((stringify!($field), v.clone()));
                    }
                )*
                $(
                    if self.$switch {
                        set.push((stringify!($switch), "true".to_string()));
                    }
                )*
                Settings::load(self.config.as_deref(), set, Self::KEYS)
            }
        }
    };
}

flag_set!(DopplerFlags {
    seed, out, profile, n, n_validation, noise_variance, grid_points, grid_m, noise_multipliers,
} switches { noise_is_sd });

flag_set!(PriorFlags {
    seed, out, profile, h, x0, lengthscale, amplitude, grid_points, samples,
} switches {});

flag_set!(BenchmarkFlags {
    seed, out, data, target, delimiter, header, methods, profile, splits, fractions, folds, preprocess,
    family, grid_m, grid_k, lengthscale_factors, noise_factors,
} switches {});

flag_set!(PredictFlags {
    out, data, queries, target, delimiter, header, method, profile, family, lengthscale, amplitude,
    noise, h, min_neighbors,
} switches {});

/// Marks errors caused by invalid configuration.
#[derive(Debug)]
struct ConfigError;

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid configuration")
    }
}

fn config<T>(r: Result<T>) -> Result<T> {
    r.context(ConfigError)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use lsgpr::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidParameter(_) | E::InvalidSplit(_) => 2,
                E::NotSymmetric(_) | E::Singular { .. } | E::QueryFailed { .. } | E::Numerical(_) => 4,
                _ => 3,
            };
        }
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    3
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = PathBuf::from(s.raw("out").unwrap_or("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// `path` as given if it exists, otherwise relative to `$LSGP_DATA_DIR`.
fn resolve_data(path: &str) -> PathBuf {
    let p = PathBuf::from(path);
    if p.exists() || p.is_absolute() {
        return p;
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => {
            let candidate = Path::new(&dir).join(&p);
            if candidate.exists() {
                candidate
            } else {
                p
            }
        }
        None => p,
    }
}

fn delimiter_for(s: &Settings, path: &Path) -> Result<Delimiter> {
    match s.raw("delimiter").unwrap_or("auto") {
        "comma" | "," => Ok(Delimiter::Comma),
        "whitespace" | "space" | "tab" => Ok(Delimiter::Whitespace),
        "auto" => Ok(match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Delimiter::Comma,
            _ => Delimiter::Whitespace,
        }),
        other => bail!("unknown delimiter {other:?}"),
    }
}

fn header_mode(s: &Settings) -> Result<Option<bool>> {
    match s.raw("header").unwrap_or("auto") {
        "auto" => Ok(None),
        "true" | "yes" => Ok(Some(true)),
        "false" | "no" => Ok(Some(false)),
        other => bail!("invalid header mode {other:?}"),
    }
}

fn csv_options(s: &Settings, path: &Path) -> Result<CsvOptions> {
    Ok(CsvOptions {
        delimiter: delimiter_for(s, path)?,
        header: header_mode(s)?,
        target: s.get("target", TargetColumn::Last)?,
    })
}

fn fractions(s: &Settings) -> Result<(f64, f64, f64)> {
    let f: Vec<f64> = s.list("fractions", vec![0.7, 0.15, 0.15])?;
    if f.len() != 3 {
        bail!("fractions needs three values, got {}", f.len());
    }
    Ok((f[0], f[1], f[2]))
}

fn doppler_demo(flags: &DopplerFlags) -> Result<()> {
    let s = config(flags.settings())?;
    let cfg = config((|| {
        let d = DopplerConfig::default();
        let level: f64 = s.get("noise_variance", d.noise_variance)?;
        let noise_variance = if s.flag("noise_is_sd")? { level * level } else { level };
        Ok(DopplerConfig {
            n: s.get("n", d.n)?,
            n_validation: s.get("n_validation", d.n_validation)?,
            noise_variance,
            grid_points: s.get("grid_points", d.grid_points)?,
            grid_m: s.list("grid_m", d.grid_m)?,
            noise_multipliers: s.list("noise_multipliers", d.noise_multipliers)?,
            profile: s.get("profile", d.profile)?,
            seed: s.get("seed", d.seed)?,
            optimizer: OptimizerConfig::default(),
        })
    })())?;
    let out = run_doppler(&cfg).context("doppler experiment")?;
    let dir = out_dir(&s)?;
    write(&dir, "doppler_gp.csv", &curve_csv(&out.gp_curve))?;
    write(&dir, "doppler_lsgpr.csv", &curve_csv(&out.lsgpr_curve))?;
    let line = out.summary_line();
    write(&dir, "doppler_summary.txt", &format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}

fn prior_samples_cmd(flags: &PriorFlags) -> Result<()> {
    let s = config(flags.settings())?;
    let cfg = config((|| {
        let d = PriorSampleConfig::default();
        let profile = match s.raw("profile").unwrap_or("none") {
            "none" => None,
            p => Some(p.parse::<Profile>()?),
        };
        Ok(PriorSampleConfig {
            profile,
            h: s.get("h", d.h)?,
            x0: s.get("x0", d.x0)?,
            lengthscale: s.get("lengthscale", d.lengthscale)?,
            amplitude: s.get("amplitude", d.amplitude)?,
            grid_points: s.get("grid_points", d.grid_points)?,
            samples: s.get("samples", d.samples)?,
            seed: s.get("seed", d.seed)?,
        })
    })())?;
    let samples = prior_samples(&cfg).context("sampling the prior")?;
    let dir = out_dir(&s)?;
    let name = format!("prior_samples_{}.csv", cfg.profile.map_or("none", Profile::name));
    let path = write(&dir, &name, &samples_csv(&samples))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn benchmark(flags: &BenchmarkFlags) -> Result<()> {
    let s = config(flags.settings())?;
    let data_path = resolve_data(config(
        s.raw("data").ok_or_else(|| anyhow::anyhow!("benchmark needs --data")),
    )?);
    let (cfg, opts) = config((|| {
        let d = BenchmarkConfig::default();
        let profile: Profile = s.get("profile", Profile::Hilbert)?;
        let methods = match s.raw("methods") {
            None => d.methods.clone(),
            Some(list) => list
                .split(',')
                .filter(|m| !m.trim().is_empty())
                .map(|m| Method::parse(m, profile))
                .collect::<lsgpr::Result<Vec<_>>>()?,
        };
        let cfg = BenchmarkConfig {
            methods,
            splits: s.get("splits", d.splits)?,
            fractions: fractions(&s)?,
            folds: s.get("folds", d.folds)?,
            seed: s.get("seed", d.seed)?,
            preprocess: s.get("preprocess", Preprocess::MinMax)?,
            family: s.get("family", CovFamily::Rbf)?,
            grid_m: s.list("grid_m", d.grid_m)?,
            grid_k: s.list("grid_k", d.grid_k)?,
            lengthscale_factors: s.list("lengthscale_factors", d.lengthscale_factors)?,
            noise_factors: s.list("noise_factors", d.noise_factors)?,
        };
        cfg.validate()?;
        Ok((cfg, csv_options(&s, &data_path)?))
    })())?;
    let data = load_csv(&data_path, &opts).with_context(|| format!("loading {}", data_path.display()))?;
    let outcome = run_benchmark(&data, &cfg).context("benchmark")?;
    let dir = out_dir(&s)?;
    write(&dir, "report.csv", &report_csv(&outcome.report))?;
    write(&dir, "summary.csv", &summary_csv(&outcome.report, &cfg))?;
    write(&dir, "pvalues.csv", &pvalues_csv(&outcome.report))?;
    write(&dir, "selections.csv", &selections_csv(&outcome.runs))?;
    for (i, m) in outcome.report.methods.iter().enumerate() {
        println!("{m}: mse {} ± {}", outcome.report.means[i], outcome.report.std_devs[i]);
    }
    for r in outcome.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: {} failed on split {}: {}", r.method, r.split, r.error.as_deref().unwrap_or(""));
    }
    if outcome.all_failed() {
        return Err(lsgpr::Error::Numerical("every method failed on every split".into())).context("benchmark");
    }
    Ok(())
}

fn predict(flags: &PredictFlags) -> Result<()> {
    let s = config(flags.settings())?;
    let data_path = resolve_data(config(s.raw("data").ok_or_else(|| anyhow::anyhow!("predict needs --data")))?);
    let query_path = resolve_data(config(
        s.raw("queries").ok_or_else(|| anyhow::anyhow!("predict needs --queries")),
    )?);
    let opts = config(csv_options(&s, &data_path))?;
    let method = config(match s.raw("method").unwrap_or("lsgpr") {
        "gp" => Ok(false),
        "lsgpr" => Ok(true),
        other => Err(anyhow::anyhow!("unknown method {other:?}; expected gp or lsgpr")),
    })?;
    let profile: Profile = config(s.get("profile", Profile::Epanechnikov))?;
    let family: CovFamily = config(s.get("family", CovFamily::Rbf))?;
    let policy = config((|| {
        Ok(match (s.opt::<f64>("h")?, s.opt::<usize>("min_neighbors")?) {
            (Some(_), Some(_)) => bail!("give either h or min_neighbors, not both"),
            (Some(h), None) => BandwidthPolicy::FixedH(h),
            (None, Some(m)) => BandwidthPolicy::MinNeighbors(m),
            (None, None) => BandwidthPolicy::MinNeighbors(20),
        })
    })())?;
    let given = config((|| {
        Ok((s.opt::<f64>("lengthscale")?, s.opt::<f64>("amplitude")?, s.opt::<f64>("noise")?))
    })())?;

    let train = load_csv(&data_path, &opts).with_context(|| format!("loading {}", data_path.display()))?;
    let queries = load_table(&query_path, delimiter_for(&s, &query_path)?, header_mode(&s)?)
        .with_context(|| format!("loading {}", query_path.display()))?;
    if queries.values.ncols() != train.dim() {
        return Err(lsgpr::Error::DimensionMismatch {
            expected: train.dim(),
            found: queries.values.ncols(),
        })
        .with_context(|| format!("queries must have {} feature columns", train.dim()));
    }

    let vy = variance(&train.y).max(1e-12);
    let base = match family {
        CovFamily::Rbf => CovKernelParams::rbf(1.0, vy),
        CovFamily::Exponential => CovKernelParams::exponential(1.0, vy),
        CovFamily::Polynomial => CovKernelParams::polynomial(2, 1.0).with_amplitude(vy),
    };
    let (params, noise) = match given {
        (Some(l), Some(a), Some(n)) => (base.with_lengthscale(l).with_amplitude(a), n),
        (l, a, n) => {
            let fit = optimize_hypers_multistart(train.x.view(), &train.y, &base, 0.1 * vy, &OptimizerConfig::default())
                .context("fitting hyperparameters")?;
            let p = fit
                .params
                .with_lengthscale(l.unwrap_or(fit.params.lengthscale))
                .with_amplitude(a.unwrap_or(fit.params.amplitude));
            (p, n.unwrap_or(fit.noise))
        }
    };

    let preds = if method {
        let spec = LocalKernelSpec::new(profile, train.dim())?;
        let model = LocalGp::new(train.x.view(), &train.y, params, noise, spec)?;
        model
            .predict_batch(policy, queries.values.view())
            .into_iter()
            .collect::<lsgpr::Result<Vec<_>>>()
            .context("local prediction")?
    } else {
        GpModel::fit(train.x.view(), &train.y, params, noise)?.predict_many(queries.values.view())?
    };
    let dir = out_dir(&s)?;
    let path = write(&dir, "predictions.csv", &predictions_csv(&queries.names, queries.values.view(), &preds))?;
    println!("wrote {} predictions to {}", preds.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::DopplerDemo(f) => doppler_demo(f),
        Command::PriorSamples(f) => prior_samples_cmd(f),
        Command::Benchmark(f) => benchmark(f),
        Command::Predict(f) => predict(f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
