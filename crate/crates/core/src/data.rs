//! Datasets: the Doppler generator, CSV input/output, preprocessing and
//! seeded train/validation/test splits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::random::SeededRng;

/// How a column was transformed: `scaled = (raw − offset) / scale`.
/// Constant columns have `scale == 0` and map to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub offset: f64,
    pub scale: f64,
}

impl ColumnScale {
    pub fn is_constant(&self) -> bool {
        self.scale == 0.0
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.offset) / self.scale
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.is_constant() {
            self.offset
        } else {
            v * self.scale + self.offset
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    MinMax,
    Standardize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub kind: ScalingKind,
    pub features: Vec<ColumnScale>,
    pub target: ColumnScale,
}

impl Scaling {
    /// Names of constant columns, which were mapped to 0.
    pub fn constant_columns<'a>(&self, data: &'a Dataset) -> Vec<&'a str> {
        let mut out: Vec<&str> = self
            .features
            .iter()
            .zip(&data.feature_names)
            .filter(|(c, _)| c.is_constant())
            .map(|(_, n)| n.as_str())
            .collect();
        if self.target.is_constant() {
            out.push(&data.target_name);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub scaling: Option<Scaling>,
}

fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        let d = x.ncols();
        Self::with_names(x, y, default_names(d), "y".into())
    }

    pub fn with_names(
        x: Array2<f64>,
        y: Vec<f64>,
        feature_names: Vec<String>,
        target_name: String,
    ) -> Result<Self> {
        crate::error::check_dim(x.nrows(), y.len())?;
        crate::error::check_dim(x.ncols(), feature_names.len())?;
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            target_name,
            scaling: None,
        })
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

    /// Rows `indices`, in that order, keeping names and scaling metadata.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            scaling: self.scaling.clone(),
        }
    }

    /// Undoes the stored scaling.
    pub fn unscale(&self) -> Self {
        let Some(s) = &self.scaling else {
            return self.clone();
        };
        let mut out = self.clone();
        for (j, mut col) in out.x.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| s.features[j].invert(v));
        }
        out.y.iter_mut().for_each(|v| *v = s.target.invert(*v));
        out.scaling = None;
        out
    }

    /// Maps a target value from the scaled space back to raw units.
    pub fn unscale_target(&self, v: f64) -> f64 {
        self.scaling.as_ref().map_or(v, |s| s.target.invert(v))
    }

    fn transformed(&self, kind: ScalingKind, fit: impl Fn(&[f64]) -> ColumnScale) -> Self {
        let base = self.unscale();
        let features: Vec<ColumnScale> = base
            .x
            .axis_iter(Axis(1))
            .map(|c| fit(&c.to_vec()))
            .collect();
        let target = fit(&base.y);
        let mut out = base;
        for (j, mut col) in out.x.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| features[j].apply(v));
        }
        out.y.iter_mut().for_each(|v| *v = target.apply(*v));
        out.scaling = Some(Scaling { kind, features, target });
        out
    }
}

fn minmax_fit(v: &[f64]) -> ColumnScale {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() || hi <= lo {
        return ColumnScale {
            offset: if v.is_empty() { 0.0 } else { lo },
            scale: 0.0,
        };
    }
    ColumnScale { offset: lo, scale: hi - lo }
}

fn standard_fit(v: &[f64]) -> ColumnScale {
    if v.is_empty() {
        return ColumnScale { offset: 0.0, scale: 0.0 };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        ColumnScale { offset: mean, scale: sd }
    } else {
        ColumnScale { offset: v[0], scale: 0.0 }
    }
}

/// Maps every feature and the target to `[0, 1]` by `(v − min)/(max − min)`.
/// Constant columns become 0 and are reported by [`Scaling::constant_columns`].
/// An already scaled dataset is rescaled from its raw values.
pub fn scale_minmax(data: &Dataset) -> Dataset {
    let mut out = data.transformed(ScalingKind::MinMax, minmax_fit);
    // guard against rounding just outside the unit interval
    out.x.mapv_inplace(|v| v.clamp(0.0, 1.0));
    out.y.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out
}

/// Centres every column and divides by its population standard deviation.
pub fn standardize(data: &Dataset) -> Dataset {
    data.transformed(ScalingKind::Standardize, standard_fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocess {
    None,
    MinMax,
    Standardize,
}

impl std::str::FromStr for Preprocess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "minmax" => Ok(Self::MinMax),
            "standardize" | "standard" => Ok(Self::Standardize),
            other => Err(Error::invalid(format!("unknown preprocessing {other:?}"))),
        }
    }
}

pub fn preprocess(data: &Dataset, mode: Preprocess) -> Dataset {
    match mode {
        Preprocess::None => data.clone(),
        Preprocess::MinMax => scale_minmax(data),
        Preprocess::Standardize => standardize(data),
    }
}

/// The noiseless Doppler function `√(x(1−x)) · sin(2.1π / (x + 0.05))`.
pub fn doppler_fn(x: f64) -> f64 {
    (x * (1.0 - x)).max(0.0).sqrt() * (2.1 * std::f64::consts::PI / (x + 0.05)).sin()
}

/// `n` inputs uniform on `[0, 1]` with targets `doppler_fn(x) + ε`,
/// `ε ~ N(0, noise_variance)`.
pub fn gen_doppler(n: usize, noise_variance: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::invalid(format!(
            "noise variance must be non-negative, got {noise_variance}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let sd = noise_variance.sqrt();
    let y: Vec<f64> = xs.iter().map(|&x| doppler_fn(x) + sd * rng.normal()).collect();
    Dataset::with_names(
        Array2::from_shape_vec((n, 1), xs).expect("n×1"),
        y,
        vec!["x".into()],
        "y".into(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    /// Any run of spaces or tabs.
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
    Last,
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    /// `last`, a zero-based index, or a column name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "last" {
            Self::Last
        } else if let Ok(i) = s.parse() {
            Self::Index(i)
        } else {
            Self::Name(s.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: Delimiter,
    /// `None` detects a header from a non-numeric first row.
    pub header: Option<bool>,
    pub target: TargetColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Comma,
            header: None,
            target: TargetColumn::Last,
        }
    }
}

fn split_line(line: &str, delim: Delimiter) -> Vec<&str> {
    match delim {
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
        Delimiter::Whitespace => line.split_whitespace().collect(),
    }
}

/// A parsed numeric table: column names and row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

/// Parses delimited numeric text. Rows are numbered from 1 in error
/// messages, counting the header; columns are numbered from 1. Blank lines
/// are skipped. Without a header, columns are named `c0, c1, …`.
pub fn parse_table(text: &str, delimiter: Delimiter, header: Option<bool>) -> Result<Table> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let first = lines
        .peek()
        .map(|(_, l)| split_line(l, delimiter))
        .ok_or_else(|| Error::Empty("csv has no rows".into()))?;
    let has_header = header.unwrap_or_else(|| first.iter().any(|c| c.parse::<f64>().is_err()));
    let width = first.len();
    let names: Vec<String> = if has_header {
        lines.next();
        first.iter().map(|s| s.to_string()).collect()
    } else {
        (0..width).map(|j| format!("c{j}")).collect()
    };
    let mut values = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines {
        let cells = split_line(line, delimiter);
        if cells.len() != width {
            return Err(Error::Ragged {
                row: lineno + 1,
                expected: width,
                found: cells.len(),
            });
        }
        for (j, c) in cells.iter().enumerate() {
            let v: f64 = c
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: lineno + 1,
                    column: j + 1,
                    value: c.to_string(),
                })?;
            values.push(v);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, width), values).expect("rectangular rows");
    Ok(Table { names, values })
}

/// Reads a delimited numeric file without designating a target.
pub fn load_table(path: impl AsRef<Path>, delimiter: Delimiter, header: Option<bool>) -> Result<Table> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&text, delimiter, header)
}

/// Parses CSV text into a dataset with the target chosen by `opts.target`.
pub fn parse_csv(text: &str, opts: &CsvOptions) -> Result<Dataset> {
    let table = parse_table(text, opts.delimiter, opts.header)?;
    let width = table.names.len();
    let target = match &opts.target {
        TargetColumn::Last => width - 1,
        TargetColumn::Index(i) if *i < width => *i,
        TargetColumn::Index(i) => return Err(Error::MissingColumn(format!("index {i}"))),
        TargetColumn::Name(n) => table
            .names
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| Error::MissingColumn(n.clone()))?,
    };
    let keep: Vec<usize> = (0..width).filter(|&j| j != target).collect();
    let x = table.values.select(Axis(1), &keep);
    let y = table.values.column(target).to_vec();
    let mut feature_names = table.names;
    let target_name = feature_names.remove(target);
    Dataset::with_names(x, y, feature_names, target_name)
}

/// Reads a delimited numeric file with the target given by `opts.target`.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, opts)
}

/// Comma-separated text with a header, features first and the target last.
/// Values are printed in shortest round-trip form.
pub fn to_csv_string(data: &Dataset) -> String {
    let mut s = String::new();
    let header: Vec<&str> = data
        .feature_names
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(data.target_name.as_str()))
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for (row, y) in data.x.axis_iter(Axis(0)).zip(&data.y) {
        for v in row {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{y}");
    }
    s
}

pub fn save_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(data)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let s = Self { train, validation, test, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.validation, self.test];
        if f.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidSplit(format!("fractions must be non-negative: {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions must sum to 1: {f:?}")));
        }
        Ok(())
    }
}

/// Index sets `(train, validation, test)`: a seeded permutation sliced into
/// contiguous blocks. Validation and test sizes are rounded down and the
/// remainder goes to train.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let n_val = (n as f64 * spec.validation).floor() as usize;
    let n_test = (n as f64 * spec.test).floor() as usize;
    let n_train = n - n_val - n_test;
    for (name, frac, size) in [
        ("train", spec.train, n_train),
        ("validation", spec.validation, n_val),
        ("test", spec.test, n_test),
    ] {
        if frac > 0.0 && size == 0 {
            return Err(Error::InvalidSplit(format!(
                "{name} fraction {frac} leaves the {name} part empty for n = {n}"
            )));
        }
    }
    let perm = SeededRng::new(spec.seed).permutation(n);
    Ok((
        perm[..n_train].to_vec(),
        perm[n_train..n_train + n_val].to_vec(),
        perm[n_train + n_val..].to_vec(),
    ))
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = split_indices(data.len(), spec)?;
    Ok((data.subset(&a), data.subset(&b), data.subset(&c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn doppler_values() {
        assert_eq!(doppler_fn(0.0), 0.0);
        let expected = 0.5 * (2.1 * std::f64::consts::PI / 0.55).sin();
        assert_relative_eq!(doppler_fn(0.5), expected, epsilon = 1e-15);
        assert_relative_eq!(doppler_fn(0.5), -0.270320, epsilon = 1e-6);
        let a = gen_doppler(50, 0.1, 9).unwrap();
        assert_eq!(a, gen_doppler(50, 0.1, 9).unwrap());
        assert_ne!(a, gen_doppler(50, 0.1, 10).unwrap());
        assert!(gen_doppler(5, -0.1, 0).is_err());
        let clean = gen_doppler(200, 0.0, 1).unwrap();
        assert!(clean.y.iter().all(|v| v.abs() <= 0.5));
        assert!(clean.x.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn csv_examples() {
        let d = parse_csv("a,b,t\n1,2,3\n4,5,6\n", &CsvOptions::default()).unwrap();
        assert_eq!(d.x, array![[1.0, 2.0], [4.0, 5.0]]);
        assert_eq!(d.y, vec![3.0, 6.0]);
        assert_eq!(d.feature_names, vec!["a", "b"]);
        let err = parse_csv("a,b,t\n1,2,3\n4,x,6\n", &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, column: 2, .. }), "{err}");
        let opts = CsvOptions {
            target: TargetColumn::Name("zz".into()),
            ..Default::default()
        };
        assert!(matches!(parse_csv("a,b\n1,2\n", &opts), Err(Error::MissingColumn(_))));
        assert!(matches!(
            parse_csv("1,2\n1,2,3\n", &CsvOptions::default()),
            Err(Error::Ragged { row: 2, .. })
        ));
        let ws = CsvOptions {
            delimiter: Delimiter::Whitespace,
            header: Some(false),
            target: TargetColumn::Index(0),
        };
        let d = parse_csv(" 1  2\t3\n4 5 6\n", &ws).unwrap();
        assert_eq!(d.y, vec![1.0, 4.0]);
        assert_eq!(d.x, array![[2.0, 3.0], [5.0, 6.0]]);
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let err = load_csv("/nonexistent/file.csv", &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn scaling_examples() {
        let d = Dataset::new(array![[0.0, 7.0], [5.0, 7.0], [10.0, 7.0]], vec![1.0, 2.0, 3.0]).unwrap();
        let s = scale_minmax(&d);
        assert_eq!(s.x.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(s.x.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(s.scaling.as_ref().unwrap().constant_columns(&s), vec!["x1"]);
        assert_eq!(s.unscale(), d);
        let again = scale_minmax(&s);
        assert_eq!(again.x, s.x);

        let d = Dataset::new(array![[1.0], [3.0]], vec![0.0, 4.0]).unwrap();
        let z = standardize(&d);
        assert_eq!(z.x.column(0).to_vec(), vec![-1.0, 1.0]);
        assert_eq!(z.unscale(), d);
    }

    #[test]
    fn split_examples() {
        let d = Dataset::new(Array2::from_shape_fn((10, 1), |(i, _)| i as f64), (0..10).map(f64::from).collect()).unwrap();
        let (a, b, c) = split(&d, &SplitSpec::new(1.0, 0.0, 0.0, 1).unwrap()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (10, 0, 0));
        let (a, b, c) = split(&d, &SplitSpec::new(0.8, 0.0, 0.2, 1).unwrap()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 0, 2));
        assert!(split(&d, &SplitSpec::new(0.95, 0.05, 0.0, 1).unwrap()).is_err());
        assert!(SplitSpec::new(0.5, 0.2, 0.2, 1).is_err());
        let s = SplitSpec::new(0.7, 0.15, 0.15, 4).unwrap();
        assert_eq!(split_indices(100, &s).unwrap(), split_indices(100, &s).unwrap());
    }
}
