//! LIBSVM-format datasets, feature scaling and train/test splits.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::kernel::Samples;

/// Sparse samples with one target per row. Feature indices are 0-based in
/// memory and 1-based on disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    q: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from sparse rows of `(index, value)` pairs.
    pub fn from_sparse_rows(rows: Vec<Vec<(usize, f64)>>, targets: Vec<f64>, q: Option<usize>) -> Result<Self> {
        if rows.len() != targets.len() {
            return input(format!("{} rows but {} targets", rows.len(), targets.len()));
        }
        let mut ds = Dataset {
            q: 0,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            targets,
        };
        let mut max_q = 0;
        for row in rows {
            let mut prev = None;
            for (j, v) in row {
                if prev.is_some_and(|p| j <= p) {
                    return input("feature indices must be strictly increasing within a row");
                }
                prev = Some(j);
                max_q = max_q.max(j + 1);
                ds.indices.push(j);
                ds.values.push(v);
            }
            ds.indptr.push(ds.indices.len());
        }
        ds.q = match q {
            Some(q) if q < max_q => return input(format!("feature index {max_q} exceeds dimension {q}")),
            Some(q) => q,
            None => max_q,
        };
        Ok(ds)
    }

    pub fn from_dense(samples: &Samples, targets: Vec<f64>) -> Result<Self> {
        let rows = (0..samples.n())
            .map(|i| {
                samples
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Dataset::from_sparse_rows(rows, targets, Some(samples.q()))
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Same rows viewed with `q` features; entries beyond `q` are dropped.
    pub fn with_dim(&self, q: usize) -> Dataset {
        let rows = (0..self.n())
            .map(|i| self.row(i).filter(|(j, _)| *j < q).collect())
            .collect();
        Dataset::from_sparse_rows(rows, self.targets.clone(), Some(q)).expect("valid subset")
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let rows = idx.iter().map(|&i| self.row(i).collect()).collect();
        let targets = idx.iter().map(|&i| self.targets[i]).collect();
        Dataset::from_sparse_rows(rows, targets, Some(self.q)).expect("valid subset")
    }

    pub fn to_samples(&self) -> Samples {
        let mut data = vec![0.0; self.n() * self.q];
        for i in 0..self.n() {
            for (j, v) in self.row(i) {
                data[i * self.q + j] = v;
            }
        }
        Samples::new(self.n(), self.q, data).expect("finite parsed values")
    }

    /// Maps labels to +1/-1; the larger of two distinct values becomes +1.
    pub fn binary_labels(&self) -> Result<Vec<f64>> {
        let pair = self.label_pair()?;
        map_labels(&self.targets, pair)
    }

    /// The two raw label values as `[negative, positive]`.
    pub fn label_pair(&self) -> Result<[f64; 2]> {
        let mut distinct: Vec<f64> = Vec::new();
        for &t in &self.targets {
            if !distinct.contains(&t) {
                distinct.push(t);
            }
        }
        if distinct.len() != 2 {
            return input(format!(
                "classification needs exactly two label values, found {}",
                distinct.len()
            ));
        }
        Ok([distinct[0].min(distinct[1]), distinct[0].max(distinct[1])])
    }
}

fn parse_err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line,
        column,
        message: message.into(),
    })
}

/// Parses LIBSVM text: `label idx:val idx:val ...` per line. Blank lines and
/// `#` comments are skipped.
pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut last_line = 0;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        last_line = line_no;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (pos, ch) in content.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push((s, &content[s..pos]));
                }
            } else if start.is_none() {
                start = Some(pos);
            }
        }
        if let Some(s) = start {
            tokens.push((s, &content[s..]));
        }
        let Some(&(lpos, label)) = tokens.first() else {
            continue;
        };
        let y: f64 = match label.parse() {
            Ok(v) if f64::is_finite(v) => v,
            _ => return parse_err(line_no, lpos + 1, format!("invalid label {label:?}")),
        };
        let mut row = Vec::with_capacity(tokens.len() - 1);
        let mut prev = 0usize;
        for &(pos, tok) in &tokens[1..] {
            let col = pos + 1;
            let Some((idx, val)) = tok.split_once(':') else {
                return parse_err(line_no, col, format!("expected index:value, got {tok:?}"));
            };
            let idx: usize = match idx.parse() {
                Ok(i) if i >= 1 => i,
                _ => return parse_err(line_no, col, format!("invalid feature index {idx:?}")),
            };
            let val: f64 = match val.parse() {
                Ok(v) if f64::is_finite(v) => v,
                _ => {
                    return parse_err(line_no, col + tok.find(':').unwrap_or(0) + 1, format!("invalid feature value {val:?}"))
                }
            };
            if idx <= prev {
                return parse_err(line_no, col, format!("feature index {idx} does not increase (previous {prev})"));
            }
            prev = idx;
            row.push((idx - 1, val));
        }
        rows.push(row);
        targets.push(y);
    }
    if rows.is_empty() {
        return parse_err(last_line.max(1), 1, "no samples in input");
    }
    Dataset::from_sparse_rows(rows, targets, None)
}

pub fn parse_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_libsvm_str(&text)
}

/// Shortest text that parses back to the same value.
fn fmt_num(out: &mut String, v: f64) {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        let _ = write!(out, "{}", v as i64);
    } else {
        let _ = write!(out, "{v:?}");
    }
}

pub fn format_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..ds.n() {
        fmt_num(&mut out, ds.targets[i]);
        for (j, v) in ds.row(i) {
            let _ = write!(out, " {}:", j + 1);
            fmt_num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(ds: &Dataset, mut w: impl Write) -> Result<()> {
    w.write_all(format_libsvm(ds).as_bytes())?;
    Ok(())
}

/// Per-feature affine map onto `[0, 1]` fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    /// Column minima and maxima, counting implicit zeros.
    pub fn fit(ds: &Dataset) -> Scaler {
        let q = ds.q();
        let mut min = vec![f64::INFINITY; q];
        let mut max = vec![f64::NEG_INFINITY; q];
        let mut seen = vec![0usize; q];
        for i in 0..ds.n() {
            for (j, v) in ds.row(i) {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
                seen[j] += 1;
            }
        }
        for j in 0..q {
            if seen[j] < ds.n() {
                min[j] = min[j].min(0.0);
                max[j] = max[j].max(0.0);
            }
        }
        Scaler { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    #[inline]
    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            ((v - self.min[j]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Scales a dense point with the scaler's dimension.
    pub fn scale_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.scale_value(j, v)).collect()
    }

    /// Dense scaled copy of `ds` with the scaler's dimension; out-of-range
    /// values are clamped into `[0, 1]`.
    pub fn transform(&self, ds: &Dataset) -> Samples {
        let q = self.dim();
        let mut data = Vec::with_capacity(ds.n() * q);
        for i in 0..ds.n() {
            let mut row = vec![0.0; q];
            for (j, v) in ds.row(i) {
                if j < q {
                    row[j] = v;
                }
            }
            data.extend(self.scale_point(&row));
        }
        Samples::new(ds.n(), q, data).expect("finite scaled values")
    }
}

/// Affine map of regression targets onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn fit(y: &[f64]) -> TargetScaler {
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        TargetScaler { min, max }
    }

    pub fn forward(&self, y: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (y - self.min) / span
        } else {
            0.0
        }
    }

    pub fn inverse(&self, t: f64) -> f64 {
        self.min + t * (self.max - self.min)
    }
}

/// Scaling applied before training, kept with a model so raw inputs can be
/// mapped the same way at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub features: Scaler,
    #[serde(default)]
    pub targets: Option<TargetScaler>,
    /// Raw `[negative, positive]` label values for classification.
    #[serde(default)]
    pub labels: Option<[f64; 2]>,
}

fn map_labels(targets: &[f64], [neg, pos]: [f64; 2]) -> Result<Vec<f64>> {
    targets
        .iter()
        .map(|&t| match t {
            t if t == pos => Ok(1.0),
            t if t == neg => Ok(-1.0),
            t => input(format!("label {t} is neither {neg} nor {pos}")),
        })
        .collect()
}

impl Preprocess {
    /// Feature scaling plus the label pair of a two-class dataset.
    pub fn for_classification(ds: &Dataset) -> Result<Preprocess> {
        Ok(Preprocess {
            features: Scaler::fit(ds),
            targets: None,
            labels: Some(ds.label_pair()?),
        })
    }

    /// Feature scaling, and target scaling onto `[0, 1]` when asked.
    pub fn for_regression(ds: &Dataset, scale_targets: bool) -> Preprocess {
        Preprocess {
            features: Scaler::fit(ds),
            targets: scale_targets.then(|| TargetScaler::fit(ds.targets())),
            labels: None,
        }
    }

    /// Scaled samples and mapped targets of `ds`.
    pub fn apply(&self, ds: &Dataset) -> Result<(Samples, Vec<f64>)> {
        let samples = self.features.transform(ds);
        let targets = match (self.labels, self.targets) {
            (Some(pair), _) => map_labels(ds.targets(), pair)?,
            (None, Some(ts)) => ds.targets().iter().map(|&y| ts.forward(y)).collect(),
            (None, None) => ds.targets().to_vec(),
        };
        Ok((samples, targets))
    }

    /// Maps a model output back to the raw target scale.
    pub fn output(&self, v: f64) -> f64 {
        match (self.labels, self.targets) {
            (Some([neg, pos]), _) => {
                if v >= 0.0 {
                    pos
                } else {
                    neg
                }
            }
            (None, Some(ts)) => ts.inverse(v),
            (None, None) => v,
        }
    }
}

/// Seeded uniform split; the first part holds `round(fraction * n)` samples,
/// kept within `1..n` so neither part is empty when `n >= 2`.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return input(format!("split fraction must lie in (0, 1), got {fraction}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut k = (fraction * n as f64).round() as usize;
    if n >= 2 {
        k = k.clamp(1, n - 1);
    }
    let test = perm.split_off(k);
    Ok((perm, test))
}

pub fn split_train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(ds.n(), fraction, seed)?;
    Ok((ds.subset(&tr), ds.subset(&te)))
}
