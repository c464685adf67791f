//! The eleven per-sample characteristics extracted from a training trace.
//!
//! Column order is fixed (see [`COLUMN_NAMES`]); rule extraction and the
//! relevance report refer to dimensions by this order.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::learners::TrainingTrace;
use crate::metrics::{population_std, spearman};

pub const NUM_CHARACTERISTICS: usize = 11;

pub const COLUMN_NAMES: [&str; NUM_CHARACTERISTICS] = [
    "avg_loss",
    "loss_variation",
    "avg_grad_norm",
    "grad_norm_variation",
    "avg_uncertainty",
    "uncertainty_variation",
    "forgetting_count",
    "neighborhood_inconsistency",
    "category_proportion",
    "category_avg_forgetting",
    "category_forgetting_variation",
];

pub fn column_name(dim: usize) -> String {
    COLUMN_NAMES.get(dim).map_or_else(|| format!("u{}", dim + 1), |s| s.to_string())
}

/// Additive smoothing applied to both distributions in the neighborhood KL.
pub const NEIGHBOR_SMOOTHING: f64 = 1e-6;
const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    /// Applies stored column statistics to new raw rows; degenerate columns map to 0.
    pub fn apply(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        if raw.ncols() != self.means.len() {
            return Err(Error::Shape(format!(
                "expected {} characteristic columns, got {}",
                self.means.len(),
                raw.ncols()
            )));
        }
        let mut out = raw.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (mean, std) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|x| if std < DEGENERATE_STD { 0.0 } else { (x - mean) / std });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsMatrix {
    /// `N × 11`.
    pub values: Array2<f64>,
    pub standardized: bool,
    pub standardization: Option<Standardization>,
}

impl CharacteristicsMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let names: Vec<String> = (0..self.values.ncols()).map(column_name).collect();
        let mut out = names.join(",");
        out.push('\n');
        for row in self.values.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a matrix written by [`write_csv`](Self::write_csv); the standardization
    /// statistics are not part of the CSV and come back as `None`.
    pub fn read_csv(path: &Path, standardized: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(path, "empty characteristics file"))?;
        let width = header.split(',').count();
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::parse(path, format!("line {}: expected {width} cells", i + 2)));
            }
            for cell in cells {
                data.push(
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, format!("line {}: bad number `{cell}`", i + 2)))?,
                );
            }
            rows += 1;
        }
        let values = Array2::from_shape_vec((rows, width), data).map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(Self {
            values,
            standardized,
            standardization: None,
        })
    }
}

/// Columns u1..u7 (`N × 7`): loss mean/std, ‖q − y‖₂ mean/std, entropy mean/std,
/// and the forgetting count.
pub fn trace_statistics(trace: &TrainingTrace, corpus: &Corpus) -> Result<Array2<f64>> {
    let epochs = trace.num_epochs();
    if epochs < 2 {
        return Err(Error::InvalidInput(format!(
            "characteristics need at least 2 epochs (variations are undefined), trace has {epochs}"
        )));
    }
    let n = corpus.len();
    if trace.epochs.iter().any(|e| e.len() != n) {
        return Err(Error::Shape(format!("trace does not cover all {n} training samples")));
    }
    let mut out = Array2::zeros((n, 7));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let label = corpus.train[i].label;
        let mut losses = Vec::with_capacity(epochs);
        let mut norms = Vec::with_capacity(epochs);
        let mut entropies = Vec::with_capacity(epochs);
        let mut forgetting = 0usize;
        for (t, epoch) in trace.epochs.iter().enumerate() {
            let rec = &epoch[i];
            losses.push(rec.loss);
            let norm_sq: f64 = rec
                .probs
                .iter()
                .enumerate()
                .map(|(c, q)| {
                    let d = q - if c == label { 1.0 } else { 0.0 };
                    d * d
                })
                .sum();
            norms.push(norm_sq.sqrt());
            entropies.push(-rec.probs.iter().filter(|q| **q > 0.0).map(|q| q * q.ln()).sum::<f64>());
            if t > 0 && trace.epochs[t - 1][i].correct && !rec.correct {
                forgetting += 1;
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        row[0] = mean(&losses);
        row[1] = population_std(&losses);
        row[2] = mean(&norms);
        row[3] = population_std(&norms);
        row[4] = mean(&entropies);
        row[5] = population_std(&entropies);
        row[6] = forgetting as f64;
    }
    Ok(out)
}

/// Column u8: `KL(label ‖ neighbor labels)` over the k nearest neighbors in the
/// best-epoch representation, both distributions smoothed by [`NEIGHBOR_SMOOTHING`].
pub fn neighborhood_inconsistency(trace: &TrainingTrace, corpus: &Corpus, k: usize) -> Result<Array1<f64>> {
    neighborhood_inconsistency_from(&trace.features_at_best, &corpus.train_labels(), corpus.num_classes, k)
}

pub fn neighborhood_inconsistency_from(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    k: usize,
) -> Result<Array1<f64>> {
    let n = features.len();
    if labels.len() != n {
        return Err(Error::Shape("features and labels differ in length".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!("need 1 <= k < N, got k = {k} with N = {n}")));
    }
    let eps = NEIGHBOR_SMOOTHING;
    let norm = 1.0 + num_classes as f64 * eps;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = features[i].iter().zip(&features[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, j)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            dists.select_nth_unstable_by(k - 1, cmp);
            let mut counts = vec![0usize; num_classes];
            for &(_, j) in &dists[..k] {
                counts[labels[j]] += 1;
            }
            (0..num_classes)
                .map(|c| {
                    let p = (if c == labels[i] { 1.0 } else { 0.0 } + eps) / norm;
                    let q = (counts[c] as f64 / k as f64 + eps) / norm;
                    p * (p / q).ln()
                })
                .sum()
        })
        .collect();
    Ok(Array1::from(values))
}

/// Columns u9..u11 (`N × 3`): class share, and the mean / population std of the
/// forgetting counts within the sample's class.
pub fn category_statistics(labels: &[usize], num_classes: usize, forgetting: ArrayView1<f64>) -> Array2<f64> {
    let n = labels.len();
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        per_class[y].push(forgetting[i]);
    }
    let summary: Vec<(f64, f64, f64)> = per_class
        .iter()
        .map(|f| {
            if f.is_empty() {
                (0.0, 0.0, 0.0)
            } else {
                (
                    f.len() as f64 / n as f64,
                    f.iter().sum::<f64>() / f.len() as f64,
                    population_std(f),
                )
            }
        })
        .collect();
    let mut out = Array2::zeros((n, 3));
    for (i, &y) in labels.iter().enumerate() {
        let (share, mean, std) = summary[y];
        out[[i, 0]] = share;
        out[[i, 1]] = mean;
        out[[i, 2]] = std;
    }
    out
}

/// All eleven raw columns, unstandardized.
pub fn raw_characteristics(trace: &TrainingTrace, corpus: &Corpus, k: usize) -> Result<Array2<f64>> {
    let stats = trace_statistics(trace, corpus)?;
    let u8 = neighborhood_inconsistency(trace, corpus, k)?;
    let category = category_statistics(&corpus.train_labels(), corpus.num_classes, stats.column(6));
    let mut raw = Array2::zeros((corpus.len(), NUM_CHARACTERISTICS));
    raw.slice_mut(ndarray::s![.., 0..7]).assign(&stats);
    raw.column_mut(7).assign(&u8);
    raw.slice_mut(ndarray::s![.., 8..11]).assign(&category);
    Ok(raw)
}

pub fn extract_characteristics(trace: &TrainingTrace, corpus: &Corpus, k: usize) -> Result<CharacteristicsMatrix> {
    zscore_standardize(raw_characteristics(trace, corpus, k)?.view())
}

/// Per-column `(x − mean) / std` with population std; near-constant columns become 0.
pub fn zscore_standardize(raw: ArrayView2<f64>) -> Result<CharacteristicsMatrix> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite characteristic value".into()));
    }
    let n = raw.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("no rows to standardize".into()));
    }
    let means: Vec<f64> = raw.mean_axis(Axis(0)).expect("nonempty").to_vec();
    let stds: Vec<f64> = raw.columns().into_iter().map(|c| c.std(0.0)).collect();
    let standardization = Standardization { means, stds };
    let values = standardization.apply(raw)?;
    Ok(CharacteristicsMatrix {
        values,
        standardized: true,
        standardization: Some(standardization),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRow {
    pub dim: usize,
    pub name: String,
    pub spearman: f64,
    pub degenerate: bool,
}

/// Spearman correlation of each characteristic with reference values.
pub fn relevance_report(u: ArrayView2<f64>, reference: &[f64]) -> Result<Vec<RelevanceRow>> {
    if u.nrows() != reference.len() {
        return Err(Error::Shape(format!(
            "{} characteristic rows but {} reference values",
            u.nrows(),
            reference.len()
        )));
    }
    Ok(u.columns()
        .into_iter()
        .enumerate()
        .map(|(dim, col)| {
            let col = col.to_vec();
            let rho = spearman(&col, reference);
            RelevanceRow {
                dim,
                name: column_name(dim),
                spearman: rho.unwrap_or(0.0),
                degenerate: rho.is_none(),
            }
        })
        .collect())
}

pub fn relevance_csv(rows: &[RelevanceRow]) -> String {
    let mut out = String::from("dim,name,spearman,degenerate\n");
    for r in rows {
        out.push_str(&format!("{},{},{:?},{}\n", r.dim + 1, r.name, r.spearman, r.degenerate));
    }
    out
}
