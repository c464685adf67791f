//! Labeled corpora with CSV ingestion and seeded synthetic generators.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{SeedSpec, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Train indices whose labels were flipped by a synthetic generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub flipped: Vec<usize>,
    pub original_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub num_classes: usize,
    /// Per-class counts over the training split.
    pub class_counts: Vec<usize>,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        })
    }
}

impl Corpus {
    pub fn new(
        train: Vec<LabeledSample>,
        validation: Vec<LabeledSample>,
        test: Vec<LabeledSample>,
        num_classes: usize,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidInput("corpus has no training samples".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidInput("corpus must declare at least one class".into()));
        }
        let dim = train[0].features.len();
        for (row, sample) in train.iter().chain(&validation).chain(&test).enumerate() {
            if sample.features.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {row} has {} features, expected {dim}",
                    sample.features.len()
                )));
            }
            if sample.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: sample.label,
                    classes: num_classes,
                });
            }
        }
        let class_counts = count_classes(&train, num_classes);
        Ok(Self {
            train,
            validation,
            test,
            num_classes,
            class_counts,
            dim,
            noise: None,
        })
    }

    /// Number of training samples (players of the valuation game).
    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn train_refs(&self, indices: &[usize]) -> Vec<&LabeledSample> {
        indices.iter().map(|&i| &self.train[i]).collect()
    }

    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|s| s.label).collect()
    }

    /// Stable content hash, used to key cached artifacts.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.num_classes as u64).to_le_bytes());
        for (tag, split) in [(0u8, &self.train), (1, &self.validation), (2, &self.test)] {
            hasher.update([tag]);
            for sample in split {
                for x in &sample.features {
                    hasher.update(x.to_bits().to_le_bytes());
                }
                hasher.update((sample.label as u64).to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    /// Writes `f0..f{d-1},label,split` with 17 significant digits per value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for j in 0..self.dim {
            out.push_str(&format!("f{j},"));
        }
        out.push_str("label,split\n");
        for (split, samples) in [
            (Split::Train, &self.train),
            (Split::Validation, &self.validation),
            (Split::Test, &self.test),
        ] {
            for sample in samples {
                for x in &sample.features {
                    out.push_str(&format!("{x:.16e},"));
                }
                out.push_str(&format!("{},{split}\n", sample.label));
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn count_classes(samples: &[LabeledSample], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for s in samples {
        counts[s.label] += 1;
    }
    counts
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// How to interpret a corpus CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    /// Declared class count; inferred as `max label + 1` when absent.
    pub num_classes: Option<usize>,
    /// Validation and test fractions used when the file has no split column.
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: SeedSpec,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            num_classes: None,
            validation_fraction: 0.15,
            test_fraction: 0.15,
            seed: SeedSpec::default(),
        }
    }
}

pub fn load_corpus_csv(path: &Path, schema: &CsvSchema) -> Result<Corpus> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::parse(path, "header has no `label` column"))?;
    let split_col = headers.iter().position(|h| h == "split");
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_col && Some(c) != split_col)
        .collect();

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("");
            let x: f64 = cell.parse().map_err(|_| {
                Error::parse(path, format!("line {line}: non-numeric feature cell `{cell}` in column `{}`", &headers[c]))
            })?;
            features.push(x);
        }
        let cell = record.get(label_col).unwrap_or("");
        let label: usize = cell
            .parse()
            .map_err(|_| Error::parse(path, format!("line {line}: label `{cell}` is not a non-negative integer")))?;
        let split = match split_col {
            Some(c) => Some(
                record
                    .get(c)
                    .unwrap_or("")
                    .parse::<Split>()
                    .map_err(|m| Error::parse(path, format!("line {line}: {m}")))?,
            ),
            None => None,
        };
        rows.push((LabeledSample::new(features, label), split));
    }
    if rows.is_empty() {
        return Err(Error::parse(path, "empty corpus"));
    }

    let num_classes = match schema.num_classes {
        Some(c) => c,
        None => rows.iter().map(|(s, _)| s.label).max().unwrap_or(0) + 1,
    };
    if let Some((row, (sample, _))) = rows.iter().enumerate().find(|(_, (s, _))| s.label >= num_classes) {
        return Err(Error::LabelOutOfRange {
            row,
            label: sample.label,
            classes: num_classes,
        });
    }

    let assignment: Vec<Split> = if split_col.is_some() {
        rows.iter().map(|(_, s)| s.expect("split column present")).collect()
    } else {
        seeded_split(rows.len(), schema)
    };

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for ((sample, _), split) in rows.into_iter().zip(assignment) {
        match split {
            Split::Train => train.push(sample),
            Split::Validation => validation.push(sample),
            Split::Test => test.push(sample),
        }
    }
    Corpus::new(train, validation, test, num_classes)
}

/// Assigns rows to splits with a seeded shuffle; file order is kept inside each split.
fn seeded_split(n: usize, schema: &CsvSchema) -> Vec<Split> {
    let n_val = (schema.validation_fraction * n as f64).floor() as usize;
    let n_test = (schema.test_fraction * n as f64).floor() as usize;
    let (n_val, n_test) = if n_val + n_test >= n { (0, 0) } else { (n_val, n_test) };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut schema.seed.stream(Stream::CorpusSplit));
    let mut assignment = vec![Split::Train; n];
    for &i in &order[..n_val] {
        assignment[i] = Split::Validation;
    }
    for &i in &order[n_val..n_val + n_test] {
        assignment[i] = Split::Test;
    }
    assignment
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    GaussianBlobs,
    TwoMoons,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-blobs" | "blobs" => Ok(SyntheticKind::GaussianBlobs),
            "two-moons" | "moons" => Ok(SyntheticKind::TwoMoons),
            other => Err(Error::InvalidInput(format!(
                "unknown synthetic kind `{other}` (expected gaussian-blobs or two-moons)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    /// Training size N.
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub num_classes: usize,
    pub dim: usize,
    /// Fraction of training labels flipped to a wrong class.
    pub noise_rate: f64,
    /// Standard deviation of blob centers around the origin.
    pub center_scale: f64,
    /// Within-cluster (or along-moon) noise standard deviation.
    pub cluster_std: f64,
}

impl SyntheticSpec {
    /// Validation and test sizes follow a 70/15/15 proportion relative to `n_train`.
    pub fn new(kind: SyntheticKind, n_train: usize, num_classes: usize, dim: usize, noise_rate: f64) -> Self {
        let held_out = ((n_train as f64) * 15.0 / 70.0).round().max(1.0) as usize;
        let cluster_std = match kind {
            SyntheticKind::GaussianBlobs => 1.0,
            SyntheticKind::TwoMoons => 0.2,
        };
        Self {
            kind,
            n_train,
            n_validation: held_out,
            n_test: held_out,
            num_classes,
            dim,
            noise_rate,
            center_scale: 2.0,
            cluster_std,
        }
    }
}

pub fn make_synthetic(spec: &SyntheticSpec, seed: SeedSpec) -> Result<Corpus> {
    if !(0.0..1.0).contains(&spec.noise_rate) {
        return Err(Error::InvalidInput(format!(
            "noise_rate must lie in [0, 1), got {}",
            spec.noise_rate
        )));
    }
    if spec.num_classes == 0 || spec.n_train < spec.num_classes {
        return Err(Error::InvalidInput(format!(
            "need N >= C >= 1, got N = {} and C = {}",
            spec.n_train, spec.num_classes
        )));
    }
    if spec.dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if spec.kind == SyntheticKind::TwoMoons && (spec.num_classes != 2 || spec.dim < 2) {
        return Err(Error::InvalidInput("two-moons needs exactly 2 classes and at least 2 dimensions".into()));
    }

    let mut rng = seed.stream(Stream::Synthetic);
    let noise = Normal::new(0.0, spec.cluster_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let centers: Vec<Vec<f64>> = {
        let scale = Normal::new(0.0, spec.center_scale).map_err(|e| Error::InvalidInput(e.to_string()))?;
        (0..spec.num_classes)
            .map(|_| (0..spec.dim).map(|_| scale.sample(&mut rng)).collect())
            .collect()
    };

    let draw_split = |n: usize, rng: &mut crate::rng::Rng| -> Vec<LabeledSample> {
        let mut samples: Vec<LabeledSample> = (0..n)
            .map(|i| {
                let label = i % spec.num_classes;
                let features = match spec.kind {
                    SyntheticKind::GaussianBlobs => centers[label]
                        .iter()
                        .map(|c| c + noise.sample(rng))
                        .collect(),
                    SyntheticKind::TwoMoons => {
                        let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
                        let (x, y) = if label == 0 {
                            (t.cos(), t.sin())
                        } else {
                            (1.0 - t.cos(), 0.5 - t.sin())
                        };
                        let mut f = vec![x + noise.sample(rng), y + noise.sample(rng)];
                        f.extend((2..spec.dim).map(|_| noise.sample(rng)));
                        f
                    }
                };
                LabeledSample::new(features, label)
            })
            .collect();
        samples.shuffle(rng);
        samples
    };

    let mut train = draw_split(spec.n_train, &mut rng);
    let validation = draw_split(spec.n_validation, &mut rng);
    let test = draw_split(spec.n_test, &mut rng);

    let n_flip = (spec.noise_rate * spec.n_train as f64).floor() as usize;
    let noise_record = if n_flip > 0 {
        if spec.num_classes < 2 {
            return Err(Error::InvalidInput("label noise needs at least 2 classes".into()));
        }
        let mut flipped = rand::seq::index::sample(&mut rng, spec.n_train, n_flip).into_vec();
        flipped.sort_unstable();
        let mut original_labels = Vec::with_capacity(n_flip);
        for &i in &flipped {
            let original = train[i].label;
            let shift = rng.random_range(1..spec.num_classes);
            train[i].label = (original + shift) % spec.num_classes;
            original_labels.push(original);
        }
        NoiseRecord {
            flipped,
            original_labels,
        }
    } else {
        NoiseRecord {
            flipped: Vec::new(),
            original_labels: Vec::new(),
        }
    };

    let mut corpus = Corpus::new(train, validation, test, spec.num_classes)?;
    corpus.noise = Some(noise_record);
    Ok(corpus)
}
