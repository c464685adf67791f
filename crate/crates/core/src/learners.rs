//! Multinomial logistic regression, the sub-model trained on every sampled subset,
//! plus the traced full-corpus run whose per-epoch records feed the characteristics.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{LearnerConfig, NeighborFeatures, TraceConfig, UtilityMetric};
use crate::corpus::{Corpus, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::{SeedSpec, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticClassifier {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major `C × d`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ProbabilisticClassifier {
    /// All-zero parameters: every input maps to the uniform distribution.
    pub fn uniform(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Argmax class; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Largest step for which full-batch descent on these samples is guaranteed to
/// decrease the loss: the softmax cross-entropy Hessian is bounded by
/// `½ max‖(x, 1)‖² + l2`.
pub fn stable_learning_rate(samples: &[&LabeledSample], l2: f64) -> f64 {
    let max_norm = samples
        .iter()
        .map(|s| s.features.iter().map(|x| x * x).sum::<f64>() + 1.0)
        .fold(1.0, f64::max);
    1.0 / (0.5 * max_norm + l2)
}

/// Mean cross-entropy (nats) plus the L2 penalty.
pub fn training_loss(model: &ProbabilisticClassifier, samples: &[&LabeledSample], l2: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let ce: f64 = samples
        .iter()
        .map(|s| cross_entropy(&model.predict_proba(&s.features), s.label))
        .sum::<f64>()
        / samples.len() as f64;
    ce + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(f64::MIN_POSITIVE).ln()
}

/// Adds the gradient of the mean cross-entropy over `batch` into `grad_w`/`grad_b`.
fn accumulate_gradient(
    model: &ProbabilisticClassifier,
    batch: &[&LabeledSample],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let q = model.predict_proba(&s.features);
        for c in 0..model.num_classes {
            let delta = (q[c] - if c == s.label { 1.0 } else { 0.0 }) * scale;
            grad_b[c] += delta;
            let row = &mut grad_w[c * model.dim..(c + 1) * model.dim];
            for (g, x) in row.iter_mut().zip(&s.features) {
                *g += delta * x;
            }
        }
    }
}

fn descend(model: &mut ProbabilisticClassifier, batch: &[&LabeledSample], lr: f64, l2: f64) {
    let mut grad_w = vec![0.0; model.weights.len()];
    let mut grad_b = vec![0.0; model.bias.len()];
    accumulate_gradient(model, batch, &mut grad_w, &mut grad_b);
    for (w, g) in model.weights.iter_mut().zip(&grad_w) {
        *w -= lr * (g + l2 * *w);
    }
    for (b, g) in model.bias.iter_mut().zip(&grad_b) {
        *b -= lr * g;
    }
}

/// Per-step training losses, kept for the monotonicity diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainDiagnostics {
    pub losses: Vec<f64>,
    pub stable_rate: f64,
    pub monotone: bool,
}

pub fn train_classifier(
    subset: &[&LabeledSample],
    num_classes: usize,
    dim: usize,
    config: &LearnerConfig,
    seed: SeedSpec,
) -> ProbabilisticClassifier {
    train_classifier_with_diagnostics(subset, num_classes, dim, config, seed, false).0
}

/// Full-batch gradient descent from zero weights. An empty subset yields the
/// uniform-prior classifier. The seed is accepted for interface symmetry; the
/// procedure itself has no random component.
pub fn train_classifier_with_diagnostics(
    subset: &[&LabeledSample],
    num_classes: usize,
    dim: usize,
    config: &LearnerConfig,
    _seed: SeedSpec,
    record: bool,
) -> (ProbabilisticClassifier, Option<TrainDiagnostics>) {
    let mut model = ProbabilisticClassifier::uniform(num_classes, dim);
    if subset.is_empty() {
        return (model, None);
    }
    let mut losses = Vec::new();
    if record {
        losses.push(training_loss(&model, subset, config.l2));
    }
    for _ in 0..config.steps {
        descend(&mut model, subset, config.learning_rate, config.l2);
        if record {
            losses.push(training_loss(&model, subset, config.l2));
        }
    }
    if !record {
        return (model, None);
    }
    let stable_rate = stable_learning_rate(subset, config.l2);
    let monotone = losses.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    if config.learning_rate <= stable_rate && !monotone {
        log::warn!(
            "training loss increased at learning rate {} (stability bound {stable_rate:.4})",
            config.learning_rate
        );
    }
    (
        model,
        Some(TrainDiagnostics {
            losses,
            stable_rate,
            monotone,
        }),
    )
}

pub fn evaluate_utility(
    model: &ProbabilisticClassifier,
    validation: &[LabeledSample],
    metric: UtilityMetric,
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::InvalidInput("utility needs a nonempty validation split".into()));
    }
    let predictions: Vec<usize> = validation.iter().map(|s| model.predict(&s.features)).collect();
    Ok(match metric {
        UtilityMetric::Accuracy => {
            let hits = predictions
                .iter()
                .zip(validation)
                .filter(|(p, s)| **p == s.label)
                .count();
            hits as f64 / validation.len() as f64
        }
        UtilityMetric::MacroF1 => macro_f1(&predictions, validation, model.num_classes),
    })
}

fn macro_f1(predictions: &[usize], truth: &[LabeledSample], num_classes: usize) -> f64 {
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for (&p, s) in predictions.iter().zip(truth) {
        if p == s.label {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[s.label] += 1;
        }
    }
    let f1: f64 = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    f1 / num_classes as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Cross-entropy in nats.
    pub loss: f64,
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub num_classes: usize,
    /// `epochs[t][i]`: record of training sample `i` after epoch `t + 1`.
    pub epochs: Vec<Vec<SampleRecord>>,
    pub validation_accuracy: Vec<f64>,
    /// One-based epoch with the highest validation accuracy (earliest on ties).
    pub best_val_epoch: usize,
    pub features_at_best: Vec<Vec<f64>>,
}

impl TrainingTrace {
    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn num_samples(&self) -> usize {
        self.epochs.first().map_or(0, Vec::len)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Mini-batch SGD over the full training split, recording every sample after every epoch.
pub fn train_with_trace(corpus: &Corpus, config: &TraceConfig, l2: f64, seed: SeedSpec) -> Result<TrainingTrace> {
    if config.epochs == 0 {
        return Err(Error::InvalidInput("traced training needs at least one epoch".into()));
    }
    if corpus.train.is_empty() {
        return Err(Error::InvalidInput("traced training needs training samples".into()));
    }
    let mut rng = seed.stream(Stream::LearnerInit);
    let mut model = ProbabilisticClassifier::uniform(corpus.num_classes, corpus.dim);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut validation_accuracy = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ProbabilisticClassifier)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = corpus.train_refs(chunk);
            descend(&mut model, &batch, config.learning_rate, l2);
        }
        let records: Vec<SampleRecord> = corpus
            .train
            .iter()
            .map(|s| {
                let probs = model.predict_proba(&s.features);
                let predicted = model.predict(&s.features);
                SampleRecord {
                    loss: cross_entropy(&probs, s.label),
                    probs,
                    predicted,
                    correct: predicted == s.label,
                }
            })
            .collect();
        let accuracy = if corpus.validation.is_empty() {
            records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64
        } else {
            evaluate_utility(&model, &corpus.validation, UtilityMetric::Accuracy)?
        };
        if best.as_ref().is_none_or(|(a, _, _)| accuracy > *a) {
            best = Some((accuracy, epoch, model.clone()));
        }
        epochs.push(records);
        validation_accuracy.push(accuracy);
    }

    let (_, best_val_epoch, best_model) = best.expect("at least one epoch ran");
    let features_at_best = corpus
        .train
        .iter()
        .map(|s| match config.neighbor_features {
            NeighborFeatures::Raw => s.features.clone(),
            NeighborFeatures::Logits => best_model.logits(&s.features),
        })
        .collect();
    Ok(TrainingTrace {
        num_classes: corpus.num_classes,
        epochs,
        validation_accuracy,
        best_val_epoch,
        features_at_best,
    })
}
