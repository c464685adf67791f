//! Learnable valuation with a shared-parameter perceptron.
//!
//! Every training sample is scored by the same one-hidden-layer network
//! `f(u; Θ)`, and the network is fit through the composed regression
//! `‖R − X̂ f(U; Θ)‖²`. The number of parameters depends only on the hidden width.

use crate::characteristics::Standardization;
use crate::config::MlpConfig;
use crate::error::{Error, Result};
use crate::rng::{kfold_assignment, SeedSpec, Stream};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `H × d` input weights.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl MlpModel {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self { w1: Array2::zeros((hidden, input_dim)), b1: Array1::zeros(hidden), w2: Array1::zeros(hidden), b2: 0.0 }
    }

    /// He-normal input layer and `N(0, 1/H)` output layer.
    pub fn random(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = SeedSpec::new(seed).stream(Stream::LearnerInit);
        let first = Normal::new(0.0, (2.0 / input_dim as f64).sqrt()).unwrap();
        let second = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).unwrap();
        let w1 = Array2::from_shape_simple_fn((hidden, input_dim), || first.sample(&mut rng));
        let b1 = Array1::from_shape_simple_fn(hidden, || 0.1 * first.sample(&mut rng));
        let w2 = Array1::from_shape_simple_fn(hidden, || second.sample(&mut rng));
        let b2 = 0.1 * second.sample(&mut rng);
        Self { w1, b1, w2, b2 }
    }

    /// Training start: random input layer, zero output layer, so `f ≡ 0` initially.
    pub fn initial(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut model = Self::random(input_dim, hidden, seed);
        model.w2.fill(0.0);
        model.b2 = 0.0;
        model
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn forward(&self, u: ArrayView1<f64>) -> Result<f64> {
        if u.len() != self.input_dim() {
            return Err(Error::Shape(format!("expected {} characteristics, got {}", self.input_dim(), u.len())));
        }
        let pre = self.w1.dot(&u) + &self.b1;
        Ok(pre.iter().zip(&self.w2).map(|(z, w)| z.max(0.0) * w).sum::<f64>() + self.b2)
    }

    fn hidden_activations(&self, u: ArrayView2<f64>) -> Array2<f64> {
        let mut h = u.dot(&self.w1.t()) + &self.b1;
        h.mapv_inplace(|z| z.max(0.0));
        h
    }

    pub fn forward_batch(&self, u: ArrayView2<f64>) -> Result<Array1<f64>> {
        if u.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("expected {} characteristics, got {}", self.input_dim(), u.ncols())));
        }
        Ok(self.hidden_activations(u).dot(&self.w2) + self.b2)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.push(self.b2);
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.parameter_count(), values.len())));
        }
        let (a, rest) = values.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.iter_mut().zip(a).for_each(|(p, v)| *p = *v);
        self.b1.iter_mut().zip(b).for_each(|(p, v)| *p = *v);
        self.w2.iter_mut().zip(c).for_each(|(p, v)| *p = *v);
        self.b2 = d[0];
        Ok(())
    }

    fn scaled_add(&mut self, alpha: f64, other: &MlpModel) {
        self.w1.scaled_add(alpha, &other.w1);
        self.b1.scaled_add(alpha, &other.b1);
        self.w2.scaled_add(alpha, &other.w2);
        self.b2 += alpha * other.b2;
    }
}

/// Mean squared composed residual `(1/|B|) Σ_b (R_b − x_b·f(U))²`.
pub fn batch_loss(model: &MlpModel, x_batch: ArrayView2<f64>, r_batch: ArrayView1<f64>, u: ArrayView2<f64>) -> Result<f64> {
    let f = model.forward_batch(u)?;
    let residual = &r_batch - &x_batch.dot(&f);
    Ok(residual.dot(&residual) / r_batch.len().max(1) as f64)
}

/// Gradient of [`batch_loss`] with respect to every parameter. Each batch row's
/// residual involves all `N` network outputs, so the backward pass runs over the
/// whole characteristics matrix.
pub fn mlp_gradient(model: &MlpModel, x_batch: ArrayView2<f64>, r_batch: ArrayView1<f64>, u: ArrayView2<f64>) -> Result<MlpModel> {
    if x_batch.nrows() != r_batch.len() || x_batch.ncols() != u.nrows() {
        return Err(Error::Shape(format!(
            "batch is {}×{} with {} targets but U has {} rows",
            x_batch.nrows(),
            x_batch.ncols(),
            r_batch.len(),
            u.nrows()
        )));
    }
    if u.ncols() != model.input_dim() {
        return Err(Error::Shape(format!("expected {} characteristics, got {}", model.input_dim(), u.ncols())));
    }
    let h = model.hidden_activations(u);
    let f = h.dot(&model.w2) + model.b2;
    let residual = &r_batch - &x_batch.dot(&f);
    // dL/df_i
    let g = x_batch.t().dot(&residual) * (-2.0 / r_batch.len().max(1) as f64);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite activations in the valuation network".into()));
    }
    let w2 = h.t().dot(&g);
    let b2 = g.sum();
    let dh = Array2::from_shape_fn(h.raw_dim(), |(i, k)| if h[[i, k]] > 0.0 { g[i] * model.w2[k] } else { 0.0 });
    let w1 = dh.t().dot(&u);
    let b1 = dh.sum_axis(Axis(0));
    Ok(MlpModel { w1, b1, w2, b2 })
}

/// `0.25 / (mean ‖x_m‖² · (1 + H/8))`, scaled to the composed problem's curvature.
pub fn default_learning_rate(x: ArrayView2<f64>, hidden: usize) -> f64 {
    let mean_sq = x.rows().into_iter().map(|row| row.dot(&row)).sum::<f64>() / x.nrows().max(1) as f64;
    0.25 / (mean_sq.max(1e-12) * (1.0 + hidden as f64 / 8.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    /// 1-based epoch whose parameters were kept; 0 means the initial model.
    pub best_epoch: usize,
    pub best_heldout_mse: f64,
    pub train_objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEnsemble {
    pub models: Vec<MlpModel>,
    pub folds: Vec<FoldRecord>,
    pub learning_rate: f64,
    pub seed: u64,
    /// Column statistics of the training characteristics, for scoring raw rows.
    pub standardization: Option<Standardization>,
}

impl MlpEnsemble {
    pub fn parameter_count(&self) -> usize {
        self.models.first().map_or(0, MlpModel::parameter_count)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn rows_of(x: ArrayView2<f64>, r: ArrayView1<f64>, rows: &[usize]) -> (Array2<f64>, Array1<f64>) {
    (x.select(Axis(0), rows), r.select(Axis(0), rows))
}

fn train_fold(
    x: ArrayView2<f64>,
    r: ArrayView1<f64>,
    u: ArrayView2<f64>,
    train: &[usize],
    heldout: &[usize],
    fold: usize,
    config: &MlpConfig,
    step: f64,
    seed: &SeedSpec,
) -> Result<(MlpModel, FoldRecord)> {
    let mut model = MlpModel::initial(u.ncols(), config.hidden, seed.derive(Stream::LearnerInit, fold as u64));
    let mut order_rng = seed.substream(Stream::LearnerInit, 1000 + fold as u64);
    let (x_train, r_train) = rows_of(x, r, train);
    let (x_held, r_held) = rows_of(x, r, heldout);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_err = batch_loss(&model, x_held.view(), r_held.view(), u)?;
    let mut objective = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let xb = x_train.select(Axis(0), batch);
            let rb = r_train.select(Axis(0), batch);
            let grad = mlp_gradient(&model, xb.view(), rb.view(), u)?;
            model.scaled_add(-step, &grad);
        }
        let train_err = batch_loss(&model, x_train.view(), r_train.view(), u)?;
        if !train_err.is_finite() {
            return Err(Error::Numeric(format!(
                "valuation network diverged in fold {fold} at epoch {epoch} (learning rate {step:e}); use a smaller learning rate"
            )));
        }
        objective.push(train_err);
        let held = batch_loss(&model, x_held.view(), r_held.view(), u)?;
        if held < best_err {
            best_err = held;
            best_epoch = epoch;
            best = model.clone();
        }
    }
    Ok((best, FoldRecord { fold, best_epoch, best_heldout_mse: best_err, train_objective: objective }))
}

/// Fold-wise training over the `M` subset rows; the returned ensemble averages the
/// best held-out epoch of every fold.
pub fn train_mlpbv(x: ArrayView2<f64>, r: ArrayView1<f64>, u: ArrayView2<f64>, config: &MlpConfig, seed: &SeedSpec) -> Result<MlpEnsemble> {
    let (m, n) = x.dim();
    if r.len() != m || u.nrows() != n {
        return Err(Error::Shape(format!("X̂ is {m}×{n}, R has {} entries, U has {} rows", r.len(), u.nrows())));
    }
    if m < config.folds {
        return Err(Error::InvalidInput(format!("{m} subset rows cannot be split into {} folds", config.folds)));
    }
    if config.hidden == 0 {
        return Err(Error::Config("hidden width must be positive".into()));
    }
    let step = config.learning_rate.unwrap_or_else(|| default_learning_rate(x, config.hidden));
    let assignment = kfold_assignment(m, config.folds, seed);
    let fitted: Vec<(MlpModel, FoldRecord)> = (0..config.folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..m).filter(|&i| assignment[i] != fold).collect();
            let heldout: Vec<usize> = (0..m).filter(|&i| assignment[i] == fold).collect();
            train_fold(x, r, u, &train, &heldout, fold, config, step, seed)
        })
        .collect::<Result<_>>()?;
    let (models, folds) = fitted.into_iter().unzip();
    Ok(MlpEnsemble { models, folds, learning_rate: step, seed: seed.master_seed, standardization: None })
}

/// Ensemble-mean value of every row of `u`, which must already be standardized
/// with the training statistics.
pub fn predict_values(ensemble: &MlpEnsemble, u: ArrayView2<f64>) -> Result<Array1<f64>> {
    if ensemble.models.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let mut total = Array1::zeros(u.nrows());
    for model in &ensemble.models {
        total += &model.forward_batch(u)?;
    }
    Ok(total / ensemble.models.len() as f64)
}

/// Standardizes raw characteristics with the stored statistics, then predicts.
pub fn predict_raw(ensemble: &MlpEnsemble, raw: ArrayView2<f64>) -> Result<Array1<f64>> {
    let stats = ensemble
        .standardization
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("ensemble carries no standardization statistics".into()))?;
    predict_values(ensemble, stats.apply(raw)?.view())
}
