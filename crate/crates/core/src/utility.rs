//! Coalition utilities `V(S)`.
//!
//! The subset experiments and the Shapley oracles only see this trait, so the
//! game-theoretic code can be exercised with analytic stubs as well as with real
//! sub-model training.

use dashmap::DashMap;

use crate::config::LearnerConfig;
use crate::corpus::Corpus;
use crate::error::Result;
use crate::learners::{evaluate_utility, train_classifier};
use crate::rng::SeedSpec;

pub trait Utility: Sync {
    fn num_players(&self) -> usize;

    /// Utility of the coalition given by `members` (ascending player indices).
    fn evaluate(&self, members: &[usize]) -> Result<f64>;
}

/// Validation performance of a logistic model trained on the coalition.
pub struct ClassifierUtility<'a> {
    pub corpus: &'a Corpus,
    pub config: LearnerConfig,
    pub seed: SeedSpec,
}

impl<'a> ClassifierUtility<'a> {
    pub fn new(corpus: &'a Corpus, config: LearnerConfig, seed: SeedSpec) -> Self {
        Self { corpus, config, seed }
    }
}

impl Utility for ClassifierUtility<'_> {
    fn num_players(&self) -> usize {
        self.corpus.len()
    }

    fn evaluate(&self, members: &[usize]) -> Result<f64> {
        let subset = self.corpus.train_refs(members);
        let model = train_classifier(&subset, self.corpus.num_classes, self.corpus.dim, &self.config, self.seed);
        evaluate_utility(&model, &self.corpus.validation, self.config.metric)
    }
}

/// `V(S) = Σ_{i∈S} w_i`; its Shapley values are exactly `w`.
#[derive(Debug, Clone)]
pub struct AdditiveUtility {
    pub weights: Vec<f64>,
}

impl Utility for AdditiveUtility {
    fn num_players(&self) -> usize {
        self.weights.len()
    }

    fn evaluate(&self, members: &[usize]) -> Result<f64> {
        Ok(members.iter().map(|&i| self.weights[i]).sum())
    }
}

/// Wraps a closure as a utility.
pub struct FnUtility<F> {
    players: usize,
    f: F,
}

impl<F> FnUtility<F>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    pub fn new(players: usize, f: F) -> Self {
        Self { players, f }
    }
}

impl<F> Utility for FnUtility<F>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    fn num_players(&self) -> usize {
        self.players
    }

    fn evaluate(&self, members: &[usize]) -> Result<f64> {
        Ok((self.f)(members))
    }
}

/// Memoizes another utility by coalition bitmask.
pub struct CachedUtility<'a> {
    inner: &'a dyn Utility,
    cache: DashMap<Vec<u64>, f64>,
}

impl<'a> CachedUtility<'a> {
    pub fn new(inner: &'a dyn Utility) -> Self {
        Self {
            inner,
            cache: DashMap::new(),
        }
    }

    pub fn distinct_evaluations(&self) -> usize {
        self.cache.len()
    }
}

impl Utility for CachedUtility<'_> {
    fn num_players(&self) -> usize {
        self.inner.num_players()
    }

    fn evaluate(&self, members: &[usize]) -> Result<f64> {
        let mut key = vec![0u64; self.num_players().div_ceil(64).max(1)];
        for &i in members {
            key[i / 64] |= 1 << (i % 64);
        }
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let v = self.inner.evaluate(members)?;
        self.cache.insert(key, v);
        Ok(v)
    }
}
