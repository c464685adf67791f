//! Point-removal and point-addition curves on the test split.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::LearnerConfig;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::learners::{evaluate_utility, train_classifier};
use crate::rng::{SeedSpec, Stream};

/// Number of evaluation points a curve targets when no stride is given.
pub const DEFAULT_CURVE_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Removal,
    Addition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// Removal takes the highest values first, addition the lowest.
    Value,
    Random,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Removal => "removal",
            Direction::Addition => "addition",
        })
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::Value => "value",
            Ordering::Random => "random",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "removal" | "remove" => Ok(Direction::Removal),
            "addition" | "add" => Ok(Direction::Addition),
            other => Err(Error::Config(format!("unknown curve direction '{other}' (removal or addition)"))),
        }
    }
}

impl FromStr for Ordering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" | "by-value" => Ok(Ordering::Value),
            "random" => Ok(Ordering::Random),
            other => Err(Error::Config(format!("unknown curve order '{other}' (value or random)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub direction: Direction,
    pub order: Ordering,
    /// `⌊0.2 N⌋`, the last step.
    pub k: usize,
    /// `(points removed or added, test accuracy)`.
    pub points: Vec<(usize, f64)>,
    /// Label shown in reports, e.g. the valuation method.
    pub label: String,
}

impl Curve {
    pub fn final_accuracy(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.1)
    }
}

pub fn curve_budget(n: usize) -> usize {
    n / 5
}

/// Evaluated steps `0, s, 2s, …` plus `k` itself.
pub fn curve_steps(k: usize, stride: Option<usize>) -> Vec<usize> {
    let stride = stride.unwrap_or_else(|| k.div_ceil(DEFAULT_CURVE_POINTS)).max(1);
    let mut steps: Vec<usize> = (0..=k).step_by(stride).collect();
    if steps.last() != Some(&k) {
        steps.push(k);
    }
    steps
}

/// Sample indices in the order the curve consumes them.
fn consumption_order(values: &[f64], direction: Direction, order: Ordering, seed: &SeedSpec) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    match order {
        Ordering::Random => idx.shuffle(&mut seed.stream(Stream::Curve)),
        Ordering::Value => match direction {
            Direction::Removal => idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b))),
            Direction::Addition => idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))),
        },
    }
    idx
}

fn build_curve(
    corpus: &Corpus,
    values: &[f64],
    learner: &LearnerConfig,
    direction: Direction,
    order: Ordering,
    stride: Option<usize>,
    seed: &SeedSpec,
) -> Result<Curve> {
    let n = corpus.len();
    if values.len() != n {
        return Err(Error::Shape(format!("{} values for {n} training samples", values.len())));
    }
    if corpus.test.is_empty() {
        return Err(Error::InvalidInput("curves need a non-empty test split".into()));
    }
    let k = curve_budget(n);
    if k == 0 {
        return Err(Error::InvalidInput(format!("N = {n} leaves no points to remove or add (K = 0)")));
    }
    let sequence = consumption_order(values, direction, order, seed);
    let points = curve_steps(k, stride)
        .into_par_iter()
        .map(|s| {
            let mut members: Vec<usize> = match direction {
                Direction::Removal => sequence[s..].to_vec(),
                Direction::Addition => sequence[..s].to_vec(),
            };
            members.sort_unstable();
            let subset = corpus.train_refs(&members);
            let model = train_classifier(&subset, corpus.num_classes, corpus.dim, learner, *seed);
            Ok((s, evaluate_utility(&model, &corpus.test, learner.metric)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve { direction, order, k, points, label: String::new() })
}

/// Retrain without the `s` highest-valued (or random) points, for `s = 0..K`.
pub fn point_removal_curve(
    corpus: &Corpus,
    values: &[f64],
    learner: &LearnerConfig,
    order: Ordering,
    stride: Option<usize>,
    seed: &SeedSpec,
) -> Result<Curve> {
    build_curve(corpus, values, learner, Direction::Removal, order, stride, seed)
}

/// Train on the `s` lowest-valued (or random) points only, for `s = 0..K`; the
/// empty prefix is the uniform-prior model.
pub fn point_addition_curve(
    corpus: &Corpus,
    values: &[f64],
    learner: &LearnerConfig,
    order: Ordering,
    stride: Option<usize>,
    seed: &SeedSpec,
) -> Result<Curve> {
    build_curve(corpus, values, learner, Direction::Addition, order, stride, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_synthetic, SyntheticKind, SyntheticSpec};

    #[test]
    fn steps_cover_budget() {
        assert_eq!(curve_budget(100), 20);
        assert_eq!(curve_steps(20, None), (0..=20).collect::<Vec<_>>());
        assert_eq!(curve_steps(100, Some(5)).len(), 21);
        assert_eq!(curve_steps(7, Some(3)), vec![0, 3, 6, 7]);
    }

    #[test]
    fn removal_and_addition_endpoints() {
        let spec = SyntheticSpec::new(SyntheticKind::GaussianBlobs, 100, 2, 2, 0.0);
        let corpus = make_synthetic(&spec, SeedSpec::new(3)).unwrap();
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let learner = LearnerConfig::default();
        let seed = SeedSpec::new(1);
        let removal = point_removal_curve(&corpus, &values, &learner, Ordering::Value, None, &seed).unwrap();
        assert_eq!(removal.points.last().unwrap().0, 20);
        let full = train_classifier(&corpus.train_refs(&(0..100).collect::<Vec<_>>()), 2, 2, &learner, seed);
        assert_eq!(removal.points[0].1, evaluate_utility(&full, &corpus.test, learner.metric).unwrap());
        let addition = point_addition_curve(&corpus, &values, &learner, Ordering::Value, None, &seed).unwrap();
        assert_eq!(addition.points.len(), 21);
        let zeros = corpus.test.iter().filter(|s| s.label == 0).count() as f64 / corpus.test.len() as f64;
        assert_eq!(addition.points[0].1, zeros);
    }

    #[test]
    fn tiny_corpus_has_no_budget() {
        let spec = SyntheticSpec::new(SyntheticKind::GaussianBlobs, 4, 2, 2, 0.0);
        let corpus = make_synthetic(&spec, SeedSpec::new(3)).unwrap();
        let err = point_removal_curve(&corpus, &[0.0; 4], &LearnerConfig::default(), Ordering::Random, None, &SeedSpec::new(0));
        assert!(err.is_err());
    }
}
