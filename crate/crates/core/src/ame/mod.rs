//! Average-marginal-effect regression: subset sampling, sub-model utilities, the
//! scaled design matrix and the least-squares / LASSO value solvers.

pub(crate) mod solvers;

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeedSpec, Stream};
use crate::utility::Utility;

pub use solvers::{
    default_lambda_grid, lasso_objective, select_lambda_cv, solve_lasso, solve_lasso_with_history, solve_ols,
    LambdaSelection, LassoSolution, OlsSolution,
};

/// Above this, `v = E[1/(p(1-p))]` makes the design entries (and the estimator's
/// variance) extreme.
const EXTREME_V: f64 = 100.0;

/// Membership of one sampled subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetMask {
    pub index: usize,
    pub rate: f64,
    #[serde(with = "bitstring")]
    pub membership: Vec<bool>,
}

impl SubsetMask {
    pub fn members(&self) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn size(&self) -> usize {
        self.membership.iter().filter(|m| **m).count()
    }
}

mod bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!("invalid membership bit `{other}`"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// `M × N`: row = subset, column = training sample.
    pub x: Array2<f64>,
    pub v: f64,
}

fn check_grid(p_grid: &[f64]) -> Result<()> {
    if p_grid.is_empty() {
        return Err(Error::InvalidInput("sampling-rate grid is empty".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidInput(format!("sampling rate {p} is outside (0, 1)")));
    }
    Ok(())
}

/// `v = E_p[1/(p(1-p))]` with uniform weight on each grid atom.
pub fn normalization_constant_v(p_grid: &[f64]) -> Result<f64> {
    check_grid(p_grid)?;
    let v = p_grid.iter().map(|p| 1.0 / (p * (1.0 - p))).sum::<f64>() / p_grid.len() as f64;
    if v > EXTREME_V {
        log::warn!("normalization constant v = {v:.3} is extreme; value estimates will have very high variance");
    }
    Ok(v)
}

pub fn sample_subsets(n: usize, m: usize, p_grid: &[f64], seed: &SeedSpec) -> Result<Vec<SubsetMask>> {
    check_grid(p_grid)?;
    if m == 0 {
        return Err(Error::InvalidInput("need at least one subset".into()));
    }
    let mut rng = seed.stream(Stream::SubsetSampling);
    Ok((0..m)
        .map(|index| {
            let rate = p_grid[rng.random_range(0..p_grid.len())];
            let membership = (0..n).map(|_| rng.random::<f64>() < rate).collect();
            SubsetMask {
                index,
                rate,
                membership,
            }
        })
        .collect())
}

/// `R_m = V(S_m)` for every mask, evaluated in parallel; output order follows `masks`.
pub fn run_subset_experiments(utility: &dyn Utility, masks: &[SubsetMask]) -> Result<Array1<f64>> {
    let n = utility.num_players();
    if let Some(bad) = masks.iter().find(|m| m.membership.len() != n) {
        return Err(Error::Shape(format!(
            "mask {} covers {} samples, corpus has {n}",
            bad.index,
            bad.membership.len()
        )));
    }
    let values: Vec<f64> = masks
        .par_iter()
        .map(|mask| utility.evaluate(&mask.members()))
        .collect::<Result<_>>()?;
    Ok(Array1::from(values))
}

/// Entry `(m, i)` is `1/(√v·p_m)` when sample `i` is in subset `m`, else `-1/(√v·(1-p_m))`.
pub fn build_design_matrix(masks: &[SubsetMask], p_grid: &[f64]) -> Result<DesignMatrix> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidInput("design matrix needs at least one subset".into()))?;
    let n = first.membership.len();
    if let Some(bad) = masks.iter().find(|m| m.membership.len() != n) {
        return Err(Error::Shape(format!(
            "mask {} has length {}, expected {n}",
            bad.index,
            bad.membership.len()
        )));
    }
    let v = normalization_constant_v(p_grid)?;
    let root_v = v.sqrt();
    let mut x = Array2::zeros((masks.len(), n));
    for (mut row, mask) in x.rows_mut().into_iter().zip(masks) {
        let inside = 1.0 / (root_v * mask.rate);
        let outside = -1.0 / (root_v * (1.0 - mask.rate));
        for (entry, &member) in row.iter_mut().zip(&mask.membership) {
            *entry = if member { inside } else { outside };
        }
    }
    Ok(DesignMatrix { x, v })
}

/// Cached masks and utilities, keyed so stale caches are detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetExperiments {
    pub corpus_hash: String,
    pub p_grid: Vec<f64>,
    pub seed: u64,
    pub masks: Vec<SubsetMask>,
    pub utilities: Vec<f64>,
}

impl SubsetExperiments {
    pub fn run(
        utility: &dyn Utility,
        corpus_hash: String,
        m: usize,
        p_grid: &[f64],
        seed: &SeedSpec,
    ) -> Result<Self> {
        let masks = sample_subsets(utility.num_players(), m, p_grid, seed)?;
        let utilities = run_subset_experiments(utility, &masks)?.to_vec();
        Ok(Self {
            corpus_hash,
            p_grid: p_grid.to_vec(),
            seed: seed.master_seed,
            masks,
            utilities,
        })
    }

    pub fn matches(&self, corpus_hash: &str, m: usize, p_grid: &[f64], seed: &SeedSpec) -> bool {
        self.corpus_hash == corpus_hash
            && self.masks.len() == m
            && self.p_grid == p_grid
            && self.seed == seed.master_seed
    }

    pub fn design(&self) -> Result<DesignMatrix> {
        build_design_matrix(&self.masks, &self.p_grid)
    }

    pub fn utility_vector(&self) -> Array1<f64> {
        Array1::from(self.utilities.clone())
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LearnerConfig;
    use crate::corpus::{make_synthetic, SyntheticKind, SyntheticSpec};
    use crate::utility::ClassifierUtility;
    use approx::assert_abs_diff_eq;

    #[test]
    fn v_for_reference_grids() {
        assert_eq!(normalization_constant_v(&[0.5]).unwrap(), 4.0);
        // mean of {6.25, 4.1667, 4.1667, 6.25}
        let expected = (6.25 + 1.0 / 0.24 + 1.0 / 0.24 + 6.25) / 4.0;
        assert_abs_diff_eq!(normalization_constant_v(&[0.2, 0.4, 0.6, 0.8]).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 5.208_333_333_333_333, epsilon = 1e-12);
        assert_abs_diff_eq!(normalization_constant_v(&[0.999]).unwrap(), 1001.001_001_001, epsilon = 1e-6);
        assert!(normalization_constant_v(&[]).is_err());
        assert!(normalization_constant_v(&[0.0]).is_err());
        assert!(normalization_constant_v(&[1.2]).is_err());
    }

    #[test]
    fn design_entries_follow_rate_formula() {
        let masks = vec![SubsetMask {
            index: 0,
            rate: 0.5,
            membership: vec![true, false],
        }];
        let d = build_design_matrix(&masks, &[0.5]).unwrap();
        assert_eq!(d.x[[0, 0]], 1.0);
        assert_eq!(d.x[[0, 1]], -1.0);

        let grid = [0.2, 0.4, 0.6, 0.8];
        let masks = vec![SubsetMask {
            index: 0,
            rate: 0.2,
            membership: vec![true, false],
        }];
        let d = build_design_matrix(&masks, &grid).unwrap();
        // √v = 2.2822
        assert_abs_diff_eq!(d.x[[0, 0]], 2.1909, epsilon = 1e-4);
        assert_abs_diff_eq!(d.x[[0, 1]], -0.5477, epsilon = 1e-4);
    }

    #[test]
    fn empty_mask_row_is_all_negative_and_lengths_must_agree() {
        let masks = vec![
            SubsetMask {
                index: 0,
                rate: 0.4,
                membership: vec![false; 4],
            },
            SubsetMask {
                index: 1,
                rate: 0.4,
                membership: vec![true; 4],
            },
        ];
        let d = build_design_matrix(&masks, &[0.4]).unwrap();
        assert!(d.x.row(0).iter().all(|v| *v < 0.0));
        let mut bad = masks.clone();
        bad[1].membership.pop();
        assert!(matches!(build_design_matrix(&bad, &[0.4]), Err(Error::Shape(_))));
        assert!(build_design_matrix(&[], &[0.4]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_concentrates() {
        let seed = SeedSpec::new(21);
        let a = sample_subsets(1000, 200, &[0.5], &seed).unwrap();
        assert_eq!(a, sample_subsets(1000, 200, &[0.5], &seed).unwrap());
        let mean = a.iter().map(|m| m.size() as f64).sum::<f64>() / 200.0;
        // each subset size is Binomial(1000, 0.5); the mean of 200 has sd √250/√200
        let se = (250.0f64).sqrt() / (200.0f64).sqrt();
        assert!((mean - 500.0).abs() < 3.0 * se, "mean subset size {mean}");
    }

    #[test]
    fn near_one_rate_keeps_nearly_everything() {
        let masks = sample_subsets(50, 1000, &[0.999], &SeedSpec::new(2)).unwrap();
        let mean = masks.iter().map(|m| m.size() as f64).sum::<f64>() / 1000.0;
        let sd = (50.0 * 0.999 * 0.001f64).sqrt() / (1000.0f64).sqrt();
        assert!((mean - 49.95).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn column_means_vanish_in_expectation() {
        let grid = [0.2, 0.4, 0.6, 0.8];
        let masks = sample_subsets(5, 10_000, &grid, &SeedSpec::new(8)).unwrap();
        let d = build_design_matrix(&masks, &grid).unwrap();
        for col in d.x.columns() {
            let mean = col.mean().unwrap();
            let sd = col.std(0.0);
            assert!(mean.abs() < 3.0 * sd / 100.0, "column mean {mean}");
        }
    }

    #[test]
    fn experiments_on_blobs() {
        let corpus = make_synthetic(
            &SyntheticSpec::new(SyntheticKind::GaussianBlobs, 40, 2, 2, 0.0),
            SeedSpec::new(3),
        )
        .unwrap();
        let utility = ClassifierUtility::new(&corpus, LearnerConfig::default(), SeedSpec::new(0));
        let empty = SubsetMask {
            index: 0,
            rate: 0.5,
            membership: vec![false; 40],
        };
        let full = SubsetMask {
            index: 1,
            rate: 0.5,
            membership: vec![true; 40],
        };
        let r = run_subset_experiments(&utility, &[empty.clone(), full.clone(), full.clone(), empty]).unwrap();
        let prior = corpus.validation.iter().filter(|s| s.label == 0).count() as f64 / corpus.validation.len() as f64;
        assert_eq!(r[0], prior);
        assert_eq!(r[3], prior);
        assert_eq!(r[1], r[2]);
        assert!(r[1] >= r[0]);

        let short = SubsetMask {
            index: 0,
            rate: 0.5,
            membership: vec![true; 3],
        };
        assert!(run_subset_experiments(&utility, &[short]).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let corpus = make_synthetic(
            &SyntheticSpec::new(SyntheticKind::GaussianBlobs, 20, 2, 2, 0.0),
            SeedSpec::new(3),
        )
        .unwrap();
        let utility = ClassifierUtility::new(&corpus, LearnerConfig::default(), SeedSpec::new(0));
        let seed = SeedSpec::new(4);
        let exp = SubsetExperiments::run(&utility, corpus.content_hash(), 6, &[0.3, 0.7], &seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("subsets.json");
        exp.save(&path).unwrap();
        let back = SubsetExperiments::load(&path).unwrap();
        assert_eq!(back, exp);
        assert!(back.matches(&corpus.content_hash(), 6, &[0.3, 0.7], &seed));
        assert!(!back.matches(&corpus.content_hash(), 7, &[0.3, 0.7], &seed));
    }
}
