//! Reference Shapley values: full enumeration for small games and permutation
//! sampling for larger ones.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeedSpec, Stream};
use crate::utility::Utility;

/// Largest player count accepted by [`exact_shapley`] (2^14 coalitions).
pub const EXACT_PLAYER_CAP: usize = 14;

/// Permutations per independently seeded work unit of [`mc_shapley`].
pub const PERMUTATION_CHUNK: usize = 1024;

fn members_of(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Enumerates every coalition once. With `normalized` the weights are
/// `1 / (N · C(N−1, |S|))`, the usual Shapley value; without it the `1/N`
/// factor is left out.
pub fn exact_shapley(utility: &dyn Utility, normalized: bool) -> Result<Vec<f64>> {
    let n = utility.num_players();
    if n > EXACT_PLAYER_CAP {
        return Err(Error::InvalidInput(format!(
            "exact enumeration is capped at {EXACT_PLAYER_CAP} players, got {n}; use the Monte-Carlo estimator"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let values: Vec<f64> = (0..1usize << n).into_par_iter().map(|mask| utility.evaluate(&members_of(mask, n))).collect::<Result<_>>()?;
    let scale = if normalized { 1.0 / n as f64 } else { 1.0 };
    let weights: Vec<f64> = (0..n).map(|s| scale / binomial(n - 1, s)).collect();
    Ok((0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << n)
                .filter(|mask| mask & bit == 0)
                .map(|mask| weights[mask.count_ones() as usize] * (values[mask | bit] - values[mask]))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub values: Vec<f64>,
    pub std_error: Vec<f64>,
    pub permutations: usize,
}

struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

fn permutation_chunk(utility: &dyn Utility, count: usize, chunk: usize, seed: &SeedSpec) -> Result<Moments> {
    let n = utility.num_players();
    let mut rng = seed.substream(Stream::Permutation, chunk as u64);
    let mut order: Vec<usize> = (0..n).collect();
    let mut moments = Moments { sum: vec![0.0; n], sum_sq: vec![0.0; n] };
    let empty = utility.evaluate(&[])?;
    for _ in 0..count {
        order.shuffle(&mut rng);
        let mut members: Vec<usize> = Vec::with_capacity(n);
        let mut previous = empty;
        for &player in &order {
            let pos = members.partition_point(|&m| m < player);
            members.insert(pos, player);
            let current = utility.evaluate(&members)?;
            let marginal = current - previous;
            moments.sum[player] += marginal;
            moments.sum_sq[player] += marginal * marginal;
            previous = current;
        }
    }
    Ok(moments)
}

/// Mean marginal contribution over `permutations` seeded random orders, with the
/// per-player standard error. Work is split into fixed chunks with their own
/// seeds and combined in chunk order, so the result does not depend on the
/// number of worker threads.
pub fn mc_shapley(utility: &dyn Utility, permutations: usize, seed: &SeedSpec) -> Result<ShapleyEstimate> {
    if permutations == 0 {
        return Err(Error::InvalidInput("need at least one permutation".into()));
    }
    let n = utility.num_players();
    let chunks = permutations.div_ceil(PERMUTATION_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = PERMUTATION_CHUNK.min(permutations - c * PERMUTATION_CHUNK);
            permutation_chunk(utility, count, c, seed)
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for part in &parts {
        for i in 0..n {
            sum[i] += part.sum[i];
            sum_sq[i] += part.sum_sq[i];
        }
    }
    let p = permutations as f64;
    let values: Vec<f64> = sum.iter().map(|s| s / p).collect();
    let std_error = (0..n)
        .map(|i| {
            if permutations < 2 {
                return 0.0;
            }
            let var = ((sum_sq[i] - p * values[i] * values[i]) / (p - 1.0)).max(0.0);
            (var / p).sqrt()
        })
        .collect();
    Ok(ShapleyEstimate { values, std_error, permutations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::{AdditiveUtility, FnUtility};
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_game() {
        let n = 5;
        let u = FnUtility::new(n, move |m: &[usize]| m.len() as f64 / n as f64);
        for v in exact_shapley(&u, true).unwrap() {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn additive_game() {
        let u = AdditiveUtility { weights: vec![1.0, 2.0, 3.0] };
        let v = exact_shapley(&u, true).unwrap();
        for (a, b) in v.iter().zip([1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let raw = exact_shapley(&u, false).unwrap();
        assert_abs_diff_eq!(raw[2], 9.0, epsilon = 1e-12);
    }

    #[test]
    fn unanimity_game() {
        let u = FnUtility::new(2, |m: &[usize]| if m.len() == 2 { 1.0 } else { 0.0 });
        assert_eq!(exact_shapley(&u, true).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn player_cap() {
        let u = AdditiveUtility { weights: vec![1.0; 15] };
        assert!(exact_shapley(&u, true).is_err());
    }

    #[test]
    fn single_permutation_is_one_marginal_vector() {
        let u = FnUtility::new(3, |m: &[usize]| (m.len() * m.len()) as f64);
        let e = mc_shapley(&u, 1, &SeedSpec::new(2)).unwrap();
        let mut sorted = e.values.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, vec![1.0, 3.0, 5.0]);
        assert_eq!(e.std_error, vec![0.0; 3]);
    }

    #[test]
    fn additive_game_is_recovered_and_deterministic() {
        let w: Vec<f64> = (0..8).map(|i| i as f64 - 2.5).collect();
        let u = AdditiveUtility { weights: w.clone() };
        let a = mc_shapley(&u, 3000, &SeedSpec::new(1)).unwrap();
        for (got, want) in a.values.iter().zip(&w) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-9);
        }
        assert_eq!(a, mc_shapley(&u, 3000, &SeedSpec::new(1)).unwrap());
    }
}
