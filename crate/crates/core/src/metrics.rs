//! Comparison metrics between value vectors.

use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Mean squared difference.
pub fn mse_score(values: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(values, reference)?;
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot score empty vectors".into()));
    }
    Ok(values.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / values.len() as f64)
}

/// Normalized Kendall-tau distance: discordant pairs over `n(n-1)/2`; a pair tied
/// in either vector counts as half discordant.
pub fn kendall_tau_distance(values: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(values, reference)?;
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput("Kendall-tau distance needs at least 2 items".into()));
    }
    let mut discordant = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let a = values[i].total_cmp(&values[j]);
            let b = reference[i].total_cmp(&reference[j]);
            if a.is_eq() || b.is_eq() {
                discordant += 0.5;
            } else if a != b {
                discordant += 1.0;
            }
        }
    }
    Ok(discordant / (n * (n - 1) / 2) as f64)
}

/// Pearson correlation; `None` when either vector is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Ranks starting at 1, ties share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `None` when either vector is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}
