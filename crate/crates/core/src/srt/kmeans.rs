//! Weighted one-dimensional k-means.

const MAX_ITERS: usize = 100;

/// Centers start at the `(j + ½)/k` quantiles (of the distinct values when
/// weighted, so one heavy point cannot absorb every start); Lloyd iterations then
/// use the weights and run until assignments stop changing or 100 rounds pass.
/// Empty clusters are dropped and coincident centers merged, so fewer than `k`
/// sorted centers may come back.
pub fn kmeans_1d(values: &[f64], weights: Option<&[f64]>, k: usize) -> Vec<f64> {
    if values.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut centers = Vec::with_capacity(k);
    if weights.is_some() {
        let mut distinct: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        distinct.dedup();
        for j in 0..k {
            let pos = ((j as f64 + 0.5) / k as f64 * distinct.len() as f64) as usize;
            centers.push(distinct[pos.min(distinct.len() - 1)]);
        }
    } else {
        let total = order.len() as f64;
        for j in 0..k {
            let pos = ((j as f64 + 0.5) / k as f64 * total) as usize;
            centers.push(values[order[pos.min(order.len() - 1)]]);
        }
    }
    dedup_sorted(&mut centers);

    let mut assignment = vec![usize::MAX; values.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, &x) in values.iter().enumerate() {
            let c = nearest(&centers, x);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![0.0; centers.len()];
        let mut mass = vec![0.0; centers.len()];
        for (i, &c) in assignment.iter().enumerate() {
            sums[c] += weight(i) * values[i];
            mass[c] += weight(i);
        }
        let updated: Vec<f64> = (0..centers.len()).filter(|&c| mass[c] > 0.0).map(|c| sums[c] / mass[c]).collect();
        let dropped = updated.len() != centers.len();
        centers = updated;
        dedup_sorted(&mut centers);
        if dropped {
            assignment.fill(usize::MAX);
        } else if !changed {
            break;
        }
    }
    centers
}

/// Index of the closest center; an exact tie goes to the lower center.
pub fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, &center) in centers.iter().enumerate() {
        let d = (x - center).abs();
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn dedup_sorted(centers: &mut Vec<f64>) {
    centers.sort_by(f64::total_cmp);
    centers.dedup();
}
