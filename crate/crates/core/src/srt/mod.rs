//! Sparse regression tree valuation.
//!
//! Every characteristic column is quantized by 1-D k-means. A sample's cell is the
//! tuple of its nearest-center ranks, flattened mixed-radix into a `u64` key; only
//! occupied keys are stored. Leaves are axis-aligned boxes of center ranks that
//! partition the occupied cells, and each leaf carries one weight `β_n` which is
//! the value of all its members. The model is fit through `‖R − X̂Zβ‖²` where `Z`
//! is the sample-to-leaf membership matrix.

pub mod kmeans;
pub mod rules;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::ame::solvers::QuadraticGd;
use crate::config::SrtConfig;
use crate::error::{Error, Result};
use crate::rng::{kfold_assignment, SeedSpec};

pub use kmeans::{kmeans_1d, nearest};
pub use rules::{extract_rules, Rule, RuleCondition, RuleSet, ValueGroup};

/// Gradient ∞-norm below which the leaf-weight fit stops.
pub const GD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// Sorted cluster centers per dimension.
    pub centers: Vec<Vec<f64>>,
}

impl Discretizer {
    pub fn dims(&self) -> usize {
        self.centers.len()
    }

    pub fn radices(&self) -> Vec<usize> {
        self.centers.iter().map(Vec::len).collect()
    }

    /// Value of boundary `b` of dimension `d`, i.e. the midpoint between centers
    /// `b − 1` and `b`.
    pub fn boundary_value(&self, d: usize, b: usize) -> f64 {
        0.5 * (self.centers[d][b - 1] + self.centers[d][b])
    }

    /// `(center value, center rank)` per dimension.
    pub fn discretize(&self, u: ArrayView1<f64>) -> Result<Vec<(f64, usize)>> {
        if u.len() != self.dims() {
            return Err(Error::Shape(format!("expected {} characteristics, got {}", self.dims(), u.len())));
        }
        Ok(u.iter()
            .zip(&self.centers)
            .map(|(&x, centers)| {
                let c = nearest(centers, x);
                (centers[c], c)
            })
            .collect())
    }

    pub fn cell(&self, u: ArrayView1<f64>) -> Result<Vec<usize>> {
        Ok(self.discretize(u)?.into_iter().map(|(_, c)| c).collect())
    }
}

pub fn fit_discretizer(u: ArrayView2<f64>, max_clusters: usize) -> Result<Discretizer> {
    if max_clusters < 2 {
        return Err(Error::Config(format!("need at least 2 clusters per dimension, got {max_clusters}")));
    }
    let mut centers = Vec::with_capacity(u.ncols());
    for (d, col) in u.columns().into_iter().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("characteristic column {d} has non-finite entries")));
        }
        centers.push(kmeans_1d(&col.to_vec(), None, max_clusters));
    }
    Ok(Discretizer { centers })
}

/// Row-major mixed-radix flattening of per-dimension indices.
pub fn leaf_index(indices: &[usize], radices: &[usize]) -> Result<u64> {
    if indices.len() != radices.len() {
        return Err(Error::Shape(format!("{} indices for {} radices", indices.len(), radices.len())));
    }
    if radices.iter().try_fold(1u64, |acc, &r| acc.checked_mul(r as u64)).is_none() {
        return Err(Error::InvalidInput("cell grid has more than 2^64 cells".into()));
    }
    let mut flat: u64 = 0;
    for (d, (&i, &r)) in indices.iter().zip(radices).enumerate() {
        if i >= r {
            return Err(Error::InvalidInput(format!("index {i} out of range for dimension {d} with {r} regions")));
        }
        flat = flat
            .checked_mul(r as u64)
            .and_then(|f| f.checked_add(i as u64))
            .ok_or_else(|| Error::InvalidInput("cell index overflows 64 bits".into()))?;
    }
    Ok(flat)
}

pub fn unflatten_index(mut flat: u64, radices: &[usize]) -> Result<Vec<usize>> {
    let mut out = vec![0; radices.len()];
    for d in (0..radices.len()).rev() {
        let r = radices[d] as u64;
        if r == 0 {
            return Err(Error::InvalidInput(format!("dimension {d} has no regions")));
        }
        out[d] = (flat % r) as usize;
        flat /= r;
    }
    if flat != 0 {
        return Err(Error::InvalidInput("flat index exceeds the cell grid".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Half-open range of center ranks per dimension.
    pub ranges: Vec<(usize, usize)>,
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    pub beta: f64,
}

impl Leaf {
    pub fn contains(&self, cell: &[usize]) -> bool {
        self.ranges.iter().zip(cell).all(|(&(lo, hi), &c)| lo <= c && c < hi)
    }

    pub fn support(&self) -> usize {
        self.members.len()
    }
}

fn centroid(u: ArrayView2<f64>, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; u.ncols()];
    for &i in members {
        for (acc, v) in c.iter_mut().zip(u.row(i)) {
            *acc += v;
        }
    }
    let n = members.len().max(1) as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

fn scatter(u: ArrayView2<f64>, members: &[usize], center: &[f64]) -> f64 {
    members
        .iter()
        .map(|&i| u.row(i).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrtModel {
    pub discretizer: Discretizer,
    /// Cell rank tuple of every training sample.
    pub cells: Vec<Vec<usize>>,
    pub leaves: Vec<Leaf>,
    /// Occupied flat cell index → leaf id.
    pub leaf_table: BTreeMap<u64, usize>,
    /// Boundaries in use per dimension (union over leaves).
    pub active_boundaries: Vec<Vec<usize>>,
}

impl SrtModel {
    fn rebuild_index(&mut self) -> Result<()> {
        let radices = self.discretizer.radices();
        self.leaf_table.clear();
        for (id, leaf) in self.leaves.iter().enumerate() {
            for &i in &leaf.members {
                self.leaf_table.insert(leaf_index(&self.cells[i], &radices)?, id);
            }
        }
        self.active_boundaries = (0..self.discretizer.dims())
            .map(|d| {
                let mut b: Vec<usize> = self
                    .leaves
                    .iter()
                    .flat_map(|l| [l.ranges[d].0, l.ranges[d].1])
                    .filter(|&b| b > 0 && b < radices[d])
                    .collect();
                b.sort_unstable();
                b.dedup();
                b
            })
            .collect();
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.cells.len()
    }

    /// Leaf id of every training sample.
    pub fn sample_leaves(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_samples()];
        for (id, leaf) in self.leaves.iter().enumerate() {
            for &i in &leaf.members {
                out[i] = id;
            }
        }
        out
    }

    pub fn beta(&self) -> Array1<f64> {
        self.leaves.iter().map(|l| l.beta).collect()
    }

    pub fn set_beta(&mut self, beta: &Array1<f64>) {
        for (leaf, b) in self.leaves.iter_mut().zip(beta) {
            leaf.beta = *b;
        }
    }

    /// Per-sample values: each sample takes its leaf's weight.
    pub fn values(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.num_samples());
        for leaf in &self.leaves {
            for &i in &leaf.members {
                out[i] = leaf.beta;
            }
        }
        out
    }

    /// Value of a new (standardized) characteristics row.
    pub fn predict(&self, u: ArrayView1<f64>) -> Result<f64> {
        let cell = self.discretizer.cell(u)?;
        self.leaves
            .iter()
            .find(|l| l.contains(&cell))
            .map(|l| l.beta)
            .ok_or_else(|| Error::InvalidInput("row falls outside every leaf of the tree".into()))
    }

    /// `X̂Z`: column `n` sums the design columns of leaf `n`'s members.
    pub fn composite_design(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.num_samples() {
            return Err(Error::Shape(format!("X̂ has {} columns, tree has {} samples", x.ncols(), self.num_samples())));
        }
        let mut a = Array2::zeros((x.nrows(), self.leaves.len()));
        for (n, leaf) in self.leaves.iter().enumerate() {
            let mut col = a.column_mut(n);
            for &i in &leaf.members {
                col += &x.column(i);
            }
        }
        Ok(a)
    }

    pub fn objective(&self, x: ArrayView2<f64>, r: ArrayView1<f64>) -> Result<f64> {
        let residual = &r - &x.dot(&self.values());
        Ok(residual.dot(&residual))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Initial partition with up to `initial_regions` regions per dimension. The
/// boundaries are the cluster boundaries closest to the equal-interval quantiles
/// of each column; β starts at 0.
pub fn init_tree(disc: &Discretizer, u: ArrayView2<f64>, initial_regions: usize) -> Result<SrtModel> {
    if initial_regions == 0 {
        return Err(Error::Config("initial region count must be at least 1".into()));
    }
    if u.nrows() == 0 {
        return Err(Error::InvalidInput("no samples to build a tree from".into()));
    }
    let radices = disc.radices();
    let mut clamped = Vec::new();
    let mut cuts: Vec<Vec<usize>> = Vec::with_capacity(disc.dims());
    for d in 0..disc.dims() {
        let available = radices[d] - 1;
        let wanted = initial_regions - 1;
        if wanted > available {
            clamped.push(d);
        }
        let mut sorted = u.column(d).to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut chosen: Vec<usize> = Vec::new();
        for k in 1..=wanted.min(available) {
            let q = quantile(&sorted, k as f64 / initial_regions as f64);
            let best = (1..radices[d])
                .filter(|b| !chosen.contains(b))
                .min_by(|&a, &b| {
                    (disc.boundary_value(d, a) - q).abs().total_cmp(&(disc.boundary_value(d, b) - q).abs()).then(a.cmp(&b))
                })
                .expect("an unused boundary remains");
            chosen.push(best);
        }
        chosen.sort_unstable();
        cuts.push(chosen);
    }
    if !clamped.is_empty() {
        log::warn!("dimensions {clamped:?} have fewer cluster boundaries than requested initial regions; using all of them");
    }

    let cells: Vec<Vec<usize>> = u.rows().into_iter().map(|row| disc.cell(row)).collect::<Result<_>>()?;
    let region_of = |d: usize, c: usize| cuts[d].iter().filter(|&&b| b <= c).count();
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        let key: Vec<usize> = cell.iter().enumerate().map(|(d, &c)| region_of(d, c)).collect();
        groups.entry(key).or_default().push(i);
    }
    let leaves = groups
        .into_iter()
        .map(|(regions, members)| {
            let ranges = regions
                .iter()
                .enumerate()
                .map(|(d, &k)| {
                    let lo = if k == 0 { 0 } else { cuts[d][k - 1] };
                    let hi = cuts[d].get(k).copied().unwrap_or(radices[d]);
                    (lo, hi)
                })
                .collect();
            let centroid = centroid(u, &members);
            Leaf { ranges, members, centroid, beta: 0.0 }
        })
        .collect();
    let mut model = SrtModel {
        discretizer: disc.clone(),
        cells,
        leaves,
        leaf_table: BTreeMap::new(),
        active_boundaries: Vec::new(),
    };
    model.rebuild_index()?;
    Ok(model)
}

/// `|β_n| · Σ_{j ∈ leaf n} ‖u_j − c_n‖²`.
pub fn leaf_dispersion(model: &SrtModel, leaf: usize, u: ArrayView2<f64>) -> f64 {
    let l = &model.leaves[leaf];
    if l.members.is_empty() {
        return 0.0;
    }
    l.beta.abs() * scatter(u, &l.members, &l.centroid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub leaf: usize,
    pub dim: usize,
    pub boundary: usize,
    pub reduction: f64,
}

#[derive(Debug, Clone)]
pub struct GrowOutcome {
    pub model: SrtModel,
    pub splits: Vec<SplitRecord>,
    pub saturated: bool,
}

/// Best split of one leaf: maximal weighted dispersion reduction, ties to the
/// lowest dimension, then the lowest boundary. Only splits leaving both children
/// non-empty are candidates.
fn best_split(model: &SrtModel, leaf: usize, u: ArrayView2<f64>) -> Option<SplitRecord> {
    let l = &model.leaves[leaf];
    let weight = l.beta.abs();
    let parent = scatter(u, &l.members, &l.centroid);
    let mut best: Option<SplitRecord> = None;
    for (d, &(lo, hi)) in l.ranges.iter().enumerate() {
        for b in lo + 1..hi {
            let (left, right): (Vec<usize>, Vec<usize>) = l.members.iter().partition(|&&i| model.cells[i][d] < b);
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let children = scatter(u, &left, &centroid(u, &left)) + scatter(u, &right, &centroid(u, &right));
            let reduction = weight * (parent - children);
            if best.as_ref().is_none_or(|s| reduction > s.reduction) {
                best = Some(SplitRecord { leaf, dim: d, boundary: b, reduction });
            }
        }
    }
    best
}

/// One growth step: the `cuts` splittable leaves of largest dispersion are each
/// split in two. Children inherit the parent's β; the left child keeps the parent
/// id and the right child is appended.
pub fn grow_step(model: &SrtModel, u: ArrayView2<f64>, cuts: usize) -> Result<GrowOutcome> {
    let mut ranked: Vec<(f64, usize)> = (0..model.leaves.len()).map(|n| (leaf_dispersion(model, n, u), n)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let splits: Vec<SplitRecord> = ranked.iter().filter_map(|&(_, n)| best_split(model, n, u)).take(cuts).collect();
    if splits.is_empty() {
        return Ok(GrowOutcome { model: model.clone(), splits, saturated: true });
    }
    let mut next = model.clone();
    for s in &splits {
        let parent = next.leaves[s.leaf].clone();
        let (left, right): (Vec<usize>, Vec<usize>) = parent.members.iter().partition(|&&i| next.cells[i][s.dim] < s.boundary);
        let mut lr = parent.ranges.clone();
        lr[s.dim].1 = s.boundary;
        let mut rr = parent.ranges.clone();
        rr[s.dim].0 = s.boundary;
        next.leaves[s.leaf] = Leaf { ranges: lr, centroid: centroid(u, &left), members: left, beta: parent.beta };
        next.leaves.push(Leaf { ranges: rr, centroid: centroid(u, &right), members: right, beta: parent.beta });
    }
    next.rebuild_index()?;
    Ok(GrowOutcome { model: next, splits, saturated: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn fit_rows(a: ArrayView2<f64>, r: ArrayView1<f64>, beta0: Array1<f64>, step: Option<f64>, iters: usize) -> Result<(Array1<f64>, FitReport)> {
    let gram = a.t().dot(&a);
    let rhs = a.t().dot(&r);
    let problem = QuadraticGd { gram: &gram, rhs: &rhs, target_sq: r.dot(&r) };
    let step = step.unwrap_or_else(|| problem.default_step());
    let (beta, iterations, converged) = problem.run(beta0, step, iters, GD_TOLERANCE, true)?;
    let objective = problem.objective(&beta);
    Ok((beta, FitReport { objective, iterations, converged }))
}

/// Gradient descent on the leaf weights, warm-started from the current β.
pub fn fit_beta_gd(model: &mut SrtModel, x: ArrayView2<f64>, r: ArrayView1<f64>, step: Option<f64>, iters: usize) -> Result<FitReport> {
    if x.nrows() != r.len() {
        return Err(Error::Shape(format!("X̂ has {} rows, R has {}", x.nrows(), r.len())));
    }
    let a = model.composite_design(x)?;
    let (beta, report) = fit_rows(a.view(), r, model.beta(), step, iters)?;
    model.set_beta(&beta);
    Ok(report)
}

fn heldout_error(model: &SrtModel, x: ArrayView2<f64>, r: ArrayView1<f64>, folds: &[usize], k: usize, config: &SrtConfig) -> Result<f64> {
    let a = model.composite_design(x)?;
    let mut total = 0.0;
    for fold in 0..k {
        let train: Vec<usize> = (0..r.len()).filter(|&i| folds[i] != fold).collect();
        let held: Vec<usize> = (0..r.len()).filter(|&i| folds[i] == fold).collect();
        let at = a.select(Axis(0), &train);
        let rt = r.select(Axis(0), &train);
        let (beta, _) = fit_rows(at.view(), rt.view(), Array1::zeros(model.leaves.len()), config.learning_rate, config.gd_iters)?;
        let residual = r.select(Axis(0), &held) - a.select(Axis(0), &held).dot(&beta);
        total += residual.dot(&residual);
    }
    Ok(total / r.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub leaves: usize,
    pub objective: f64,
    pub heldout_mse: f64,
    pub splits: Vec<SplitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrtTraining {
    pub model: SrtModel,
    pub rounds: Vec<RoundRecord>,
    pub selected_round: usize,
}

/// Discretize, initialize, then alternate fitting and growth; the returned model
/// is the round with the lowest cross-validated error over the `M` subset rows.
pub fn train_srtbv(x: ArrayView2<f64>, r: ArrayView1<f64>, u: ArrayView2<f64>, config: &SrtConfig, seed: &SeedSpec) -> Result<SrtTraining> {
    let (m, n) = x.dim();
    if r.len() != m || u.nrows() != n {
        return Err(Error::Shape(format!("X̂ is {m}×{n}, R has {} entries, U has {} rows", r.len(), u.nrows())));
    }
    if m < config.folds {
        return Err(Error::InvalidInput(format!("{m} subset rows cannot be split into {} folds", config.folds)));
    }
    let disc = fit_discretizer(u, config.max_clusters)?;
    let folds = kfold_assignment(m, config.folds, seed);
    let mut model = init_tree(&disc, u, config.initial_regions)?;
    let report = fit_beta_gd(&mut model, x, r, config.learning_rate, config.gd_iters)?;
    let mut rounds = vec![RoundRecord {
        round: 0,
        leaves: model.leaves.len(),
        objective: report.objective,
        heldout_mse: heldout_error(&model, x, r, &folds, config.folds, config)?,
        splits: Vec::new(),
    }];
    let mut snapshots = vec![model.clone()];
    for round in 1..=config.growth_rounds {
        let grown = grow_step(&model, u, config.cuts_per_step)?;
        if grown.saturated {
            log::info!("tree saturated after {} growth rounds", round - 1);
            break;
        }
        model = grown.model;
        let report = fit_beta_gd(&mut model, x, r, config.learning_rate, config.gd_iters)?;
        rounds.push(RoundRecord {
            round,
            leaves: model.leaves.len(),
            objective: report.objective,
            heldout_mse: heldout_error(&model, x, r, &folds, config.folds, config)?,
            splits: grown.splits,
        });
        snapshots.push(model.clone());
    }
    let selected_round = rounds
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.heldout_mse.total_cmp(&b.1.heldout_mse).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(SrtTraining { model: snapshots.swap_remove(selected_round), rounds, selected_round })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_cluster_disc() -> Discretizer {
        Discretizer { centers: vec![vec![0.0, 10.0]] }
    }

    #[test]
    fn discretize_nearest_with_low_ties() {
        let d = two_cluster_disc();
        assert_eq!(d.discretize(array![2.0].view()).unwrap(), vec![(0.0, 0)]);
        assert_eq!(d.discretize(array![5.0].view()).unwrap(), vec![(0.0, 0)]);
        assert_eq!(d.discretize(array![10.0].view()).unwrap(), vec![(10.0, 1)]);
    }

    #[test]
    fn mixed_radix_examples() {
        assert_eq!(leaf_index(&[0, 0, 0], &[3, 2, 2]).unwrap(), 0);
        assert_eq!(leaf_index(&[1, 0], &[2, 2]).unwrap(), 2);
        assert_eq!(leaf_index(&[2, 1, 1], &[3, 2, 2]).unwrap(), 11);
        assert_eq!(unflatten_index(11, &[3, 2, 2]).unwrap(), vec![2, 1, 1]);
        assert!(leaf_index(&[2, 0], &[2, 2]).is_err());
        assert!(leaf_index(&[0; 40], &[6; 40]).is_err());
    }

    #[test]
    fn single_region_init_is_one_leaf() {
        let u = array![[0.0, 1.0], [0.1, 5.0], [9.0, 1.0], [9.1, 5.0]];
        let disc = fit_discretizer(u.view(), 2).unwrap();
        let t = init_tree(&disc, u.view(), 1).unwrap();
        assert_eq!(t.leaves.len(), 1);
        assert_eq!(t.leaves[0].support(), 4);
        let full = init_tree(&disc, u.view(), 2).unwrap();
        assert_eq!(full.leaves.len(), 4);
    }

    #[test]
    fn dispersion_example() {
        let u = array![[0.0], [3.0], [-2.0]];
        let mut t = init_tree(&Discretizer { centers: vec![vec![0.0]] }, u.view(), 1).unwrap();
        // centroid is fixed by hand so squared distances are {1, 4}
        t.leaves[0].members = vec![0, 1];
        t.leaves[0].centroid = vec![1.0];
        t.leaves[0].beta = -2.0;
        assert_eq!(leaf_dispersion(&t, 0, u.view()), 10.0);
        t.leaves[0].beta = 0.0;
        assert_eq!(leaf_dispersion(&t, 0, u.view()), 0.0);
    }

    #[test]
    fn split_separates_two_point_clusters() {
        let u = array![[0.0, 0.0], [0.0, 1.0], [5.0, 0.0], [5.0, 1.0]];
        let disc = Discretizer { centers: vec![vec![0.0, 5.0], vec![0.0, 1.0]] };
        let mut t = init_tree(&disc, u.view(), 1).unwrap();
        t.leaves[0].beta = 1.0;
        let g = grow_step(&t, u.view(), 1).unwrap();
        assert_eq!((g.splits[0].dim, g.splits[0].boundary), (0, 1));
        assert_eq!(g.model.leaves.len(), 2);
        // zero weight: every reduction ties at 0, the lowest dimension wins
        t.leaves[0].beta = 0.0;
        let g = grow_step(&t, u.view(), 5).unwrap();
        assert_eq!(g.splits.len(), 1);
        assert_eq!(g.splits[0].dim, 0);
        assert!(!g.saturated);
    }

    #[test]
    fn saturation_is_flagged() {
        let u = array![[0.0], [1.0]];
        let disc = Discretizer { centers: vec![vec![0.0, 1.0]] };
        let t = init_tree(&disc, u.view(), 2).unwrap();
        assert!(grow_step(&t, u.view(), 2).unwrap().saturated);
    }

    #[test]
    fn gd_fit_recovers_identity_system() {
        let u = array![[0.0], [1.0], [2.0]];
        let disc = Discretizer { centers: vec![vec![0.0, 1.0, 2.0]] };
        let mut t = init_tree(&disc, u.view(), 3).unwrap();
        let x = Array2::eye(3);
        let r = array![1.0, -2.0, 0.5];
        fit_beta_gd(&mut t, x.view(), r.view(), None, 10_000).unwrap();
        for (v, want) in t.values().iter().zip(r.iter()) {
            assert!((v - want).abs() < 1e-6);
        }
    }
}
