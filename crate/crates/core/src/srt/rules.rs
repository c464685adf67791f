//! Readable rules from a fitted tree.
//!
//! Leaf weights are grouped into at most five value levels. Each leaf becomes one
//! conjunction over the regions it occupies, with dimensions ordered by how much
//! they tell about the value level.

use serde::{Deserialize, Serialize};

use super::{kmeans_1d, nearest, SrtModel};
use crate::characteristics::column_name;
use crate::error::{Error, Result};

pub const GROUP_LABELS: [&str; 5] = ["quite low", "low", "moderate", "large", "quite large"];
const GROUPS: usize = 5;
/// Leaf weights closer than this (relative) count as one value level.
const VALUE_TOLERANCE: f64 = 1e-9;

fn group_labels(count: usize) -> Vec<&'static str> {
    match count {
        1 => vec!["moderate"],
        2 => vec!["low", "large"],
        3 => vec!["low", "moderate", "large"],
        4 => vec!["quite low", "low", "large", "quite large"],
        _ => GROUP_LABELS.to_vec(),
    }
}

fn region_labels(count: usize) -> Vec<String> {
    let fixed: &[&str] = match count {
        1 => &["any"],
        2 => &["small", "large"],
        3 => &["small", "medium", "large"],
        4 => &["very small", "small", "large", "very large"],
        5 => &["very small", "small", "medium", "large", "very large"],
        _ => &[],
    };
    if fixed.is_empty() {
        (1..=count).map(|j| format!("level {j} of {count}")).collect()
    } else {
        fixed.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGroup {
    pub label: String,
    pub center: f64,
    pub value_range: (f64, f64),
    pub support: usize,
    pub leaves: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCondition {
    pub dim: usize,
    pub name: String,
    /// Inclusive span of the dimension's active regions.
    pub region: (usize, usize),
    /// Bounds in standardized units; `None` is unbounded.
    pub interval: (Option<f64>, Option<f64>),
    pub ordinal_label: String,
}

impl RuleCondition {
    fn describe(&self) -> String {
        let bounds = match self.interval {
            (Some(lo), Some(hi)) => format!("{lo:.3} < u{} <= {hi:.3}", self.dim + 1),
            (Some(lo), None) => format!("u{} > {lo:.3}", self.dim + 1),
            (None, Some(hi)) => format!("u{} <= {hi:.3}", self.dim + 1),
            (None, None) => format!("u{} any", self.dim + 1),
        };
        format!("{} is {} ({bounds})", self.name, self.ordinal_label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub group: String,
    pub group_index: usize,
    pub leaf: usize,
    pub conjunctions: Vec<RuleCondition>,
    pub value_range: (f64, f64),
    pub support: usize,
}

impl Rule {
    /// `regions[d]` is the sample's active-region index in dimension `d`.
    pub fn matches(&self, regions: &[usize]) -> bool {
        self.conjunctions.iter().all(|c| c.region.0 <= regions[c.dim] && regions[c.dim] <= c.region.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub groups: Vec<ValueGroup>,
    pub rules: Vec<Rule>,
    /// Dimensions by descending information gain.
    pub dimension_order: Vec<usize>,
    pub information_gain: Vec<f64>,
    /// Fewer than five value groups could be formed.
    pub collapsed: bool,
    /// Active region boundaries per dimension, as center ranks.
    pub boundaries: Vec<Vec<usize>>,
}

fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

fn region_of(boundaries: &[usize], rank: usize) -> usize {
    boundaries.iter().filter(|&&b| b <= rank).count()
}

fn samples(n: usize) -> String {
    if n == 1 { "1 sample".to_string() } else { format!("{n} samples") }
}

impl RuleSet {
    /// Active-region index per dimension for a cell of center ranks.
    pub fn regions_of(&self, cell: &[usize]) -> Vec<usize> {
        cell.iter().enumerate().map(|(d, &c)| region_of(&self.boundaries[d], c)).collect()
    }

    pub fn matching_rules(&self, cell: &[usize]) -> Vec<usize> {
        let regions = self.regions_of(cell);
        (0..self.rules.len()).filter(|&k| self.rules[k].matches(&regions)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per group, the rules rendered as a tree that shares common leading conditions.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let order: Vec<String> = self.dimension_order.iter().map(|&d| format!("{} ({:.4})", column_name(d), self.information_gain[d])).collect();
        out.push_str(&format!("dimension order by information gain: {}\n", order.join(", ")));
        if self.collapsed {
            out.push_str(&format!("value groups collapsed to {}\n", self.groups.len()));
        }
        for (g, group) in self.groups.iter().enumerate() {
            out.push_str(&format!(
                "\n[{}] center {:.6}, values {:.6} .. {:.6}, {}\n",
                group.label, group.center, group.value_range.0, group.value_range.1, samples(group.support)
            ));
            let mut printed: Vec<String> = Vec::new();
            for rule in self.rules.iter().filter(|r| r.group_index == g) {
                let lines: Vec<String> = rule.conjunctions.iter().map(RuleCondition::describe).collect();
                if lines.is_empty() {
                    out.push_str(&format!("  (all samples) => value {:.6}, {}\n", rule.value_range.0, samples(rule.support)));
                    continue;
                }
                let shared = printed.iter().zip(&lines).take_while(|(a, b)| a == b).count();
                for (depth, line) in lines.iter().enumerate().skip(shared) {
                    out.push_str(&"  ".repeat(depth + 1));
                    out.push_str(line);
                    if depth + 1 == lines.len() {
                        out.push_str(&format!(" => value {:.6}, {}", rule.value_range.0, samples(rule.support)));
                    }
                    out.push('\n');
                }
                printed = lines;
            }
        }
        out
    }
}

pub fn extract_rules(model: &SrtModel) -> Result<RuleSet> {
    if model.leaves.is_empty() {
        return Err(Error::InvalidInput("tree has no leaves".into()));
    }
    let betas: Vec<f64> = model.leaves.iter().map(|l| l.beta).collect();
    let weights: Vec<f64> = model.leaves.iter().map(|l| l.support() as f64).collect();
    let mut distinct = betas.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= VALUE_TOLERANCE * b.abs().max(1.0));
    let centers = if distinct.len() < GROUPS { distinct } else { kmeans_1d(&betas, Some(&weights), GROUPS) };
    let collapsed = centers.len() < GROUPS;
    let labels = group_labels(centers.len());
    let leaf_group: Vec<usize> = betas.iter().map(|&b| nearest(&centers, b)).collect();

    let mut groups: Vec<ValueGroup> = centers
        .iter()
        .zip(&labels)
        .map(|(&center, label)| ValueGroup {
            label: label.to_string(),
            center,
            value_range: (f64::INFINITY, f64::NEG_INFINITY),
            support: 0,
            leaves: Vec::new(),
        })
        .collect();
    for (n, &g) in leaf_group.iter().enumerate() {
        let group = &mut groups[g];
        group.leaves.push(n);
        group.support += model.leaves[n].support();
        group.value_range.0 = group.value_range.0.min(betas[n]);
        group.value_range.1 = group.value_range.1.max(betas[n]);
    }
    groups.retain(|g| !g.leaves.is_empty());

    let dims = model.discretizer.dims();
    let boundaries = model.active_boundaries.clone();
    let sample_group: Vec<usize> = {
        let leaf_of = model.sample_leaves();
        leaf_of.iter().map(|&n| leaf_group[n]).collect()
    };
    let information_gain: Vec<f64> = (0..dims)
        .map(|d| {
            let regions = boundaries[d].len() + 1;
            let mut table = vec![vec![0usize; centers.len()]; regions];
            let mut marginal = vec![0usize; centers.len()];
            for (i, cell) in model.cells.iter().enumerate() {
                table[region_of(&boundaries[d], cell[d])][sample_group[i]] += 1;
                marginal[sample_group[i]] += 1;
            }
            let n = model.cells.len() as f64;
            let conditional: f64 = table.iter().map(|row| row.iter().sum::<usize>() as f64 / n * entropy(row)).sum();
            (entropy(&marginal) - conditional).max(0.0)
        })
        .collect();
    let mut dimension_order: Vec<usize> = (0..dims).collect();
    dimension_order.sort_by(|&a, &b| {
        boundaries[a]
            .is_empty()
            .cmp(&boundaries[b].is_empty())
            .then(information_gain[b].total_cmp(&information_gain[a]))
            .then(a.cmp(&b))
    });

    // group index after dropping empty groups
    let remap: Vec<usize> = {
        let mut map = vec![0; centers.len()];
        for (k, g) in groups.iter().enumerate() {
            for &n in &g.leaves {
                map[leaf_group[n]] = k;
            }
        }
        map
    };
    let mut rules = Vec::with_capacity(model.leaves.len());
    for g in 0..groups.len() {
        let mut members: Vec<usize> = groups[g].leaves.clone();
        members.sort_by(|&a, &b| {
            let key = |n: usize| -> Vec<(usize, usize)> {
                dimension_order.iter().map(|&d| model.leaves[n].ranges[d]).collect()
            };
            key(a).cmp(&key(b))
        });
        for n in members {
            let leaf = &model.leaves[n];
            let mut conjunctions = Vec::new();
            for &d in &dimension_order {
                let (lo, hi) = leaf.ranges[d];
                let regions = boundaries[d].len() + 1;
                let first = region_of(&boundaries[d], lo);
                let last = region_of(&boundaries[d], hi - 1);
                if first == 0 && last == regions - 1 {
                    continue;
                }
                let names = region_labels(regions);
                let ordinal_label = if first == last { names[first].clone() } else { format!("{} to {}", names[first], names[last]) };
                let lower = (lo > 0).then(|| model.discretizer.boundary_value(d, lo));
                let upper = (hi < model.discretizer.centers[d].len()).then(|| model.discretizer.boundary_value(d, hi));
                conjunctions.push(RuleCondition { dim: d, name: column_name(d), region: (first, last), interval: (lower, upper), ordinal_label });
            }
            rules.push(Rule {
                group: groups[g].label.clone(),
                group_index: remap[leaf_group[n]],
                leaf: n,
                conjunctions,
                value_range: (leaf.beta, leaf.beta),
                support: leaf.support(),
            });
        }
    }
    Ok(RuleSet { groups, rules, dimension_order, information_gain, collapsed, boundaries })
}
