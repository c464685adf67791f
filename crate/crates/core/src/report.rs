//! On-disk artifacts shared by the command-line stages, and the final report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::characteristics::{relevance_csv, RelevanceRow};
use crate::curves::{Curve, Direction};
use crate::error::{Error, Result};
use crate::metrics::{kendall_tau_distance, mse_score, pearson, spearman};
use crate::srt::RuleSet;
use crate::valuation::ValuationResult;

/// Methods preferred as ground truth, in order.
pub const REFERENCE_METHODS: [&str; 2] = ["exact-shapley", "mc-shapley"];

pub type ValuesFile = BTreeMap<String, ValuationResult>;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads `values.json`, or an empty map when it does not exist yet.
pub fn read_values(path: &Path) -> Result<ValuesFile> {
    if path.exists() {
        read_json(path)
    } else {
        Ok(ValuesFile::new())
    }
}

/// Adds or replaces one method's entry, keeping the others.
pub fn merge_values(path: &Path, result: ValuationResult) -> Result<ValuesFile> {
    let mut values = read_values(path)?;
    values.insert(result.method.clone(), result);
    write_json(path, &values)?;
    Ok(values)
}

/// Reads reference values from a `values.json` map (choosing `method`, else the
/// first available Shapley entry, else a lone entry) or from a bare JSON array.
pub fn read_reference(path: &Path, method: Option<&str>) -> Result<(String, Vec<f64>)> {
    let raw: serde_json::Value = read_json(path)?;
    if raw.is_array() {
        let values: Vec<f64> = serde_json::from_value(raw).map_err(|e| Error::parse(path, e.to_string()))?;
        return Ok(("reference".to_string(), values));
    }
    let map: ValuesFile = serde_json::from_value(raw).map_err(|e| Error::parse(path, e.to_string()))?;
    let key = match method {
        Some(m) => m.to_string(),
        None => REFERENCE_METHODS
            .iter()
            .find(|m| map.contains_key(**m))
            .map(|m| m.to_string())
            .or_else(|| (map.len() == 1).then(|| map.keys().next().cloned()).flatten())
            .ok_or_else(|| Error::parse(path, "no reference method found; pass one explicitly"))?,
    };
    let entry = map.get(&key).ok_or_else(|| Error::parse(path, format!("no entry for `{key}`")))?;
    Ok((key, entry.values.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub reference: String,
    pub mse: f64,
    pub kendall_tau_distance: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

/// Scores every method except the reference itself.
pub fn compare_to_reference(values: &ValuesFile, reference_name: &str, reference: &[f64]) -> Result<Vec<MetricRow>> {
    values
        .values()
        .filter(|r| r.method != reference_name)
        .map(|r| {
            Ok(MetricRow {
                method: r.method.clone(),
                reference: reference_name.to_string(),
                mse: mse_score(&r.values, reference)?,
                kendall_tau_distance: kendall_tau_distance(&r.values, reference)?,
                pearson: pearson(&r.values, reference),
                spearman: spearman(&r.values, reference),
            })
        })
        .collect()
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("method,reference,mse,kendall_tau_distance,pearson,spearman\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{},{}",
            r.method,
            r.reference,
            r.mse,
            r.kendall_tau_distance,
            optional(r.pearson),
            optional(r.spearman)
        );
    }
    out
}

/// Replaces any stored curve with the same identity.
pub fn merge_curve(curves: &mut Vec<Curve>, curve: Curve) {
    curves.retain(|c| !(c.label == curve.label && c.direction == curve.direction && c.order == curve.order));
    curves.push(curve);
    curves.sort_by(|a, b| (a.direction, &a.label, a.order).cmp(&(b.direction, &b.label, b.order)));
}

pub fn curves_csv(curves: &[Curve]) -> String {
    let mut out = String::from("label,direction,order,step,accuracy\n");
    for c in curves {
        for (step, acc) in &c.points {
            let _ = writeln!(out, "{},{},{},{step},{acc:?}", c.label, c.direction, c.order);
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

/// Line chart of every curve with the given direction.
pub fn curves_svg(curves: &[Curve], direction: Direction) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 170.0, 30.0, 50.0);
    let chosen: Vec<&Curve> = curves.iter().filter(|c| c.direction == direction).collect();
    let max_step = chosen.iter().map(|c| c.k).max().unwrap_or(1).max(1) as f64;
    let accs = chosen.iter().flat_map(|c| c.points.iter().map(|p| p.1));
    let (lo, hi) = accs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let px = |s: f64| left + s / max_step * (w - left - right);
    let py = |a: f64| top + (hi - a) / (hi - lo) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="18">point {direction} curves</text>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} L{left},{} L{},{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">points {direction}</text>"#, px(max_step / 2.0), h - 12.0);
    for (label, a) in [(format!("{hi:.3}"), hi), (format!("{lo:.3}"), lo)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, left - 6.0, py(a) + 4.0);
    }
    for (i, c) in chosen.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = c.points.iter().map(|&(s, a)| format!("{:.1},{:.1}", px(s as f64), py(a))).collect();
        let dash = if c.order == crate::curves::Ordering::Random { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#, path.join(" "));
        let y = top + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{y:.1}" fill="{colour}">{} ({})</text>"#, w - right + 10.0, c.label, c.order);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Everything the `report` stage gathers from a run directory.
#[derive(Debug, Default)]
pub struct Report {
    pub values: ValuesFile,
    pub reference: Option<(String, Vec<f64>)>,
    pub curves: Vec<Curve>,
    pub rules: Option<RuleSet>,
    pub relevance: Option<Vec<RelevanceRow>>,
}

/// Writes `values.json`, `metrics.csv`, `curves.csv`, rule files, plots and a
/// `summary.md` into `dir`. Output depends only on the report contents.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut summary = String::from("# Valuation report\n\n");

    write_json(&dir.join("values.json"), &report.values)?;
    let _ = writeln!(summary, "## Methods\n");
    for r in report.values.values() {
        let _ = writeln!(summary, "- {} ({} values, seed {}, config {})", r.method, r.values.len(), r.provenance.seed, &r.provenance.config_hash[..12.min(r.provenance.config_hash.len())]);
    }

    let _ = writeln!(summary, "\n## Agreement with reference\n");
    match &report.reference {
        Some((name, reference)) => {
            let rows = compare_to_reference(&report.values, name, reference)?;
            write_text(&dir.join("metrics.csv"), &metrics_csv(&rows))?;
            let _ = writeln!(summary, "| method | MSE | Kendall-tau distance |\n|---|---|---|");
            for r in &rows {
                let _ = writeln!(summary, "| {} | {:.6} | {:.4} |", r.method, r.mse, r.kendall_tau_distance);
            }
        }
        None => {
            write_text(&dir.join("metrics.csv"), &metrics_csv(&[]))?;
            let _ = writeln!(summary, "No reference values (exact-shapley or mc-shapley) were available.");
        }
    }

    let _ = writeln!(summary, "\n## Curves\n");
    if report.curves.is_empty() {
        let _ = writeln!(summary, "No curves were computed.");
    } else {
        write_text(&dir.join("curves.csv"), &curves_csv(&report.curves))?;
        for direction in [Direction::Removal, Direction::Addition] {
            if report.curves.iter().any(|c| c.direction == direction) {
                write_text(&dir.join(format!("{direction}_curves.svg")), &curves_svg(&report.curves, direction))?;
            }
        }
        for c in &report.curves {
            let _ = writeln!(summary, "- {} {} by {}: accuracy {:.4} after {} points", c.label, c.direction, c.order, c.final_accuracy(), c.k);
        }
    }

    if let Some(rules) = &report.rules {
        write_text(&dir.join("rules.txt"), &rules.to_text())?;
        write_text(&dir.join("rules.json"), &(rules.to_json()? + "\n"))?;
        let _ = writeln!(summary, "\n## Rules\n\n{} rules over {} value groups, see rules.txt.", rules.rules.len(), rules.groups.len());
    }
    if let Some(rows) = &report.relevance {
        write_text(&dir.join("relevance.csv"), &relevance_csv(rows))?;
    }
    write_text(&dir.join("summary.md"), &summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::Ordering;
    use crate::valuation::Provenance;

    fn result(method: &str, values: Vec<f64>) -> ValuationResult {
        ValuationResult {
            method: method.into(),
            values,
            std_error: None,
            provenance: Provenance { config_hash: "abc".into(), seed: 1, subsets: 0, runtime_seconds: 0.5 },
        }
    }

    #[test]
    fn metrics_skip_the_reference() {
        let mut values = ValuesFile::new();
        values.insert("exact-shapley".into(), result("exact-shapley", vec![1.0, 2.0, 3.0]));
        values.insert("ame-ols".into(), result("ame-ols", vec![3.0, 2.0, 1.0]));
        let rows = compare_to_reference(&values, "exact-shapley", &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].kendall_tau_distance, 1.0);
        assert!(metrics_csv(&rows).starts_with("method,reference"));
    }

    #[test]
    fn curve_merge_replaces_duplicates() {
        let c = |acc: f64| Curve { direction: Direction::Removal, order: Ordering::Value, k: 2, points: vec![(0, 1.0), (2, acc)], label: "m".into() };
        let mut curves = vec![c(0.5)];
        merge_curve(&mut curves, c(0.25));
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].final_accuracy(), 0.25);
        assert!(curves_svg(&curves, Direction::Removal).contains("polyline"));
    }

    #[test]
    fn report_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut values = ValuesFile::new();
        values.insert("mc-shapley".into(), result("mc-shapley", vec![0.1, 0.2]));
        let report = Report { reference: Some(("mc-shapley".into(), vec![0.1, 0.2])), values, ..Report::default() };
        emit_report(&report, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("values.json")).unwrap();
        emit_report(&report, dir.path()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("values.json")).unwrap());
        assert!(!String::from_utf8(first).unwrap().contains("runtime"));
    }
}
