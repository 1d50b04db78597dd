//! Pearson correlation between per-document confidence series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::evaluate::Method;
use super::pipeline::DocumentResult;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `None` where either series has zero variance.
    pub values: Vec<Vec<Option<f64>>>,
    /// Series with zero variance.
    pub degenerate: Vec<String>,
    pub n: usize,
}

fn centered_sums(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter().zip(y).fold((0.0, 0.0, 0.0), |(sxy, sxx, syy), (a, b)| {
        let (dx, dy) = (a - mx, b - my);
        (sxy + dx * dy, sxx + dx * dx, syy + dy * dy)
    })
}

fn is_degenerate(values: &[f64]) -> bool {
    let first = values[0];
    values.iter().all(|&v| v == first)
}

/// Two-pass Pearson coefficient, clamped into [-1, 1]; `None` for a
/// constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || is_degenerate(x) || is_degenerate(y) {
        return None;
    }
    let (sxy, sxx, syy) = centered_sums(x, y);
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlates every pair of series. Needs at least two series of equal
/// length with at least three points each.
pub fn correlation_report(series: &[ScoreSeries]) -> Result<CorrelationMatrix, HarnessError> {
    if series.len() < 2 {
        return Err(HarnessError::Correlation("need at least two score series".into()));
    }
    let n = series[0].values.len();
    if n < 3 {
        return Err(HarnessError::Correlation(format!("need at least three documents, got {n}")));
    }
    if let Some(s) = series.iter().find(|s| s.values.len() != n) {
        return Err(HarnessError::Correlation(format!(
            "series `{}` has {} values, expected {n}",
            s.name,
            s.values.len()
        )));
    }
    let degenerate: Vec<String> = series
        .iter()
        .filter(|s| is_degenerate(&s.values))
        .map(|s| s.name.clone())
        .collect();
    let values = series
        .iter()
        .enumerate()
        .map(|(i, a)| {
            series
                .iter()
                .enumerate()
                .map(|(j, b)| {
                    if i == j {
                        (!is_degenerate(&a.values)).then_some(1.0)
                    } else {
                        pearson(&a.values, &b.values)
                    }
                })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        names: series.iter().map(|s| s.name.clone()).collect(),
        values,
        degenerate,
        n,
    })
}

impl CorrelationMatrix {
    /// Header row of series names; undefined cells are left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series");
        for name in &self.names {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.values) {
            out.push_str(&csv_field(name));
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A named per-document score map.
pub type NamedScores = (String, BTreeMap<String, f64>);

/// Aligns named per-document score maps on the documents they all share,
/// in document-id order.
pub fn align_series(named: Vec<NamedScores>) -> Vec<ScoreSeries> {
    let mut common: Option<BTreeSet<String>> = None;
    for (_, scores) in &named {
        let ids: BTreeSet<String> = scores.keys().cloned().collect();
        common = Some(match common {
            None => ids,
            Some(c) => c.intersection(&ids).cloned().collect(),
        });
    }
    let common = common.unwrap_or_default();
    named
        .into_iter()
        .map(|(name, scores)| ScoreSeries {
            name,
            values: common.iter().map(|id| scores[id]).collect(),
        })
        .collect()
}

#[derive(Deserialize)]
struct ReportDocuments {
    documents: Vec<DocumentResult>,
}

/// Reads an evaluation or claim report and returns one confidence map per
/// fused method, named `<label>:<method>`.
pub fn load_report_scores(path: &std::path::Path, label: &str) -> Result<Vec<NamedScores>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let report: ReportDocuments = serde_json::from_str(&text).map_err(|e| HarnessError::parse(path, e))?;
    Ok(Method::FUSED
        .iter()
        .map(|&method| {
            let scores = report
                .documents
                .iter()
                .filter_map(|d| method.confidence(d).map(|c| (d.doc_id.clone(), c)))
                .collect();
            (format!("{label}:{}", method.name()), scores)
        })
        .collect())
}
