//! The cross-model comparison table: one row per evaluated checkpoint plus a
//! labeled placeholder for ALS (out of scope), and a relative-improvement
//! line comparing the best hybrid against the best of everything else.

use serde::Serialize;

use nhr_core::evaluation::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowGroup {
    /// Non-neural reference scorers (PopRank, BPR, the ALS placeholder).
    Baseline,
    /// Single neural scorers (GMF, MLP, standalone Aux).
    Neural,
    /// Fused interaction-only models (the NCF analog).
    Fusion,
    /// Fused models that consume side features (the point of the exercise).
    Hybrid,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub model: String,
    pub group: RowGroup,
    pub hr: Option<f64>,
    pub ndcg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TableRow {
    pub fn from_report(report: &EvalReport, group: RowGroup) -> Self {
        TableRow {
            model: report.model.clone(),
            group,
            hr: Some(report.hr),
            ndcg: Some(report.ndcg),
            fingerprint: Some(report.candidates_fingerprint.clone()),
            note: None,
        }
    }

    pub fn placeholder(model: &str, group: RowGroup, note: &str) -> Self {
        TableRow {
            model: model.to_string(),
            group,
            hr: None,
            ndcg: None,
            fingerprint: None,
            note: Some(note.to_string()),
        }
    }
}

/// Per-metric relative improvement of the best hybrid over the best
/// non-hybrid, in percent: (hybrid − best_other) / best_other × 100.
#[derive(Clone, Debug, Serialize)]
pub struct MetricGain {
    pub pct: f64,
    pub hybrid: String,
    pub best_other: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Improvement {
    pub hr: MetricGain,
    pub ndcg: MetricGain,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonTable {
    pub k: usize,
    pub rows: Vec<TableRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub improvement: Option<Improvement>,
    pub warnings: Vec<String>,
}

fn best_by<F: Fn(&TableRow) -> Option<f64>>(
    rows: &[TableRow],
    pick: impl Fn(&TableRow) -> bool,
    metric: F,
) -> Option<(String, f64)> {
    rows.iter()
        .filter(|r| pick(r))
        .filter_map(|r| metric(r).map(|v| (r.model.clone(), v)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
}

fn gain<F: Fn(&TableRow) -> Option<f64> + Copy>(
    rows: &[TableRow],
    metric: F,
) -> Option<MetricGain> {
    let (hybrid, hv) = best_by(rows, |r| r.group == RowGroup::Hybrid, metric)?;
    let (other, ov) = best_by(rows, |r| r.group != RowGroup::Hybrid, metric)?;
    if ov <= 0.0 {
        return None;
    }
    Some(MetricGain {
        pct: (hv - ov) / ov * 100.0,
        hybrid,
        best_other: other,
    })
}

impl ComparisonTable {
    pub fn build(k: usize, rows: Vec<TableRow>) -> Self {
        let mut warnings = Vec::new();
        let mut fingerprints: Vec<&str> = rows
            .iter()
            .filter_map(|r| r.fingerprint.as_deref())
            .collect();
        fingerprints.sort_unstable();
        fingerprints.dedup();
        if fingerprints.len() > 1 {
            warnings.push(format!(
                "rows were scored on different candidate sets ({}) — \
                 metrics are not comparable; re-run evaluate from one ingest",
                fingerprints.join(", ")
            ));
        }
        let improvement = match (gain(&rows, |r| r.hr), gain(&rows, |r| r.ndcg)) {
            (Some(hr), Some(ndcg)) => Some(Improvement { hr, ndcg }),
            _ => None,
        };
        ComparisonTable {
            k,
            rows,
            improvement,
            warnings,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .chain(["model".len()])
            .max()
            .unwrap();
        let group_name = |g: RowGroup| match g {
            RowGroup::Baseline => "baseline",
            RowGroup::Neural => "neural",
            RowGroup::Fusion => "fusion",
            RowGroup::Hybrid => "hybrid",
        };
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        let mut out = String::new();
        let hr_h = format!("HR@{}", self.k);
        let ndcg_h = format!("NDCG@{}", self.k);
        out.push_str(&format!(
            "{:<name_w$}  {:<8}  {:>8}  {:>8}\n",
            "model", "group", hr_h, ndcg_h
        ));
        out.push_str(&format!("{}\n", "-".repeat(name_w + 2 + 8 + 2 + 8 + 2 + 8)));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<name_w$}  {:<8}  {:>8}  {:>8}",
                r.model,
                group_name(r.group),
                fmt(r.hr),
                fmt(r.ndcg)
            ));
            if let Some(note) = &r.note {
                out.push_str(&format!("  ({note})"));
            }
            out.push('\n');
        }
        if let Some(imp) = &self.improvement {
            out.push_str(&format!(
                "\nIm.% vs best non-hybrid: HR {:+.2}% ({} over {}), NDCG {:+.2}% ({} over {})\n",
                imp.hr.pct,
                imp.hr.hybrid,
                imp.hr.best_other,
                imp.ndcg.pct,
                imp.ndcg.hybrid,
                imp.ndcg.best_other
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("\nwarning: {w}\n"));
        }
        out
    }
}
