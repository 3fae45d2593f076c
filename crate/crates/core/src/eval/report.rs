use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricItem {
    pub prompt_id: String,
    pub metric: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<String>,
}

impl MetricItem {
    pub fn new(prompt_id: &str, metric: &str, score: f64) -> Self {
        Self {
            prompt_id: prompt_id.to_string(),
            metric: metric.to_string(),
            score,
            details: None,
        }
    }

    pub fn with_details(mut self, details: impl Into<String>) -> Self {
        self.details = Some(details.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub count: usize,
    pub sum: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_item: Vec<MetricItem>,
    /// One entry per metric with at least one item, sorted by name.
    pub aggregates: Vec<MetricSummary>,
    /// Mean of the per-metric means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall: Option<f64>,
    pub counts: BTreeMap<String, usize>,
}

impl MetricReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregates.iter().find(|a| a.metric == metric).map(|a| a.mean)
    }
}

pub fn aggregate(items: Vec<MetricItem>) -> MetricReport {
    let mut buckets: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for it in &items {
        let b = buckets.entry(it.metric.clone()).or_insert((0, 0.0));
        b.0 += 1;
        b.1 += it.score;
    }
    let aggregates: Vec<MetricSummary> = buckets
        .iter()
        .map(|(m, (count, sum))| MetricSummary {
            metric: m.clone(),
            count: *count,
            sum: *sum,
            mean: sum / *count as f64,
        })
        .collect();
    let overall = mean_of_means(&aggregates);
    MetricReport {
        per_item: items,
        counts: buckets.iter().map(|(m, (c, _))| (m.clone(), *c)).collect(),
        aggregates,
        overall,
    }
}

fn mean_of_means(aggs: &[MetricSummary]) -> Option<f64> {
    if aggs.is_empty() {
        None
    } else {
        Some(aggs.iter().map(|a| a.mean).sum::<f64>() / aggs.len() as f64)
    }
}

/// Human-readable aligned table of the aggregates.
pub fn render_table(report: &MetricReport) -> String {
    let mut rows: Vec<[String; 3]> = vec![["metric".into(), "n".into(), "mean".into()]];
    for a in &report.aggregates {
        rows.push([a.metric.clone(), a.count.to_string(), format!("{:.4}", a.mean)]);
    }
    if let Some(o) = report.overall {
        rows.push(["overall".into(), String::new(), format!("{o:.4}")]);
    }
    let w0 = rows.iter().map(|r| r[0].chars().count()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r[1].len()).max().unwrap_or(0);
    let w2 = rows.iter().map(|r| r[2].len()).max().unwrap_or(0);
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&format!("{:<w0$}  {:>w1$}  {:>w2$}\n", r[0], r[1], r[2]));
        if i == 0 {
            out.push_str(&format!("{}  {}  {}\n", "-".repeat(w0), "-".repeat(w1), "-".repeat(w2)));
        }
    }
    out
}
