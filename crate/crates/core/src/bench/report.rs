//! Comparison tables: first-run/median/mean rows for audits and one column
//! per variant for load percentiles. Emitted as CSV and aligned markdown.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::audit::{AuditReport, MetricSummary};
use super::load::{BenchReport, PERCENTILES};
use super::BenchError;
use crate::serde_ms::to_ms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Bench(BenchReport),
    Audit(AuditReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub variant: String,
    pub runs: usize,
    pub fcp: MetricSummary,
    pub server_time: MetricSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonTable {
    Audit(Vec<AuditRow>),
    Percentiles {
        variants: Vec<String>,
        reports: Vec<BenchReport>,
    },
}

pub const AUDIT_CSV_HEADER: &str = "variant,fcp_run1_ms,fcp_median_rest_ms,fcp_mean_rest_ms,srt_run1_ms,srt_median_rest_ms,srt_mean_rest_ms";

pub fn compare(reports: &[(String, Report)]) -> Result<ComparisonTable, BenchError> {
    let Some((_, first)) = reports.first() else {
        return Err(BenchError::NoReports);
    };
    match first {
        Report::Audit(_) => reports
            .iter()
            .map(|(name, r)| match r {
                Report::Audit(a) => Ok(AuditRow {
                    variant: name.clone(),
                    runs: a.runs.len(),
                    fcp: a.fcp,
                    server_time: a.server_time,
                }),
                Report::Bench(_) => Err(BenchError::MixedKinds),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ComparisonTable::Audit),
        Report::Bench(_) => {
            let mut variants = Vec::new();
            let mut benches = Vec::new();
            for (name, r) in reports {
                match r {
                    Report::Bench(b) => {
                        variants.push(name.clone());
                        benches.push(b.clone());
                    }
                    Report::Audit(_) => return Err(BenchError::MixedKinds),
                }
            }
            Ok(ComparisonTable::Percentiles {
                variants,
                reports: benches,
            })
        }
    }
}

fn ms(d: std::time::Duration) -> String {
    format!("{:.3}", to_ms(d))
}

fn ms1(d: std::time::Duration) -> String {
    format!("{:.1}", to_ms(d))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders rows as a markdown table with padded columns. The first column is
/// left-aligned, the rest right-aligned.
pub fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.len().max(3)).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            width[i] = width[i].max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, " {:<w$} |", cell, w = width[i]);
            } else {
                let _ = write!(s, " {:>w$} |", cell, w = width[i]);
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    out.push('|');
    for (i, w) in width.iter().enumerate() {
        if i == 0 {
            let _ = write!(out, " {} |", "-".repeat(*w));
        } else {
            let _ = write!(out, " {}: |", "-".repeat(w - 1));
        }
    }
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self {
            ComparisonTable::Audit(rows) => {
                out.push_str(AUDIT_CSV_HEADER);
                out.push('\n');
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        csv_field(&r.variant),
                        ms(r.fcp.run_1),
                        ms(r.fcp.median_rest),
                        ms(r.fcp.mean_rest),
                        ms(r.server_time.run_1),
                        ms(r.server_time.median_rest),
                        ms(r.server_time.mean_rest),
                    );
                }
            }
            ComparisonTable::Percentiles { variants, reports } => {
                out.push_str("percentile");
                for v in variants {
                    out.push(',');
                    out.push_str(&csv_field(v));
                }
                out.push('\n');
                for p in PERCENTILES {
                    let _ = write!(out, "{p}");
                    for r in reports {
                        out.push(',');
                        if let Some(d) = r.percentile(p) {
                            out.push_str(&ms(d));
                        }
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        match self {
            ComparisonTable::Audit(rows) => {
                let rest = rows
                    .iter()
                    .map(|r| r.runs)
                    .max()
                    .map(|n| format!("2-{n}"))
                    .unwrap_or_else(|| "2-n".into());
                let header: Vec<String> = [
                    "Variant".to_string(),
                    "FCP 1".into(),
                    format!("FCP {rest} (med.)"),
                    format!("FCP {rest} (avg.)"),
                    "SRT 1".into(),
                    format!("SRT {rest} (med.)"),
                    format!("SRT {rest} (avg.)"),
                ]
                .into();
                let body: Vec<Vec<String>> = rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.variant.clone(),
                            ms1(r.fcp.run_1),
                            ms1(r.fcp.median_rest),
                            ms1(r.fcp.mean_rest),
                            ms1(r.server_time.run_1),
                            ms1(r.server_time.median_rest),
                            ms1(r.server_time.mean_rest),
                        ]
                    })
                    .collect();
                markdown_table(&header, &body)
            }
            ComparisonTable::Percentiles { variants, reports } => {
                let mut header = vec!["Percentile".to_string()];
                header.extend(variants.iter().map(|v| format!("{v} (ms)")));
                let body: Vec<Vec<String>> = PERCENTILES
                    .iter()
                    .map(|&p| {
                        let mut row = vec![format!("{p}")];
                        row.extend(
                            reports
                                .iter()
                                .map(|r| r.percentile(p).map(ms).unwrap_or_default()),
                        );
                        row
                    })
                    .collect();
                let mut out = markdown_table(&header, &body);
                out.push('\n');
                let header: Vec<String> = [
                    "Variant",
                    "Avg latency (ms)",
                    "Req/s",
                    "Bytes/s (kB)",
                    "p99 (ms)",
                    "Max (ms)",
                    "Responses",
                    "Errors",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect();
                let body: Vec<Vec<String>> = variants
                    .iter()
                    .zip(reports)
                    .map(|(v, r)| {
                        vec![
                            v.clone(),
                            ms(r.avg_latency),
                            format!("{:.2}", r.requests_per_second),
                            format!("{:.1}", r.bytes_per_second / 1000.0),
                            r.percentile(99.0).map(ms).unwrap_or_default(),
                            ms(r.max),
                            r.total_responses.to_string(),
                            r.error_count.to_string(),
                        ]
                    })
                    .collect();
                out.push_str(&markdown_table(&header, &body));
                out
            }
        }
    }
}
