//! Result tables: datasets as column groups (S, P), metrics as rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::stats::{CorrelationReport, SensitivityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

/// Two decimals; values that round to zero print without a sign.
pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// `marker + mean`, with ` (std)` appended for multi-run aggregates.
pub fn cell(marker: &str, mean: f64, std: f64, runs: usize) -> String {
    if runs > 1 {
        format!("{marker}{} ({})", fmt2(mean), fmt2(std))
    } else {
        format!("{marker}{}", fmt2(mean))
    }
}

fn check_schema(reports: &[CorrelationReport]) -> Result<()> {
    if let Some(first) = reports.first() {
        if let Some(r) = reports
            .iter()
            .find(|r| r.schema_version != first.schema_version)
        {
            return Err(Error::Inconsistent(format!(
                "mixed report schema versions {} and {}",
                first.schema_version, r.schema_version
            )));
        }
    }
    Ok(())
}

pub fn render_report(reports: &[CorrelationReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Empty("no reports to render".into()));
    }
    check_schema(reports)?;
    match format {
        ReportFormat::Markdown => render_markdown(reports),
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            Ok(s)
        }
    }
}

fn render_markdown(reports: &[CorrelationReport]) -> Result<String> {
    let datasets: Vec<Dataset> = Dataset::TABLE_ORDER
        .into_iter()
        .filter(|d| reports.iter().any(|r| r.dataset == *d))
        .collect();
    let mut metrics: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, Dataset), &CorrelationReport> = BTreeMap::new();
    for r in reports {
        if !metrics.contains(&r.metric.as_str()) {
            metrics.push(&r.metric);
        }
        if cells.insert((&r.metric, r.dataset), r).is_some() {
            return Err(Error::Inconsistent(format!(
                "more than one report for {} on {}; aggregate runs first",
                r.metric, r.dataset
            )));
        }
    }

    let mut out = String::from("| Metric |");
    for d in &datasets {
        write!(out, " {0} S | {0} P |", d.title()).unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---|---|".repeat(datasets.len()));
    out.push('\n');
    for m in metrics {
        write!(out, "| {m} |").unwrap();
        for d in &datasets {
            match cells.get(&(m, *d)) {
                Some(r) => write!(
                    out,
                    " {} | {} |",
                    cell(
                        r.spearman_significance().marker(),
                        r.spearman,
                        r.spearman_std,
                        r.runs
                    ),
                    cell(
                        r.pearson_significance().marker(),
                        r.pearson,
                        r.pearson_std,
                        r.runs
                    )
                )
                .unwrap(),
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn render_csv(reports: &[CorrelationReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r)
            .map_err(|e| Error::Inconsistent(format!("CSV encoding: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Inconsistent(format!("CSV encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<CorrelationReport>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Malformed {
                context: "report CSV".into(),
                line: i + 2,
                detail: e.to_string(),
            })
        })
        .collect()
}

pub fn render_sensitivity(reports: &[SensitivityReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Empty("no sensitivity reports to render".into()));
    }
    let ratio = |r: &SensitivityReport| -> String {
        if r.ratio.is_infinite() {
            if r.ratio > 0.0 { "∞" } else { "-∞" }.to_string()
        } else {
            format!("{:.1}", r.ratio)
        }
    };
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut s = String::from("metric,best_dataset,best,worst_dataset,worst,ratio\n");
            for r in reports {
                let ratio = if r.ratio.is_infinite() {
                    if r.ratio > 0.0 {
                        "inf".to_string()
                    } else {
                        "-inf".to_string()
                    }
                } else {
                    r.ratio.to_string()
                };
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.metric, r.best_dataset, r.best, r.worst_dataset, r.worst, ratio
                )
                .unwrap();
            }
            Ok(s)
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| Metric | Best | Worst | Ratio |\n|---|---|---|---|\n");
            for r in reports {
                writeln!(
                    s,
                    "| {} | {} ({}) | {} ({}) | {} |",
                    r.metric,
                    fmt2(r.best),
                    r.best_dataset.title(),
                    fmt2(r.worst),
                    r.worst_dataset.title(),
                    ratio(r)
                )
                .unwrap();
            }
            Ok(s)
        }
    }
}
