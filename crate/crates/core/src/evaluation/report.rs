use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::EvaluationReport;
use crate::error::{Error, Result};

pub fn write_report_json(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `query_id,dataset_tag,success,selected_technique`, one row per query.
pub fn write_per_query_csv(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["query_id", "dataset_tag", "success", "selected_technique"])?;
    for q in &report.per_query {
        w.write_record([
            q.query_id.to_string().as_str(),
            q.dataset_tag.as_str(),
            if q.success { "1" } else { "0" },
            q.selected_technique.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Green/red success strip per dataset, one bar per query in order.
pub fn write_strip_svg(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    const BAR: usize = 3;
    const ROW: usize = 24;
    const LABEL: usize = 120;
    let mut tags: Vec<&str> = Vec::new();
    for q in &report.per_query {
        if !tags.contains(&q.dataset_tag.as_str()) {
            tags.push(&q.dataset_tag);
        }
    }
    let widest = tags
        .iter()
        .map(|t| report.per_query.iter().filter(|q| q.dataset_tag == *t).count())
        .max()
        .unwrap_or(0);
    let width = LABEL + widest * BAR + 10;
    let height = tags.len() * ROW + 10;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .expect("write to String");
    for (i, tag) in tags.iter().enumerate() {
        let y = 5 + i * ROW;
        writeln!(
            svg,
            r#"<text x="4" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            y + 15,
            escape(tag)
        )
        .expect("write to String");
        for (j, q) in report.per_query.iter().filter(|q| q.dataset_tag == *tag).enumerate() {
            let fill = if q.success { "#2e9d3a" } else { "#d03030" };
            writeln!(
                svg,
                r#"<rect x="{}" y="{y}" width="{BAR}" height="{}" fill="{fill}"><title>{} q{}: {}</title></rect>"#,
                LABEL + j * BAR,
                ROW - 4,
                escape(tag),
                q.query_id,
                escape(&q.selected_technique)
            )
            .expect("write to String");
        }
    }
    svg.push_str("</svg>\n");
    fs::write(path.as_ref(), svg).map_err(|e| Error::io(path.as_ref(), e))
}
