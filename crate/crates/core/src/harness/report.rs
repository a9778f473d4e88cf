//! Rendering of harness results as text, CSV or JSON lines.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Csv,
    JsonLines,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json-lines" | "jsonl" => Ok(Format::JsonLines),
            other => Err(format!("unknown format `{other}` (expected text, csv or json-lines)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Text => "text",
            Format::Csv => "csv",
            Format::JsonLines => "json-lines",
        })
    }
}

/// A harness result: a key/value summary plus one table.
pub trait Report {
    fn title(&self) -> String;

    fn summary(&self) -> Vec<(String, String)>;

    fn header(&self) -> Vec<&'static str>;

    fn rows(&self) -> Vec<Vec<String>>;
}

/// Text shows summary then table; CSV is the table alone; JSON lines has
/// one object per row and a final `summary` object.
pub fn emit_report(report: &dyn Report, format: Format) -> String {
    match format {
        Format::Text => text(report),
        Format::Csv => csv(report),
        Format::JsonLines => json_lines(report),
    }
}

pub fn write_report(report: &dyn Report, format: Format, out: Option<&Path>) -> std::io::Result<()> {
    let rendered = emit_report(report, format);
    match out {
        Some(path) => std::fs::write(path, rendered),
        None => std::io::stdout().write_all(rendered.as_bytes()),
    }
}

fn text(report: &dyn Report) -> String {
    let mut out = format!("{}\n", report.title());
    let summary = report.summary();
    let key_width = summary.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &summary {
        out.push_str(&format!("  {k:<key_width$}  {v}\n"));
    }
    let header = report.header();
    let rows = report.rows();
    if rows.is_empty() {
        return out;
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("  {}\n", padded.join("  ").trim_end())
    };
    out.push('\n');
    out.push_str(&line(header.clone()));
    for row in &rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn csv(report: &dyn Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(report.header()).expect("in-memory write");
    for row in report.rows() {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
}

fn json_lines(report: &dyn Report) -> String {
    let header = report.header();
    let mut out = String::new();
    for row in report.rows() {
        let obj: Map<String, Value> =
            header.iter().zip(row).map(|(h, c)| (h.to_string(), Value::String(c))).collect();
        out.push_str(&Value::Object(obj).to_string());
        out.push('\n');
    }
    let summary: Map<String, Value> =
        report.summary().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    let mut last = Map::new();
    last.insert("title".into(), Value::String(report.title()));
    last.insert("summary".into(), Value::Object(summary));
    out.push_str(&Value::Object(last).to_string());
    out.push('\n');
    out
}
