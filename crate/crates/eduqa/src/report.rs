//! CSV and SVG report writers. Percentages carry two decimals.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eduqa_core::choice::{Judgement, Metrics};
use eduqa_core::scoring::{ChannelReport, Discrepancy, GridRow, TopicCoverage, GRID_COLUMNS};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Validation(format!(
                "unknown report format `{other}` (expected csv or svg)"
            ))),
        }
    }
}

pub fn pct(x: f64) -> String {
    format!("{x:.2}")
}

fn frac(x: f64) -> String {
    format!("{x:.4}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Internal(format!("{}: {other:?}", path.display())),
    }
}

fn opt(x: Option<usize>) -> String {
    x.map(|i| i.to_string()).unwrap_or_default()
}

pub fn write_judgements(path: &Path, judgements: &[Judgement]) -> Result<()> {
    write_csv(
        path,
        &[
            "question_id",
            "predicted",
            "selected_index",
            "gold_index",
            "answered",
            "correct",
        ],
        judgements.iter().map(|j| {
            vec![
                j.question_id.clone(),
                j.predicted.clone(),
                opt(j.selected_index),
                opt(j.gold_index),
                j.answered.to_string(),
                j.correct.to_string(),
            ]
        }),
    )
}

pub fn write_metrics(path: &Path, rows: &[(String, Metrics)]) -> Result<()> {
    write_csv(
        path,
        &[
            "group",
            "total",
            "answered",
            "correct",
            "accuracy",
            "precision",
            "precision_defined",
            "recall",
            "f1_binary",
            "f1_token",
        ],
        rows.iter().map(|(g, m)| {
            vec![
                g.clone(),
                m.total.to_string(),
                m.answered.to_string(),
                m.correct.to_string(),
                frac(m.accuracy),
                frac(m.precision),
                m.precision_defined.to_string(),
                frac(m.recall),
                frac(m.f1_binary),
                frac(m.f1_token),
            ]
        }),
    )
}

pub fn write_discrepancies(path: &Path, rows: &[Discrepancy]) -> Result<()> {
    write_csv(
        path,
        &["question_id", "gold", "predicted", "matched_stems", "gold_stems"],
        rows.iter().map(|d| {
            vec![
                d.question_id.clone(),
                d.gold.clone(),
                d.predicted.clone(),
                d.matched.to_string(),
                d.gold_len.to_string(),
            ]
        }),
    )
}

pub const GRID_LABEL_COLUMNS: [&str; 3] = [
    "Retriever + RC + Answer Extraction Models",
    "Retrieval Measure",
    "Training Dataset",
];

pub fn grid_header() -> Vec<&'static str> {
    GRID_LABEL_COLUMNS.iter().chain(GRID_COLUMNS.iter()).copied().collect()
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<()> {
    write_csv(
        path,
        &grid_header(),
        rows.iter().map(|r| {
            let mut v = vec![r.label.clone(), r.retrieval_measure.clone(), r.training_dataset.clone()];
            v.extend(r.values.iter().map(|&x| pct(x)));
            v
        }),
    )
}

pub fn write_channels(path: &Path, reports: &[ChannelReport]) -> Result<()> {
    write_csv(
        path,
        &["channel_id", "name", "n_videos", "questions_answered", "eq", "views"],
        reports.iter().map(|r| {
            vec![
                r.channel_id.clone(),
                r.name.clone(),
                r.n_videos.to_string(),
                r.questions_answered.to_string(),
                pct(r.eq),
                r.views.to_string(),
            ]
        }),
    )
}

/// Share of all loaded textbook questions answered through each channel.
pub fn write_channel_questions(path: &Path, reports: &[ChannelReport], total_questions: usize) -> Result<()> {
    write_csv(
        path,
        &[
            "channel_id",
            "name",
            "questions_answered",
            "pct_of_all_loaded_questions",
        ],
        reports.iter().map(|r| {
            let p = if total_questions == 0 {
                0.0
            } else {
                100.0 * r.questions_answered as f64 / total_questions as f64
            };
            vec![
                r.channel_id.clone(),
                r.name.clone(),
                r.questions_answered.to_string(),
                pct(p),
            ]
        }),
    )
}

pub fn write_topic_coverage(path: &Path, rows: &[TopicCoverage]) -> Result<()> {
    write_csv(
        path,
        &["topic_id", "title", "answered", "total", "coverage"],
        rows.iter().map(|t| {
            vec![
                t.topic_id.clone(),
                t.title.clone(),
                t.answered.to_string(),
                t.total.to_string(),
                frac(t.fraction),
            ]
        }),
    )
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
/// Radius of the most viewed channel's mark.
pub const MAX_RADIUS: f64 = 30.0;

/// EQ against total views, one circle per channel with radius proportional
/// to views.
pub fn scatter_svg(reports: &[ChannelReport]) -> String {
    let max_views = reports.iter().map(|r| r.views).max().unwrap_or(0).max(1) as f64;
    let max_eq = reports.iter().map(|r| r.eq).fold(0.0_f64, f64::max).max(1.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<title>Academic quality (EQ) vs channel views</title>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y}" stroke="black"/>"#,
        x = W - PAD,
        y = H - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">views</text>"#,
        W / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})">EQ</text>"#,
        H / 2.0,
        H / 2.0
    );
    for r in reports {
        let x = PAD + (W - 2.0 * PAD) * r.views as f64 / max_views;
        let y = H - PAD - (H - 2.0 * PAD) * r.eq / max_eq;
        let radius = MAX_RADIUS * r.views as f64 / max_views;
        let _ = writeln!(
            s,
            r#"<circle class="channel" cx="{x:.2}" cy="{y:.2}" r="{radius:.4}" data-channel="{}" data-views="{}" data-eq="{}" fill="steelblue" fill-opacity="0.5"><title>{}</title></circle>"#,
            esc(&r.channel_id),
            r.views,
            pct(r.eq),
            esc(&r.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars, one per `(label, value)`, scaled to `max`.
pub fn bar_svg(title: &str, items: &[(String, f64)], max: f64) -> String {
    let row = 22.0;
    let height = PAD + row * items.len() as f64 + 20.0;
    let label_w = 220.0;
    let max = if max > 0.0 { max } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, esc(title));
    let _ = writeln!(s, r#"<text x="10" y="25">{}</text>"#, esc(title));
    for (i, (label, v)) in items.iter().enumerate() {
        let y = PAD + row * i as f64;
        let w = (W - label_w - 80.0) * (v / max).clamp(0.0, 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{tx}" y="{ty:.2}" text-anchor="end">{}</text><rect class="bar" x="{label_w}" y="{y:.2}" width="{w:.2}" height="{h}" data-value="{}" fill="steelblue"/><text x="{vx:.2}" y="{ty:.2}">{}</text>"#,
            esc(label),
            pct(*v),
            pct(*v),
            tx = label_w - 6.0,
            ty = y + 14.0,
            h = row - 4.0,
            vx = label_w + w + 4.0,
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
