use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::sweep::DEFAULT_FRACTIONS;

/// One method on one dataset. Timing fields are `None` in the
/// timing-free view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub dataset: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub iter_ms: Option<f64>,
    /// `None` when the target was unreachable.
    pub tts_s: Option<f64>,
    /// `(fraction, mean ms)` pairs.
    pub render_ms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

pub const FIXED_COLUMNS: [&str; 6] = ["method", "dataset", "psnr_db", "ssim", "iter_ms", "tts_s"];

/// `render_ms_f010` for 0.1, `render_ms_f100` for 1.0.
pub fn render_column(fraction: f64) -> String {
    format!("render_ms_f{:03}", (fraction * 100.0).round() as u32)
}

pub fn columns() -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|c| c.to_string())
        .chain(DEFAULT_FRACTIONS.iter().map(|&f| render_column(f)))
        .collect()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) => format!("{x:.digits$}"),
        None => String::new(),
    }
}

fn render_at(row: &ReportRow, fraction: f64) -> Option<f64> {
    row.render_ms.iter().find(|(f, _)| (f - fraction).abs() < 1e-12).map(|(_, ms)| *ms)
}

impl EvalReport {
    /// Rows with every timing field cleared; its CSV and JSON are
    /// reproducible across runs.
    pub fn without_timing(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| ReportRow { iter_ms: None, tts_s: None, render_ms: Vec::new(), ..r.clone() })
            .collect();
        Self { rows }
    }

    /// Fixed columns; absent values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = columns().join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![
                r.method.clone(),
                r.dataset.clone(),
                format!("{:.4}", r.psnr_db),
                format!("{:.6}", r.ssim),
                opt(r.iter_ms, 3),
                opt(r.tts_s, 3),
            ];
            cells.extend(DEFAULT_FRACTIONS.iter().map(|&f| opt(render_at(r, f), 3)));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON mirror of the CSV; `lpips` is always `null`.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                m.insert("method".into(), json!(r.method));
                m.insert("dataset".into(), json!(r.dataset));
                m.insert("psnr_db".into(), json!(r.psnr_db));
                m.insert("ssim".into(), json!(r.ssim));
                m.insert("lpips".into(), Value::Null);
                m.insert("iter_ms".into(), json!(r.iter_ms));
                m.insert("tts_s".into(), json!(r.tts_s));
                for &f in &DEFAULT_FRACTIONS {
                    m.insert(render_column(f), json!(render_at(r, f)));
                }
                Value::Object(m)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&json!({ "columns": columns(), "rows": rows }))
            .expect("report values serialize");
        s.push('\n');
        s
    }
}
