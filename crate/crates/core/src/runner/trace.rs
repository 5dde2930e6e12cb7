use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{InferenceOutcome, StepSnapshot};
use crate::error::{Error, Result};

pub const TRACE_SUFFIX: &str = ".trace.json";

/// Per-step particle texts and weights for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub run_id: String,
    pub steps: Vec<StepSnapshot>,
}

impl TraceFile {
    pub fn from_outcome(run_id: &str, outcome: &InferenceOutcome) -> Self {
        Self {
            run_id: run_id.to_string(),
            steps: outcome.diagnostics.per_step.clone().unwrap_or_default(),
        }
    }

    pub fn path_in(dir: &Path, run_id: &str) -> PathBuf {
        dir.join(format!("{run_id}{TRACE_SUFFIX}"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string(self).expect("trace serializes");
        std::fs::write(Self::path_in(dir, &self.run_id), text)?;
        Ok(())
    }

    pub fn read(dir: &Path, run_id: &str) -> Result<Self> {
        let text = std::fs::read_to_string(Self::path_in(dir, run_id))?;
        serde_json::from_str(&text).map_err(|e| Error::from_json(&e))
    }
}

/// One row per (step, particle).
pub fn render_trace_csv(trace: &TraceFile) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["step", "particle", "weight", "ess", "resampled", "text"])
        .map_err(io)?;
    for s in &trace.steps {
        for (i, (text, weight)) in s.texts.iter().zip(&s.normalized_weights).enumerate() {
            w.write_record([
                s.step.to_string(),
                i.to_string(),
                weight.to_string(),
                s.ess.to_string(),
                s.resampled.to_string(),
                text.clone(),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 320.0;
const PAD: f64 = 40.0;

/// Standalone HTML page: one weight polyline per particle slot, dashed
/// markers at resampling steps, and the final texts in a table.
pub fn render_trace_html(trace: &TraceFile) -> String {
    let steps = &trace.steps;
    let n = steps.first().map_or(0, |s| s.normalized_weights.len());
    let span = (steps.len().max(2) - 1) as f64;
    let x = |k: usize| PAD + (WIDTH - 2.0 * PAD) * k as f64 / span;
    let y = |w: f64| HEIGHT - PAD - (HEIGHT - 2.0 * PAD) * w;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = write!(
        svg,
        r##"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="#444"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="#444"/>"##,
        b = HEIGHT - PAD,
        r = WIDTH - PAD
    );
    let _ = write!(
        svg,
        r##"<text x="4" y="{}" font-size="11">1</text><text x="4" y="{}" font-size="11">0</text>"##,
        PAD + 4.0,
        HEIGHT - PAD
    );
    for (k, s) in steps.iter().enumerate() {
        if s.resampled {
            let _ = write!(
                svg,
                r##"<line x1="{0:.2}" y1="{PAD}" x2="{0:.2}" y2="{1}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
                x(k),
                HEIGHT - PAD
            );
        }
    }
    for i in 0..n {
        let hue = (i * 360) / n.max(1);
        let points: Vec<String> = steps
            .iter()
            .enumerate()
            .map(|(k, s)| {
                format!(
                    "{:.2},{:.2}",
                    x(k),
                    y(s.normalized_weights.get(i).copied().unwrap_or(0.0))
                )
            })
            .collect();
        let _ = write!(
            svg,
            r##"<polyline fill="none" stroke="hsl({hue},60%,45%)" stroke-width="1.5" points="{}"/>"##,
            points.join(" ")
        );
    }
    svg.push_str("</svg>");

    let mut rows = String::new();
    if let Some(last) = steps.last() {
        for (i, (t, w)) in last.texts.iter().zip(&last.normalized_weights).enumerate() {
            let _ = write!(
                rows,
                "<tr><td>{i}</td><td>{w:.4}</td><td>{}</td></tr>",
                escape(t)
            );
        }
    }
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{id}</title>\
         <style>body{{font-family:sans-serif;margin:2em}}td{{padding:2px 8px;font-family:monospace}}</style></head>\
         <body><h1>{id}</h1><p>{n} particles, {t} steps. Normalized weight per particle slot after each step; \
         dashed lines mark resampling.</p>{svg}<h2>Final particles</h2>\
         <table><tr><th>#</th><th>weight</th><th>text</th></tr>{rows}</table></body></html>\n",
        id = escape(&trace.run_id),
        t = steps.len()
    )
}
