//! `report`: DET plots rendered as SVG from the summary and DET CSVs.

use std::fmt::Write as _;
use std::path::Path;

use morphdet::evaluation::write_text;
use morphdet::Error;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::artifacts::{ensure_parent, require, Artifacts};
use crate::config::{ExperimentConfig, Method};
use crate::error::{InStage, PipelineError, Result};
use crate::Stage;

const STAGE: Stage = Stage::Report;
const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 64.0;
/// Axis range in error-rate units; rates outside are clamped to the frame.
const RATE_MIN: f64 = 0.001;
const RATE_MAX: f64 = 0.6;
const TICKS: [f64; 7] = [0.001, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6];
const COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#d62728"];

/// One row of a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub method: String,
    pub camera: String,
    pub eer: f64,
    pub bpcer20: f64,
    pub bpcer10: f64,
}

fn csv_error(path: &Path, e: impl ToString) -> PipelineError {
    PipelineError::Core {
        stage: STAGE,
        source: Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        },
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryLine>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 5 {
            return Err(csv_error(path, format!("expected 5 fields, got {}", rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| csv_error(path, e));
        out.push(SummaryLine {
            method: rec[0].to_string(),
            camera: rec[1].to_string(),
            eer: num(2)?,
            bpcer20: num(3)?,
            bpcer10: num(4)?,
        });
    }
    Ok(out)
}

/// (APCER, BPCER) points of a DET CSV.
pub fn read_det(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 3 {
            return Err(csv_error(path, format!("expected 3 fields, got {}", rec.len())));
        }
        let apcer = rec[1].parse::<f64>().map_err(|e| csv_error(path, e))?;
        let bpcer = rec[2].parse::<f64>().map_err(|e| csv_error(path, e))?;
        out.push((apcer, bpcer));
    }
    Ok(out)
}

fn probit(p: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(p.clamp(RATE_MIN, RATE_MAX))
}

fn to_px(apcer: f64, bpcer: f64) -> (f64, f64) {
    let (lo, hi) = (probit(RATE_MIN), probit(RATE_MAX));
    let span = hi - lo;
    let x = MARGIN + (probit(apcer) - lo) / span * (WIDTH - 2.0 * MARGIN);
    let y = HEIGHT - MARGIN - (probit(bpcer) - lo) / span * (HEIGHT - 2.0 * MARGIN);
    (x, y)
}

fn percent(p: f64) -> String {
    let v = p * 100.0;
    if v < 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.0}")
    }
}

/// Renders one method's DET curves; `curves` pairs a legend label with its
/// points.
pub fn det_svg(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for &t in &TICKS {
        let (x, _) = to_px(t, RATE_MIN);
        let (_, y) = to_px(RATE_MIN, t);
        let (x0, y0) = to_px(RATE_MIN, RATE_MIN);
        let (x1, y1) = to_px(RATE_MAX, RATE_MAX);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#ddd"/>"##
        );
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#ddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            percent(t)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y + 4.0,
            percent(t)
        );
    }
    let (x0, y0) = to_px(RATE_MIN, RATE_MIN);
    let (x1, y1) = to_px(RATE_MAX, RATE_MAX);
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">APCER (%)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">BPCER (%)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, (label, points)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(a, b)| {
                let (x, y) = to_px(a, b);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            path.join(" ")
        );
        let ly = y1 + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            x1 - 150.0,
            x1 - 130.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x1 - 125.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn curve_label(camera: &str, eer: f64) -> String {
    let name = if camera == "fused" {
        "Fused".to_string()
    } else {
        format!("Camera {camera}")
    };
    format!("{name} (D-EER {:.1}%)", eer * 100.0)
}

/// Renders a DET SVG for every method with a summary in the output
/// directory. Returns the written paths.
pub fn report_stage(cfg: &ExperimentConfig) -> Result<Vec<std::path::PathBuf>> {
    let art = Artifacts::new(&cfg.output_dir);
    let present: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| art.summary(*m).is_file())
        .collect();
    if present.is_empty() {
        require(&art.summary(cfg.method), "summary CSV", STAGE, Stage::Eval)?;
    }
    let mut written = Vec::new();
    for method in present {
        let lines = read_summary(&art.summary(method))?;
        let mut curves = Vec::new();
        for line in &lines {
            let det = art.det(method, &line.camera);
            require(&det, &format!("DET curve {}", line.camera), STAGE, Stage::Eval)?;
            curves.push((curve_label(&line.camera, line.eer), read_det(&det)?));
        }
        let svg = det_svg(&format!("DET: {}", method.report_label()), &curves);
        let path = art.report(method);
        ensure_parent(&path, STAGE)?;
        write_text(&path, &svg).in_stage(STAGE)?;
        written.push(path);
    }
    Ok(written)
}
