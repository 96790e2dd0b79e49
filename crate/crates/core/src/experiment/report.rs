use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{summarize, Metric, SweepResult, SweepSpec};
use crate::error::{Error, Result};

const CSV_HEADER: [&str; 11] = [
    "method",
    "protocol",
    "sweep_var",
    "sweep_value",
    "seed",
    "eta",
    "sigma",
    "accuracy",
    "optimal_gap",
    "runtime_ms",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::domain(
                "format",
                format!("expected csv, json or svg, got {other:?}"),
            )),
        }
    }
}

/// Result CSV written and flushed one row at a time, so an interrupted run
/// leaves a valid prefix.
pub struct CsvRowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl CsvRowWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(file)
    }
}

impl<W: Write> CsvRowWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        inner.write_record(CSV_HEADER)?;
        inner.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &SweepResult) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<csv>", e.into_error()))
    }
}

/// The JSON report: full spec echo plus every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub spec: SweepSpec,
    pub results: Vec<SweepResult>,
}

pub fn write_json<W: Write>(report: &SweepReport, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, report)?;
    Ok(())
}

const PALETTE: [&str; 6] = [
    "#1b6ca8", "#d1495b", "#2e933c", "#8e6c8a", "#edae49", "#3d3d3d",
];

/// Line chart of `metric` against the sweep value: one polyline per method
/// through the seed means, with ± one standard error bars.
pub fn render_svg(results: &[SweepResult], metric: Metric) -> String {
    let (width, height) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let points = summarize(results, metric);
    let sweep_var = results
        .first()
        .map(|r| r.sweep_var.to_string())
        .unwrap_or_default();

    let (mut x_lo, mut x_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.sweep_value), hi.max(p.sweep_value))
        });
    let (mut y_lo, mut y_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.mean - p.std_error), hi.max(p.mean + p.std_error))
        });
    if points.is_empty() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let sx = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| top + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{} vs {}</text>"#,
        left + plot_w / 2.0,
        metric.label(),
        sweep_var
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    );
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(fx),
            top + plot_h + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        height - 10.0,
        sweep_var
    );

    let mut methods: Vec<_> = points.iter().map(|p| p.method).collect();
    methods.dedup();
    for (k, method) in methods.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let series: Vec<_> = points.iter().filter(|p| p.method == *method).collect();
        let coords: Vec<String> = series
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.sweep_value), sy(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-method="{method}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for p in &series {
            let x = sx(p.sweep_value);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                sy(p.mean - p.std_error),
                sy(p.mean + p.std_error)
            );
            let _ = writeln!(
                svg,
                r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sy(p.mean)
            );
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{method}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Writes the report in `format` under `out_dir` and returns the files
/// written. SVG output is one chart per metric.
pub fn emit_report(
    results: &[SweepResult],
    spec: &SweepSpec,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::domain("results", "nothing to report"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            let path = out_dir.join("results.csv");
            let mut out = CsvRowWriter::create(&path)?;
            for row in results {
                out.write(row)?;
            }
            written.push(path);
        }
        ReportFormat::Json => {
            let path = out_dir.join("results.json");
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            write_json(
                &SweepReport {
                    spec: spec.clone(),
                    results: results.to_vec(),
                },
                &mut w,
            )?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        ReportFormat::Svg => {
            for metric in [Metric::Accuracy, Metric::OptimalGap] {
                let path = out_dir.join(format!("{}.svg", metric.label().replace(' ', "_")));
                std::fs::write(&path, render_svg(results, metric))
                    .map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
