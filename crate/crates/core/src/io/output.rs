use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Format, RunConfig};
use super::run::{ColumnPeak, RunReport, Summary};
use crate::error::{Error, Result};
use crate::experiments::{Column, ScanResult};
use crate::sequences::CalibrationVariant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn config_json(cfg: &RunConfig) -> String {
    serde_json::to_string(cfg).expect("config serializes")
}

fn quote(name: &str) -> String {
    if name.contains([',', '"']) {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

/// CSV with a leading `#` line carrying the tool version and the resolved
/// configuration. Values have 17 significant digits.
pub fn csv_string(report: &RunReport) -> Result<String> {
    let r = &report.result;
    if r.is_empty() {
        return Err(Error::EmptyResult);
    }
    let mut out = format!("# spinsense {VERSION} config={}\n", config_json(&report.config));
    out.push_str(&quote(&r.parameter));
    for c in &r.columns {
        out.push(',');
        out.push_str(&quote(&c.name));
    }
    out.push('\n');
    for (i, x) in r.grid.iter().enumerate() {
        let _ = write!(out, "{x:.16e}");
        for c in &r.columns {
            let _ = write!(out, ",{:.16e}", c.values[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

fn split_header(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Reads back a CSV written by [`csv_string`].
pub fn parse_csv(text: &str) -> Result<ScanResult> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = split_header(lines.next().ok_or(Error::EmptyResult)?);
    let mut grid = Vec::new();
    let mut columns: Vec<Column> = header[1..]
        .iter()
        .map(|n| Column {
            name: n.clone(),
            values: Vec::new(),
        })
        .collect();
    for (row, line) in lines.enumerate() {
        let bad = |m: String| Error::Parse {
            line: row + 2,
            column: 1,
            message: m,
        };
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("`{v}`: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != header.len() {
            return Err(bad(format!("expected {} fields, found {}", header.len(), vals.len())));
        }
        grid.push(vals[0]);
        for (c, v) in columns.iter_mut().zip(&vals[1..]) {
            c.values.push(*v);
        }
    }
    if grid.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(ScanResult {
        parameter: header[0].clone(),
        grid,
        columns,
    })
}

#[derive(Serialize)]
struct JsonReport<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    preset: Option<&'a str>,
    units: &'a str,
    sensor_convention: Option<String>,
    calibration_variant: &'a CalibrationVariant,
    parameter: &'a str,
    columns: Vec<&'a str>,
    peaks: &'a [ColumnPeak],
    summary: &'a Summary,
    config: &'a RunConfig,
}

/// Machine-readable report; independent of thread count and wall time.
pub fn json_string(report: &RunReport) -> String {
    let cfg = &report.config;
    let doc = JsonReport {
        tool: "spinsense",
        version: VERSION,
        experiment: cfg.experiment().name(),
        preset: cfg.preset.as_deref(),
        units: &cfg.units,
        sensor_convention: cfg.system.as_ref().map(|s| s.sensor_convention.label().to_string()),
        calibration_variant: &report.variant,
        parameter: &report.result.parameter,
        columns: report.result.columns.iter().map(|c| c.name.as_str()).collect(),
        peaks: &report.peaks,
        summary: &report.summary,
        config: cfg,
    };
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

/// Columns grouped by observable: the leading token of the name, or two
/// tokens for `Re`/`Im` columns.
fn groups(r: &ScanResult) -> Vec<(String, Vec<&Column>)> {
    let mut out: Vec<(String, Vec<&Column>)> = Vec::new();
    for c in &r.columns {
        let mut it = c.name.split(' ');
        let first = it.next().unwrap_or_default();
        let key = if first == "Re" || first == "Im" {
            format!("{first} {}", it.next().unwrap_or_default())
        } else {
            first.to_string()
        };
        match out.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(c),
            None => out.push((key, vec![c])),
        }
    }
    out
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

/// Minimal line plot of `columns` against the grid.
pub fn svg_plot(parameter: &str, grid: &[f64], title: &str, columns: &[&Column], config: &str) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let (x0, x1) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
    let (mut y0, mut y1) = columns
        .iter()
        .flat_map(|c| c.values.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &y| (a.0.min(y), a.1.max(y)));
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let xs = |x: f64| m + (x - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * (w - 2.0 * m);
    let ys = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, "<!-- spinsense {VERSION} config={} -->", config.replace("--", "- -"));
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for t in ticks(x0, x1) {
        let x = xs(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, h - m, h - m + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{t:.4e}</text>"#, h - m + 18.0);
    }
    for t in ticks(y0, y1) {
        let y = ys(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{m}" y2="{y:.2}" stroke="black"/>"#, m - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{t:.3}</text>"#, m - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(parameter));
    for (k, c) in columns.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = grid
            .iter()
            .zip(&c.values)
            .map(|(&x, &y)| format!("{:.2},{:.2}", xs(x), ys(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = m + 14.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - m - 150.0, w - m - 130.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w - m - 125.0, ly + 4.0, escape(&c.name));
    }
    s.push_str("</svg>\n");
    s
}

pub fn svg_plots(report: &RunReport) -> Vec<(String, String)> {
    let r = &report.result;
    let cfg = config_json(&report.config);
    groups(r)
        .into_iter()
        .map(|(key, cols)| {
            let slug: String = key
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
                .collect();
            (slug, svg_plot(&r.parameter, &r.grid, &key, &cols, &cfg))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the requested formats as `<dir>/<stem>.csv`, `<stem>.json` and
/// `<stem>_<observable>.svg`; returns the paths written.
pub fn write_results(report: &RunReport, dir: &Path, stem: &str, formats: &[Format]) -> Result<Vec<PathBuf>> {
    // rendered up front so an empty result never leaves files behind
    let csv = csv_string(report)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            Format::Csv => {
                let p = dir.join(format!("{stem}.csv"));
                write_file(&p, &csv)?;
                written.push(p);
            }
            Format::Json => {
                let p = dir.join(format!("{stem}.json"));
                write_file(&p, &json_string(report))?;
                written.push(p);
            }
            Format::Svg => {
                for (slug, svg) in svg_plots(report) {
                    let p = dir.join(format!("{stem}_{slug}.svg"));
                    write_file(&p, &svg)?;
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}
