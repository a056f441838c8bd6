//! Static SVG line charts for the three result CSV kinds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::artifacts::{CsvTable, Provenance, REWARD_HEADER, RUNTIME_HEADER, SE_HEADER};
use crate::BenchError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

/// Builds the chart for a result table, keyed on its header.
pub fn chart_for(table: &CsvTable) -> Result<Chart, String> {
    let col = |name: &str| table.header.iter().position(|h| h == name).expect("header checked");
    let num = |r: &csv::StringRecord, i: usize| -> Result<f64, String> {
        r[i].trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", &r[i]))
    };
    // groups rows by a label column, keeping first-seen order
    let grouped = |label_col: Option<usize>, x: usize, y: usize| -> Result<Vec<Series>, String> {
        let mut out: Vec<Series> = Vec::new();
        for r in &table.records {
            let label = match label_col {
                Some(c) => r[c].to_string(),
                None => table.provenance.get("mode").unwrap_or("drl").to_string(),
            };
            let p = (num(r, x)?, num(r, y)?);
            match out.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(p),
                None => out.push(Series { label, points: vec![p] }),
            }
        }
        Ok(out)
    };
    let h = &table.header;
    if h == REWARD_HEADER {
        Ok(Chart {
            title: "Training reward".into(),
            x_label: "episode".into(),
            y_label: "mean SE per episode (bps/Hz)".into(),
            log_y: false,
            series: grouped(None, col("episode"), col("mean_se_bpshz"))?,
        })
    } else if h == SE_HEADER {
        let method = table.provenance.get("method").unwrap_or("");
        Ok(Chart {
            title: format!("Spectral efficiency vs active elements ({method})"),
            x_label: "active elements K".into(),
            y_label: "mean SE (bps/Hz)".into(),
            log_y: false,
            series: grouped(Some(col("mode")), col("k_active"), col("mean_se_bpshz"))?,
        })
    } else if h == RUNTIME_HEADER {
        Ok(Chart {
            title: "Runtime vs surface size".into(),
            x_label: "surface elements N".into(),
            y_label: "median runtime (ms)".into(),
            log_y: true,
            series: grouped(Some(col("method")), col("n_ris"), col("median_ms"))?,
        })
    } else {
        Err(format!("unsupported columns `{}`", h.join(",")))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round step of the form {1, 2, 5}·10^k giving about `target` intervals.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Axis range and tick positions; on a log axis both are in log10 units.
fn axis(lo: f64, hi: f64, log: bool) -> (f64, f64, Vec<f64>) {
    if log {
        let (a, b) = (lo.log10().floor(), hi.log10().ceil());
        let b = if b <= a { a + 1.0 } else { b };
        let ticks = (a as i64..=b as i64).map(|e| e as f64).collect();
        return (a, b, ticks);
    }
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    };
    let step = nice_step(hi - lo, 5.0);
    let (a, b) = ((lo / step).floor() * step, (hi / step).ceil() * step);
    let n = ((b - a) / step).round() as usize;
    (a, b, (0..=n).map(|i| a + i as f64 * step).collect())
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        let x = 10f64.powf(v);
        return if x >= 1.0 { format!("{x:.0}") } else { format!("{x}") };
    }
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Renders a standalone SVG document.
pub fn render(chart: &Chart, prov: &Provenance) -> Result<String, String> {
    if chart.series.is_empty() || chart.series.iter().any(|s| s.points.is_empty()) {
        return Err("no data to plot".into());
    }
    let pts = chart.series.iter().flat_map(|s| s.points.iter());
    if pts.clone().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err("non-finite value in data".into());
    }
    if chart.log_y && pts.clone().any(|&(_, y)| y <= 0.0) {
        return Err("log axis needs positive values".into());
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        pts.clone().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (x_lo, x_hi) = fold(|p| p.0);
    let (y_lo, y_hi) = fold(|p| p.1);
    let (xa, xb, xticks) = axis(x_lo, x_hi, false);
    let (ya, yb, yticks) = axis(y_lo, y_hi, chart.log_y);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - xa) / (xb - xa) * pw;
    let sy = |y: f64| {
        let y = if chart.log_y { y.log10() } else { y };
        TOP + ph - (y - ya) / (yb - ya) * ph
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(&chart.title));
    s.push_str("<desc>");
    for (k, v) in prov.entries() {
        let _ = write!(s, "{}: {}; ", escape(k), escape(v));
    }
    s.push_str("</desc>\n");
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&chart.title)
    );
    for &t in &xticks {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            tick_label(t, false)
        );
    }
    for &t in &yticks {
        let y = TOP + ph - (t - ya) / (yb - ya) * ph;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t, chart.log_y)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 14.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            escape(&series.label),
            coords.join(" ")
        );
        // markers only when sparse enough to read
        if series.points.len() <= 40 {
            for c in &coords {
                let (x, y) = c.split_once(',').expect("formatted pair");
                let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = TOP + 12.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<stem>.svg` into `out_dir` for each CSV. Every input is checked
/// and rendered before anything is written.
pub fn cmd_plot(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if csv_paths.is_empty() {
        return Err(BenchError::Config("plot needs at least one CSV path".into()));
    }
    let mut rendered = Vec::new();
    for p in csv_paths {
        let table = CsvTable::read(p)?;
        let bad = |m: String| BenchError::Config(format!("cannot plot {}: {m}", p.display()));
        let chart = chart_for(&table).map_err(bad)?;
        let svg = render(&chart, &table.provenance).map_err(bad)?;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
        rendered.push((out_dir.join(format!("{stem}.svg")), svg));
    }
    crate::artifacts::ensure_dir(out_dir)?;
    rendered
        .into_iter()
        .map(|(path, svg)| {
            fs::write(&path, svg).map_err(|e| BenchError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
