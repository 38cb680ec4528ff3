//! Summary tables and a minimal SVG line-plot writer.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), points }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const W: f64 = 560.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Line plot with axes, five ticks per axis and a legend. Output depends only
/// on the inputs, so identical data gives identical bytes.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{:.1} {:.1} V{:.1} H{:.1}" stroke="black" fill="none"/>"#,
        LEFT,
        TOP,
        TOP + ph,
        LEFT + pw
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, TOP + ph, TOP + ph + 4.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" font-size="10" text-anchor="middle">{xv:.3}</text>"#, TOP + ph + 16.0);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT:.1}" y2="{py:.1}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{yv:.3}</text>"#, LEFT - 6.0, py + 3.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 8.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = TOP + 14.0 * k as f64 + 8.0;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#, lx + 20.0, ly + 3.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub csv: String,
    pub rows: usize,
    pub notes: Vec<String>,
    /// `(file name, svg)` pairs.
    pub plots: Vec<(String, String)>,
}

/// `(constant, json path)` pairs read from one artifact.
type Keys<'a> = &'a [(&'a str, &'a [&'a str])];

pub const CSV_HEADER: &str = "experiment,constant,value,n,resolution,eps,gamma,seed";

fn read_json(dir: &Path, name: &str, notes: &mut Vec<String>) -> Option<Value> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str(&text) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("{}: unreadable json ({e}); rows skipped", path.display()));
                None
            }
        },
        Err(_) => {
            notes.push(format!("{}: missing; rows skipped", path.display()));
            None
        }
    }
}

fn at<'a>(v: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(v, |v, k| v.get(k))
}

fn fmt_value(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => Some(n.to_string()),
        Value::Null => Some("NA".into()),
        _ => None,
    }
}

/// One CSV row per (run, constant) plus ratio and oscillation plots.
pub fn summarize(run_dirs: &[PathBuf]) -> Result<Summary> {
    let mut out = Summary { csv: format!("{CSV_HEADER}\n"), ..Default::default() };
    for dir in run_dirs {
        let Some(config) = read_json(dir, "config.json", &mut out.notes) else { continue };
        let name = config.get("name").and_then(Value::as_str).unwrap_or("run").to_string();
        let param = |p: &[&str]| at(&config, p).and_then(fmt_value).unwrap_or_default();
        let tail = format!(
            "{},{},{},{},{}",
            param(&["grid", "n"]),
            param(&["grid", "resolution"]),
            param(&["density", "eps"]),
            param(&["domain", "gamma"]),
            param(&["seed"])
        );
        let sources: [(&str, Keys); 4] = [
            (
                "report.json",
                &[
                    ("beta", &["harnack", "beta"]),
                    ("L", &["uniform", "l"]),
                    ("M1", &["uniform", "m1"]),
                    ("lambda", &["uniform", "lambda"]),
                    ("p", &["p_min"]),
                    ("level_delta0", &["delta0_max"]),
                ],
            ),
            ("cover.json", &[("delta0", &["cover", "delta0"]), ("K", &["k_fit"])]),
            ("fit.json", &[("alpha", &["alpha_min"]), ("rho", &["rho_max"])]),
            ("sections.json", &[("sigma", &["sigma_max"])]),
        ];
        let mut docs = Vec::new();
        for (file, keys) in sources {
            let Some(doc) = read_json(dir, file, &mut out.notes) else { continue };
            for (constant, path) in keys {
                match at(&doc, path).and_then(fmt_value) {
                    Some(v) => {
                        let _ = writeln!(out.csv, "{name},{constant},{v},{tail}");
                        out.rows += 1;
                    }
                    None => out.notes.push(format!("{}: no value for {constant}", dir.join(file).display())),
                }
            }
            docs.push((file, doc));
        }
        for (file, doc) in &docs {
            if *file == "report.json" {
                if let Some(bands) = at(doc, &["harnack", "beta_by_band"]).and_then(Value::as_array) {
                    let pts = bands
                        .iter()
                        .filter_map(|b| Some((b.get(0)?.as_f64()?.log10(), b.get(1)?.as_f64()?)))
                        .collect();
                    let svg = line_plot(&format!("{name}: Harnack ratio by scale"), "log10 t", "beta", &[Series::new("beta", pts)]);
                    out.plots.push((format!("{name}_ratio.svg"), svg));
                }
            }
            if *file == "fit.json" {
                if let Some(fits) = doc.get("fits").and_then(Value::as_array) {
                    let series: Vec<Series> = fits
                        .iter()
                        .take(6)
                        .enumerate()
                        .filter_map(|(k, f)| {
                            let osc = f.get("osc")?.as_array()?;
                            let pts = osc
                                .iter()
                                .enumerate()
                                .filter_map(|(j, o)| Some((j as f64, o.as_f64()?.max(f64::MIN_POSITIVE).ln())))
                                .collect();
                            Some(Series::new(format!("fit {k}"), pts))
                        })
                        .collect();
                    let svg = line_plot(&format!("{name}: oscillation decay"), "level", "log osc", &series);
                    out.plots.push((format!("{name}_osc.svg"), svg));
                }
            }
        }
    }
    Ok(out)
}

/// Write `summary.csv` and the plots under `plot_dir`.
pub fn write_summary(summary: &Summary, csv_path: &Path, plot_dir: Option<&Path>) -> Result<()> {
    if let Some(parent) = csv_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(csv_path, &summary.csv)?;
    if let Some(dir) = plot_dir {
        fs::create_dir_all(dir)?;
        for (name, svg) in &summary.plots {
            fs::write(dir.join(name), svg)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_deterministic_and_well_formed() {
        let s = [Series::new("a<b", vec![(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)])];
        let a = line_plot("t", "x", "y", &s);
        let b = line_plot("t", "x", "y", &s);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("a&lt;b"));
        assert_eq!(a.matches("<polyline").count(), 1);
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let a = line_plot("t", "x", "y", &[Series::new("c", vec![(1.0, 1.0)])]);
        assert!(!a.contains("NaN") && !a.contains("inf"));
    }
}
