//! File outputs: CSV tables, JSON summaries, the run manifest, and a small
//! self-contained SVG plotter.
//!
//! CSV dialect: comma separators, `.` decimal point, one header row, LF
//! line endings. Floats print with shortest round-trip formatting, so a
//! fixed input produces identical bytes on every run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct OutDir {
    dir: PathBuf,
    started: Instant,
}

impl OutDir {
    pub fn create(dir: &Path) -> std::io::Result<OutDir> {
        std::fs::create_dir_all(dir)?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, bytes)?;
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<CsvValue>]) -> std::io::Result<PathBuf> {
        let mut s = String::new();
        let _ = writeln!(s, "{}", header.join(","));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| v.render()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        self.write_bytes(name, s.as_bytes())
    }

    pub fn write_json(&self, name: &str, value: &serde_json::Value) -> std::io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Run manifest: config hash, seed, version, wall time. The wall time
    /// varies between runs, so determinism comparisons skip this file.
    pub fn write_manifest(
        &self,
        subcommand: &str,
        config_text: &str,
        seed: u64,
    ) -> std::io::Result<PathBuf> {
        let manifest = serde_json::json!({
            "subcommand": subcommand,
            "config_hash": format!("{:016x}", nsqsim_core::rng::fnv1a(config_text.as_bytes())),
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_ms": self.started.elapsed().as_millis() as u64,
        });
        self.write_json("manifest.json", &manifest)
    }
}

pub enum CsvValue {
    Float(f64),
    UInt(u64),
    Bool(bool),
}

impl CsvValue {
    fn render(&self) -> String {
        match self {
            CsvValue::Float(v) => format!("{v}"),
            CsvValue::UInt(v) => format!("{v}"),
            CsvValue::Bool(v) => format!("{}", *v as u8),
        }
    }
}

pub fn f(v: f64) -> CsvValue {
    CsvValue::Float(v)
}

pub fn u(v: u64) -> CsvValue {
    CsvValue::UInt(v)
}

pub fn b(v: bool) -> CsvValue {
    CsvValue::Bool(v)
}

// ---------------------------------------------------------------------------
// SVG rendering

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub color: &'a str,
}

pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

/// Minimal self-contained line plot.
pub fn render_plot(spec: &PlotSpec, series: &[Series]) -> String {
    let map = |v: f64, log: bool| if log { v.max(1e-300).log10() } else { v };
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if spec.log_y && y <= 0.0 {
                continue;
            }
            xs.push(map(x, spec.log_x));
            ys.push(map(y, spec.log_y));
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (PLOT_W - MARGIN_L - MARGIN_R);
    let py = |y: f64| PLOT_H - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (PLOT_H - MARGIN_T - MARGIN_B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
         viewBox=\"0 0 {PLOT_W} {PLOT_H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        PLOT_W / 2.0,
        xml_escape(spec.title)
    );
    // Axes box and ticks.
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        PLOT_W - MARGIN_L - MARGIN_R,
        PLOT_H - MARGIN_T - MARGIN_B
    );
    for k in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let label_x = if spec.log_x { 10f64.powf(fx) } else { fx };
        let label_y = if spec.log_y { 10f64.powf(fy) } else { fy };
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            px(fx),
            PLOT_H - MARGIN_B + 18.0,
            tick(label_x)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 6.0,
            py(fy) + 4.0,
            tick(label_y)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{}\" x2=\"{:.1}\" y2=\"{}\" stroke=\"#ddd\"/>",
            px(fx),
            MARGIN_T,
            px(fx),
            PLOT_H - MARGIN_B
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        PLOT_W / 2.0,
        PLOT_H - 12.0,
        xml_escape(spec.x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        PLOT_H / 2.0,
        PLOT_H / 2.0,
        xml_escape(spec.y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let mut d = String::new();
        for (j, &(x, y)) in ser.points.iter().enumerate() {
            if spec.log_y && y <= 0.0 {
                continue;
            }
            let cmd = if j == 0 || d.is_empty() { 'M' } else { 'L' };
            let _ = write!(
                d,
                "{cmd}{:.2},{:.2} ",
                px(map(x, spec.log_x)),
                py(map(y, spec.log_y))
            );
        }
        let _ = writeln!(
            s,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            d.trim_end(),
            ser.color
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{}\">{}</text>",
            PLOT_W - MARGIN_R - 150.0,
            MARGIN_T + 16.0 + 16.0 * i as f64,
            ser.color,
            xml_escape(ser.label)
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.04;
        (lo - pad, hi + pad)
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];
