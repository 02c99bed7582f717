//! Self-contained SVG plots: loss curves and spectrogram comparisons.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::config::StftConfig;
use crate::dsp::Spectrogram;
use crate::error::{Result, VocoderError};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;
pub const GRAY_LEVELS: usize = 64;
/// Dynamic range shown in spectrogram images.
const DB_RANGE: f64 = 80.0;
const MAX_COLUMNS: usize = 240;
const MAX_ROWS: usize = 128;

/// Training log columns keyed by step. Missing cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLog {
    pub steps: Vec<f64>,
    pub columns: Vec<(String, Vec<Option<f64>>)>,
}

impl LossLog {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| VocoderError::io(path, e))?;
        Self::from_reader(file)
    }

    /// Parses a CSV with a `step` column. `wall_ms` is ignored; every other
    /// column becomes a curve.
    pub fn from_reader(r: impl Read) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers()?.clone();
        let step_col = headers
            .iter()
            .position(|h| h == "step")
            .ok_or_else(|| VocoderError::Data("log has no step column".into()))?;
        let curve_cols: Vec<usize> = (0..headers.len())
            .filter(|&i| i != step_col && &headers[i] != "wall_ms")
            .collect();
        let mut log = LossLog {
            steps: Vec::new(),
            columns: curve_cols.iter().map(|&i| (headers[i].to_string(), Vec::new())).collect(),
        };
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let step = rec
                .get(step_col)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| VocoderError::Data(format!("row {}: bad step value", row + 1)))?;
            log.steps.push(step);
            for (slot, &i) in log.columns.iter_mut().zip(&curve_cols) {
                let cell = rec.get(i).unwrap_or("").trim();
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| {
                        VocoderError::Data(format!("row {}: bad value {cell:?} in {}", row + 1, slot.0))
                    })?)
                };
                slot.1.push(v);
            }
        }
        Ok(log)
    }
}

/// SVG coordinates of the finite points of a curve. Larger values are drawn
/// higher, so ordinates decrease as values increase.
pub fn curve_points(steps: &[f64], values: &[Option<f64>]) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(values)
        .filter_map(|(&s, v)| v.filter(|v| v.is_finite() && s.is_finite()).map(|v| (s, v)))
        .collect();
    if pts.is_empty() {
        return Vec::new();
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    pts.iter()
        .map(|&(x, y)| {
            (
                MARGIN + (x - x0) / span(x0, x1) * w,
                MARGIN + h - (y - y0) / span(y0, y1) * h,
            )
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn loss_curve_svg(name: &str, steps: &[f64], values: &[Option<f64>]) -> String {
    let pts = curve_points(steps, values);
    let finite: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(name)
    );
    if !finite.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}" font-family="sans-serif" font-size="10">{hi:.4e}</text>"#,
            MARGIN - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}" font-family="sans-serif" font-size="10">{lo:.4e}</text>"#,
            HEIGHT - MARGIN + 14.0
        );
    }
    let mut points = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        if i > 0 {
            points.push(' ');
        }
        let _ = write!(points, "{x:.3},{y:.3}");
    }
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.5" points="{points}"/>"##
    );
    s.push_str("</svg>\n");
    s
}

/// One SVG per curve (total and every component), named after the column.
pub fn loss_curve_svgs(log: &LossLog) -> Vec<(String, String)> {
    log.columns
        .iter()
        .map(|(name, values)| (name.clone(), loss_curve_svg(name, &log.steps, values)))
        .collect()
}

/// Index into the fixed 64-step grayscale map, 0 darkest.
pub fn gray_level(db: f64, lo: f64, hi: f64) -> usize {
    if !(hi > lo) || !db.is_finite() {
        return 0;
    }
    let t = ((db - lo) / (hi - lo)).clamp(0.0, 1.0);
    ((t * GRAY_LEVELS as f64) as usize).min(GRAY_LEVELS - 1)
}

fn gray_hex(level: usize) -> String {
    let v = (level * 255 / (GRAY_LEVELS - 1)) as u8;
    format!("#{v:02x}{v:02x}{v:02x}")
}

/// Block-averaged dB image `[rows][cols]`, low frequencies last (bottom).
fn db_image(samples: &[f64], cfg: &StftConfig) -> Result<Vec<Vec<f64>>> {
    let spec = Spectrogram::compute(samples, cfg)?;
    let (frames, bins) = (spec.frames(), spec.bins());
    let mag = spec.magnitude(0.0);
    let cols = frames.min(MAX_COLUMNS);
    let rows = bins.min(MAX_ROWS);
    let mut img = vec![vec![0.0; cols]; rows];
    for (r, row) in img.iter_mut().enumerate() {
        let (b0, b1) = (r * bins / rows, ((r + 1) * bins / rows).max(r * bins / rows + 1));
        for (c, cell) in row.iter_mut().enumerate() {
            let (f0, f1) = (c * frames / cols, ((c + 1) * frames / cols).max(c * frames / cols + 1));
            let mut power = 0.0;
            for f in f0..f1 {
                for b in b0..b1 {
                    let m = mag[f * bins + b];
                    power += m * m;
                }
            }
            power /= ((f1 - f0) * (b1 - b0)) as f64;
            *cell = 10.0 * (power + 1e-20).log10();
        }
    }
    img.reverse();
    Ok(img)
}

/// Two log-magnitude spectrograms side by side on a shared dB scale.
pub fn spectrogram_pair_svg(a: &[f64], b: &[f64], labels: (&str, &str), cfg: &StftConfig) -> Result<String> {
    let ia = db_image(a, cfg)?;
    let ib = db_image(b, cfg)?;
    let hi = ia
        .iter()
        .chain(&ib)
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = hi - DB_RANGE;
    let rows = ia.len();
    let cols = ia[0].len();
    let cell = 2.0;
    let panel_w = cols as f64 * cell;
    let panel_h = rows as f64 * cell;
    let width = 3.0 * MARGIN + 2.0 * panel_w;
    let height = 2.0 * MARGIN + panel_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (k, (img, label)) in [(&ia, labels.0), (&ib, labels.1)].into_iter().enumerate() {
        let x0 = MARGIN + k as f64 * (panel_w + MARGIN);
        let _ = writeln!(
            s,
            r#"<text x="{x0}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
            escape(label)
        );
        let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
        for (r, row) in img.iter().enumerate() {
            for (c, &db) in row.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"/>"#,
                    x0 + c as f64 * cell,
                    MARGIN + r as f64 * cell,
                    gray_hex(gray_level(db, lo, hi))
                );
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}
