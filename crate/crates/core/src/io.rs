//! File formats: polytope JSON, matrix CSV, angle lists, SVG plots, atomic writes.

use crate::geometry::Polytope;
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid polytope: {0}")]
    BadPolytope(String),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(file_err(dir))?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(file_err(&tmp))?;
    f.write_all(bytes).map_err(file_err(&tmp))?;
    f.sync_all().map_err(file_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(file_err(path))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(file_err(path))
}

/// Row-major CSV with a header row of column ids.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..m.ncols()).map(|j| j.to_string()))?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])))?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Parse { line: 0, msg: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IoError::Parse { line: i + 2, msg: format!("column {j}: `{field}` is not a number") })?;
            data.push(v);
        }
        rows += 1;
    }
    if cols == 0 && rows > 0 {
        return Err(IoError::Parse { line: 1, msg: "empty header".into() });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, IoError> {
    matrix_from_csv(&read_text(path)?)
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), IoError> {
    write_atomic(path, matrix_to_csv(m)?.as_bytes())
}

pub fn polytope_to_json(p: &Polytope) -> Result<String, IoError> {
    Ok(serde_json::to_string_pretty(p)?)
}

/// Parses and checks a polytope (`{dim, vertices, facets: [{normal, offset, incident}]}`).
pub fn polytope_from_json(text: &str) -> Result<Polytope, IoError> {
    let p: Polytope = serde_json::from_str(text)?;
    p.check().map_err(IoError::BadPolytope)?;
    Ok(p)
}

/// One radian value per line; blank lines are skipped.
pub fn parse_angles(text: &str) -> Result<Vec<f64>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| IoError::Parse { line: i + 1, msg: format!("`{}` is not a number", l.trim()) })
        })
        .collect()
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn as a polyline without markers.
    pub line: bool,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * p).find(|&x| x >= v).unwrap_or(10.0 * p)
}

/// Standalone SVG scatter/line plot; both axes include zero.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 70.0, 170.0, 40.0, 50.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (xmax, ymin, ymax) = all.fold((0.0f64, 0.0f64, 0.0f64), |a, p| (a.0.max(p.0), a.1.min(p.1), a.2.max(p.1)));
    let xmax = nice_max(xmax);
    let ymin = if ymin < 0.0 { -nice_max(-ymin) } else { 0.0 };
    let ymax = if ymax > 0.0 || ymin == 0.0 { nice_max(ymax) } else { 0.0 };
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let sx = |x: f64| ml + x / xmax * pw;
    let sy = |y: f64| mt + ph - (y - ymin) / (ymax - ymin) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, ml + pw / 2.0, escape(title));
    for i in 0..=5 {
        let (fx, fy) = (xmax * i as f64 / 5.0, ymin + (ymax - ymin) * i as f64 / 5.0);
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##, sx(fx), mt, sx(fx), mt + ph);
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##, ml, sy(fy), ml + pw, sy(fy));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), mt + ph + 16.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, sy(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(s, r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#, mt + ph / 2.0, escape(y_label));
    for (k, ser) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        if ser.line {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-dasharray="6 4"/>"#, pts.join(" "));
        } else {
            for &(x, y) in &ser.points {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{c}"/>"#, sx(x), sy(y));
            }
        }
        let ly = mt + 14.0 + 18.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{c}"/>"#, ml + pw + 12.0, ly - 10.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, ml + pw + 30.0, ly, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
