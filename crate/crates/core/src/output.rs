//! Deterministic CSV, JSON and SVG emission with atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Fixed-precision scientific notation used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.15e}")
    }
}

/// Finite values as numbers, infinities and NaN as strings.
pub fn serialize_extended_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&fmt_f64(*x))
    }
}

pub fn serialize_extended_vec<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else {
            seq.serialize_element(&fmt_f64(*x))?;
        }
    }
    seq.end()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push_row(row.iter().map(|x| fmt_f64(*x)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CRLF-free CSV with RFC-4180 quoting.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let line = |cells: &[String]| cells.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",");
        out.push_str(&line(&self.header));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            csv: true,
            json: true,
            svg: true,
        }
    }
}

impl Formats {
    pub fn allows(&self, kind: FileKind) -> bool {
        match kind {
            FileKind::Csv => self.csv,
            FileKind::Json => self.json,
            FileKind::Svg => self.svg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Csv,
    Json,
    Svg,
}

/// Files collected in memory and written only once everything is ready.
#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(String, FileKind, String)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: FileKind, content: String) {
        self.files.push((name.into(), kind, content));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _, _)| n.as_str()).collect()
    }

    pub fn content(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _, _)| n == name).map(|(_, _, c)| c.as_str())
    }

    /// Names of the files `commit` would write.
    pub fn names_for(&self, formats: Formats) -> Vec<&str> {
        self.files
            .iter()
            .filter(|(_, kind, _)| formats.allows(*kind))
            .map(|(n, _, _)| n.as_str())
            .collect()
    }

    /// Writes every file allowed by `formats`; returns the written paths.
    pub fn commit(&self, dir: &Path, formats: Formats) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, kind, content) in &self.files {
            if formats.allows(*kind) {
                let path = dir.join(name);
                write_atomic(&path, content.as_bytes())?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn svg_num(x: f64) -> String {
    format!("{x:.2}")
}

/// Line plot; `log` puts both axes on a base-10 log scale and drops
/// nonpositive points.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log: bool) -> String {
    let tr = |v: f64| if log { v.log10() } else { v };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.xs.iter()
                .zip(&s.ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log || (**x > 0.0 && **y > 0.0)))
                .map(|(x, y)| (tr(*x), tr(*y)))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>",
        svg_num(W / 2.0),
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        svg_num(W - 2.0 * MARGIN),
        svg_num(H - 2.0 * MARGIN)
    );
    let tick = |v: f64| if log { format!("1e{v:.1}") } else { format!("{v:.3e}") };
    for (v, anchor_x, anchor_y, align) in [
        (x0, px(x0), H - MARGIN + 16.0, "start"),
        (x1, px(x1), H - MARGIN + 16.0, "end"),
    ] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{align}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            svg_num(anchor_x),
            svg_num(anchor_y),
            tick(v)
        );
    }
    for (v, y) in [(y0, py(y0)), (y1, py(y1) + 10.0)] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            svg_num(MARGIN - 4.0),
            svg_num(y),
            tick(v)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        svg_num(W / 2.0),
        svg_num(H - 18.0),
        xml_escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        svg_num(H / 2.0),
        svg_num(H / 2.0),
        xml_escape(y_label)
    );
    for (k, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{},{}", svg_num(px(x)), svg_num(py(y)))).collect();
        let dash = if ser.dashed { " stroke-dasharray=\"6,4\"" } else { "" };
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
            coords.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            svg_num(MARGIN + 8.0),
            svg_num(MARGIN + 16.0 + 14.0 * k as f64),
            xml_escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_f64(1.0), "1.000000000000000e0");
        assert_eq!(fmt_f64(-0.00125), "-1.250000000000000e-3");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_quoting() {
        let mut t = CsvTable::new(["name", "value"]);
        t.push_row(vec!["a,b".into(), "say \"hi\"".into()]);
        assert_eq!(t.render(), "name,value\n\"a,b\",\"say \"\"hi\"\"\"\n");
    }

    #[test]
    fn extended_floats_in_json() {
        #[derive(Serialize)]
        struct S {
            #[serde(serialize_with = "serialize_extended_f64")]
            x: f64,
        }
        assert_eq!(serde_json::to_string(&S { x: f64::NEG_INFINITY }).unwrap(), r#"{"x":"-inf"}"#);
        assert_eq!(serde_json::to_string(&S { x: 0.5 }).unwrap(), r#"{"x":0.5}"#);
    }

    #[test]
    fn svg_is_deterministic() {
        let s = vec![Series {
            label: "E".into(),
            xs: vec![0.125, 0.0625, 0.03125],
            ys: vec![1e-2, 3e-3, 1e-3],
            dashed: false,
        }];
        let a = svg_plot("t", "eps", "E", &s, true);
        assert_eq!(a, svg_plot("t", "eps", "E", &s, true));
        assert!(a.starts_with("<svg") && a.contains("<polyline"));
    }

    #[test]
    fn staged_commit_respects_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mut st = Staged::new();
        st.add("a.csv", FileKind::Csv, "x\n1\n".into());
        st.add("a.svg", FileKind::Svg, "<svg/>".into());
        let fmts = Formats { csv: true, json: true, svg: false };
        let written = st.commit(dir.path(), fmts).unwrap();
        assert_eq!(written.len(), 1);
        assert!(dir.path().join("a.csv").exists());
        assert!(!dir.path().join("a.svg").exists());
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
