//! Comma-separated report tables.
//!
//! Numbers use six significant digits in `%g` style with a `.` decimal
//! separator. Rust float formatting ignores the process locale, so output is
//! byte-identical across platforms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::calibration::CalibrationCoefficients;
use crate::error::{Error, Result};
use crate::evaluation::{CalibrationCurve, FlagReport, PrevalenceCurves, Quartiles};

/// `%.6g`: six significant digits, trailing zeros trimmed, exponent form
/// outside `1e-4 <= |x| < 1e6`.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_sig6(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(i64::from(b))
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

pub fn curve_table(curve: &CalibrationCurve) -> Table {
    let mut t = Table::new(&["t", "observed_fg_rate", "effective_weight", "valid"]);
    for k in 0..curve.eval_points.len() {
        t.push(vec![
            curve.eval_points[k].into(),
            curve.observed_fg_rate[k].into(),
            curve.effective_weight[k].into(),
            curve.valid[k].into(),
        ]);
    }
    t
}

pub fn prevalence_table(curves: &PrevalenceCurves) -> Table {
    let mut t = Table::new(&[
        "t",
        "gt_fg_rate",
        "pred_fg_rate",
        "effective_weight",
        "valid",
    ]);
    for k in 0..curves.gt.eval_points.len() {
        t.push(vec![
            curves.gt.eval_points[k].into(),
            curves.gt.observed_fg_rate[k].into(),
            curves.pred.observed_fg_rate[k].into(),
            curves.gt.effective_weight[k].into(),
            curves.gt.valid[k].into(),
        ]);
    }
    t
}

/// One row per flagged voxel.
pub fn flag_table(report: &FlagReport) -> Table {
    let mut t = Table::new(&["kind", "probability"]);
    for &p in &report.fp_probabilities {
        t.push(vec!["false_positive".into(), p.into()]);
    }
    for &p in &report.fn_probabilities {
        t.push(vec!["false_negative".into(), p.into()]);
    }
    t
}

pub fn quartile_table(report: &FlagReport) -> Table {
    let mut t = Table::new(&["kind", "count", "q1", "median", "q3"]);
    let mut row = |kind: &str, n: usize, q: Option<Quartiles>| {
        if let Some(q) = q {
            t.push(vec![
                kind.into(),
                n.into(),
                q.q1.into(),
                q.median.into(),
                q.q3.into(),
            ]);
        }
    };
    row(
        "false_positive",
        report.fp_probabilities.len(),
        report.fp_quartiles,
    );
    row(
        "false_negative",
        report.fn_probabilities.len(),
        report.fn_quartiles,
    );
    t
}

/// Plain-text coefficient record, readable by [`parse_coefficients`].
///
/// Coefficients are written with shortest round-trip precision.
pub fn format_coefficients(
    weights: &[f64],
    coeffs: &CalibrationCoefficients,
    clipped_voxels: Option<usize>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# calibrated ensemble coefficients");
    let _ = writeln!(s, "n_models = {}", coeffs.n_models());
    let weighting = match coeffs.options.weighting {
        crate::calibration::RowWeighting::Count => "count",
        crate::calibration::RowWeighting::PatternEqual => "pattern_equal",
    };
    let _ = writeln!(s, "weighting = {weighting}");
    let _ = writeln!(s, "nonnegative = {}", coeffs.options.nonnegative);
    let _ = writeln!(s, "rank = {}", coeffs.rank);
    let _ = writeln!(s, "rank_deficient = {}", coeffs.rank_deficient);
    let _ = writeln!(s, "residual_norm = {:?}", coeffs.residual_norm);
    let _ = writeln!(
        s,
        "zero_pattern_fg_rate = {:?}",
        coeffs.zero_pattern_fg_rate
    );
    let _ = writeln!(s, "zero_pattern_voxels = {}", coeffs.zero_pattern_voxels);
    let dropped: Vec<String> = coeffs
        .dropped_patterns
        .iter()
        .map(|p| p.to_string())
        .collect();
    let _ = writeln!(s, "dropped_patterns = {}", dropped.join(" "));
    if let Some(c) = clipped_voxels {
        let _ = writeln!(s, "clipped_voxels = {c}");
    }
    for (k, (w, a)) in weights.iter().zip(&coeffs.a).enumerate() {
        let _ = writeln!(s, "member.{k} = {w:?} {a:?}");
    }
    s
}

/// Member `(weight, coefficient)` pairs from a coefficient record.
pub fn parse_coefficients(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut members: Vec<(usize, f64, f64)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "malformed coefficient line {line:?}"
            )));
        };
        let key = key.trim();
        if let Some(idx) = key.strip_prefix("member.") {
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Config(format!("bad member index in {line:?}")))?;
            let mut parts = value.split_whitespace().map(str::parse::<f64>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(w)), Some(Ok(a)), None) => members.push((idx, w, a)),
                _ => return Err(Error::Config(format!("bad member record {line:?}"))),
            }
        }
    }
    members.sort_by_key(|m| m.0);
    if members.is_empty() || members.iter().enumerate().any(|(i, m)| m.0 != i) {
        return Err(Error::Config(
            "coefficient members missing or not contiguous".into(),
        ));
    }
    Ok(members.into_iter().map(|(_, w, a)| (w, a)).collect())
}
