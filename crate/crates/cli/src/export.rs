//! Image, profile and matrix files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use pabeam_core::LateralProfile;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary 8-bit greyscale (`P5`).
    Pgm,
    /// One line per axial row, comma-separated.
    Csv,
}

impl ImageFormat {
    pub fn name(&self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Csv => "csv",
        }
    }
}

impl FromStr for ImageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pgm" => Ok(ImageFormat::Pgm),
            "csv" => Ok(ImageFormat::Csv),
            other => Err(format!("expected pgm or csv, got '{other}'")),
        }
    }
}

/// Grey level for a dB value: `round(255 (v + DR) / DR)`, halves rounded up,
/// clamped to `[0, 255]`.
pub fn pgm_level(db: f64, dynamic_range: f64) -> u8 {
    let x = (255.0 * (db + dynamic_range) / dynamic_range + 0.5).floor();
    x.clamp(0.0, 255.0) as u8
}

pub fn render_pgm(db: &Array2<f64>, dynamic_range: f64) -> Vec<u8> {
    let (rows, cols) = db.dim();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(db.iter().map(|&v| pgm_level(v, dynamic_range)));
    out
}

/// `v` with 6 significant digits in the shortest of fixed or exponent
/// notation, trailing zeros dropped (C's `%.6g`).
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs());
    }
    trim_zeros(&format!("{v:.*}", (5 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn render_csv(matrix: &Array2<f64>) -> Vec<u8> {
    let mut out = String::with_capacity(matrix.len() * 12);
    for row in matrix.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format_sig6(*v));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Reads a matrix written by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Array2<f64>, String> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| format!("line {}: '{field}' is not a number", i + 1))?,
            );
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(format!(
                    "line {}: expected {c} values, found {width}",
                    i + 1
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).map_err(|e| e.to_string())
}

pub fn render_profile(profile: &LateralProfile) -> Vec<u8> {
    let mut out = String::from("lateral_mm,db\n");
    for (i, v) in profile.values_db.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{}",
            format_sig6(profile.lateral(i) * 1e3),
            format_sig6(*v)
        );
    }
    out.into_bytes()
}

/// Writes a dB image to `path`.
pub fn export_image(
    db: &Array2<f64>,
    dynamic_range: f64,
    path: &Path,
    format: ImageFormat,
) -> Result<(), CliError> {
    let bytes = match format {
        ImageFormat::Pgm => render_pgm(db, dynamic_range),
        ImageFormat::Csv => render_csv(db),
    };
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
