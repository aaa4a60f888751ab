//! CSV and normalised PGM dumps of intermediate matrices.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use geotr_core::digitgen::write_pgm;
use geotr_core::Tensor;

/// `%.6g`-style formatting: six significant digits, trailing zeros dropped.
pub fn fmt_sig6(v: f32) -> String {
    let v = v as f64;
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.5e}");
        let (mant, e) = s.split_once('e').expect("scientific notation");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

pub fn to_csv(m: &Tensor<f32>) -> Result<String> {
    let (_, cols) = m.dims2()?;
    let mut out = String::new();
    for row in m.data().chunks_exact(cols) {
        let cells: Vec<String> = row.iter().map(|&v| fmt_sig6(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Min–max scaled to `[0, 1]`; a constant matrix maps to zeros.
pub fn normalized(m: &Tensor<f32>) -> Tensor<f32> {
    let lo = m.data().iter().copied().fold(f32::INFINITY, f32::min);
    let hi = m.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    m.map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
}

/// Writes `<name>.csv` and `<name>.pgm` under `dir`.
pub fn export(dir: &Path, name: &str, m: &Tensor<f32>) -> Result<()> {
    let csv = dir.join(format!("{name}.csv"));
    fs::write(&csv, to_csv(m)?).with_context(|| format!("writing {}", csv.display()))?;
    write_pgm(&normalized(m), dir.join(format!("{name}.pgm")))?;
    Ok(())
}
