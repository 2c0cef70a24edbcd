//! Embedding files: binary `EMB1` (magic, u32 rows, u32 cols, row-major
//! little-endian f32) or CSV (one row per line, no header).

use std::fmt::Write as _;

use ndarray::Array2;
use thiserror::Error;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error)]
pub enum EmbError {
    #[error("not an EMB1 file")]
    Magic,
    #[error("EMB1 payload length does not match {rows}x{cols}")]
    Length { rows: usize, cols: usize },
    #[error("CSV line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbFormat {
    Csv,
    Bin,
}

pub fn write_emb1(m: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * m.len());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for &v in m.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn read_emb1(bytes: &[u8]) -> Result<Array2<f64>, EmbError> {
    if bytes.len() < 12 || &bytes[..4] != EMB_MAGIC {
        return Err(EmbError::Magic);
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) != Some(payload.len()) {
        return Err(EmbError::Length { rows, cols });
    }
    let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn write_csv(m: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{}", *v as f32).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Parses a rectangular CSV matrix. Values are read at f32 precision, matching
/// what [`write_csv`] emits.
pub fn read_csv(text: &str) -> Result<Array2<f64>, EmbError> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f32>().map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| EmbError::Csv { line: i + 1, msg: e.to_string() })?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(EmbError::Csv { line: i + 1, msg: format!("expected {c} fields, got {}", row.len()) })
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).expect("rectangular"))
}

/// Reads either format, sniffing the EMB1 magic.
pub fn read_any(bytes: &[u8]) -> Result<Array2<f64>, EmbError> {
    if bytes.starts_with(EMB_MAGIC) {
        read_emb1(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| EmbError::Csv { line: 0, msg: e.to_string() })?;
        read_csv(text)
    }
}

pub fn write(m: &Array2<f64>, format: EmbFormat) -> Vec<u8> {
    match format {
        EmbFormat::Csv => write_csv(m).into_bytes(),
        EmbFormat::Bin => write_emb1(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn both_formats_round_trip_f32_values(rows in 0usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let m = Array2::from_shape_fn((rows, cols), |(i, j)| {
                let bits = seed.wrapping_mul(6364136223846793005).wrapping_add((i * 31 + j) as u64);
                ((bits >> 40) as f32 / 1e4 - 800.0) as f64
            });
            prop_assert_eq!(read_emb1(&write_emb1(&m)).unwrap(), m.clone());
            if rows > 0 {
                prop_assert_eq!(read_any(write_csv(&m).as_bytes()).unwrap(), m);
            }
        }
    }

    #[test]
    fn emb1_layout() {
        let m = ndarray::arr2(&[[1.0, 2.0, 3.0]]);
        let b = write_emb1(&m);
        assert_eq!(&b[..4], b"EMB1");
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&b[12..16], &1.0f32.to_le_bytes());
        assert!(matches!(read_emb1(&b[..15]), Err(EmbError::Length { .. })));
    }

    #[test]
    fn ragged_csv_rejected() {
        assert!(matches!(read_csv("1,2\n3\n"), Err(EmbError::Csv { line: 2, .. })));
    }
}
