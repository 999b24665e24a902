//! CSV and PGM input/output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operators::Vector;
use crate::trace::format_sig15;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        context: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, format!("line {}: `{field}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a header-free, row-major CSV matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(parse_err(path, "matrix is empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(parse_err(
            path,
            format!("line {}: expected {ncols} columns, found {}", i + 1, rows[i].len()),
        ));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

/// Reads a vector stored either one value per line or as a single row.
pub fn read_vector_csv(path: &Path) -> Result<Vector> {
    let values: Vec<f64> = read_rows(path)?.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(parse_err(path, "vector is empty"));
    }
    Ok(Vector::from_vec(values))
}

/// Writes one value per line with 15 significant digits.
pub fn write_vector_csv(path: &Path, v: &Vector) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for x in v.iter() {
        writeln!(out, "{}", format_sig15(*x)).map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

/// 8-bit grayscale bytes, `255·|x| / max|x|` rounded.
pub fn to_gray(values: &[f64]) -> Vec<u8> {
    let peak = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    values
        .iter()
        .map(|x| {
            if peak > 0.0 {
                (255.0 * x.abs() / peak).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Binary (P5) PGM of a row-major `width × height` image, max-normalized.
pub fn write_pgm(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch {
            context: "pgm image",
            expected: width * height,
            actual: values.len(),
        });
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{width} {height}\n255\n").map_err(|e| io_err(path, e))?;
    out.write_all(&to_gray(values)).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}
