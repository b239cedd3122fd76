//! CSV and summary writers. Floats carry 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::RunError;

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn flag(b: bool) -> String {
    b.to_string()
}

/// Writes a header and rows of already formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
    let mut out = csv::Writer::from_path(path).map_err(|e| RunError::output(path, e))?;
    out.write_record(header).map_err(|e| RunError::output(path, e))?;
    for row in rows {
        out.write_record(row).map_err(|e| RunError::output(path, e))?;
    }
    out.flush().map_err(|e| RunError::output(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let file = File::create(path).map_err(|e| RunError::output(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| RunError::output(path, e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| RunError::output(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::output(path, e))
}
