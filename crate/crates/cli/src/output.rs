//! Artifact writing: every file lands via write-then-rename.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Header comment shared by every CSV artifact.
pub fn csv_header_line(name: &str, seed: u64) -> String {
    format!("# ioncycle {} spec={name} seed={seed}\n", ioncycle::VERSION)
}

/// Writes a CSV with a `#` comment line on top. Rows are pre-formatted
/// cells so float formatting stays under the caller's control.
pub fn write_csv(path: &Path, comment: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut buf = comment.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| io_err(path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    write_atomic(path, &buf)
}

/// Reads a CSV written by [`write_csv`] (or any headed CSV, `#` lines
/// skipped) into header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = header.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Extracts numeric columns by name.
pub fn numeric_columns(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
    names: &[&str],
) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let idx = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("{}: missing column '{name}'", path.display())))?;
        let col = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.get(idx).and_then(|c| c.parse::<f64>().ok()).ok_or_else(|| {
                    CliError::Schema(format!("{}: row {} column '{name}' is not a number", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(col);
    }
    Ok(out)
}
