//! Event files: one value per line, `#` comments and blank lines ignored.

use std::io::BufRead;
use std::path::Path;

use super::config::Transform;
use crate::density::SearchRegion;
use crate::error::{Error, Result};

/// Parses events from a reader and applies `transform`.
pub fn parse_events<R: BufRead>(reader: R, transform: Transform) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let v: f64 = text
            .parse()
            .map_err(|_| Error::ParseError { line: i + 1, message: format!("not a number: {text:?}") })?;
        values.push(transform.apply(v));
    }
    if values.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(values)
}

/// Reads an event file.
pub fn read_events(path: &Path, transform: Transform) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_events(std::io::BufReader::new(file), transform)
}

/// Rejects samples with values outside `region`, reporting how many.
pub fn check_events(values: &[f64], region: SearchRegion) -> Result<()> {
    let mut outside = values.iter().filter(|&&v| !region.contains(v));
    if let Some(&first) = outside.next() {
        return Err(Error::ValueOutsideRegion { count: 1 + outside.count(), first });
    }
    Ok(())
}

/// Converts a delimited table into the one-value-per-line event format by
/// extracting column `column` (zero based). Fields may be separated by
/// commas, tabs or spaces; lines starting with `#` and a non-numeric header
/// row are skipped.
pub fn convert_table<R: BufRead, W: std::io::Write>(reader: R, column: usize, mut out: W) -> Result<usize> {
    let mut written = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let field = text
            .split(|c: char| c == ',' || c == '\t' || c == ' ')
            .filter(|f| !f.is_empty())
            .nth(column)
            .ok_or_else(|| Error::ParseError { line: i + 1, message: format!("no column {column}") })?;
        match field.parse::<f64>() {
            Ok(v) => {
                writeln!(out, "{v}")?;
                written += 1;
            }
            Err(_) if written == 0 => continue,
            Err(_) => return Err(Error::ParseError { line: i + 1, message: format!("not a number: {field:?}") }),
        }
    }
    Ok(written)
}
