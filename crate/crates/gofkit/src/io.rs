//! Sample CSV files: one row per observation, one column per coordinate.
//! A first row that does not parse as numbers is taken as a header.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use gofkit_core::sample::{Domain, Sample};

use crate::{Error, Result};

/// Reads observations for `domain` from CSV text. Blank lines and lines
/// starting with `#` are skipped; errors carry 1-based line numbers.
pub fn read_sample_from(mut reader: impl Read, domain: Domain, path: &Path) -> Result<Sample> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    let d = domain.dim();
    let mut data = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = content.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let header = std::mem::replace(&mut first, false);
        let row = match parsed {
            Ok(row) => row,
            Err(_) if header => continue,
            Err(_) => return Err(Error::format(path, line, "non-numeric value")),
        };
        if row.len() != d {
            return Err(Error::format(
                path,
                line,
                format!("expected {d} columns for {domain}, found {}", row.len()),
            ));
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::format(path, line, format!("non-finite value {bad}")));
        }
        data.extend(row);
    }
    if data.is_empty() {
        return Err(Error::format(path, 1, "no observations"));
    }
    Ok(Sample::new(domain, data)?)
}

pub fn read_sample(path: &Path, domain: Domain) -> Result<Sample> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sample_from(file, domain, path)
}

/// Writes a header `x1,...,xd` and one row per observation.
pub fn write_sample_to(mut writer: impl Write, sample: &Sample) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(&mut writer);
    let header: Vec<String> = (1..=sample.dim()).map(|j| format!("x{j}")).collect();
    csv.write_record(&header)?;
    for x in sample.points() {
        csv.write_record(x.iter().map(|v| v.to_string()))?;
    }
    csv.flush()
}

pub fn write_sample(path: &Path, sample: &Sample) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sample_to(std::io::BufWriter::new(file), sample).map_err(|e| Error::io(path, e))
}
