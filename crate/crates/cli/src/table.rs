//! CSV output and numeric list parsing.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use crate::CliError;

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(
            File::create(p).map_err(|e| CliError::input(format!("cannot create {}: {e}", p.display())))?,
        ),
        None => Box::new(io::stdout().lock()),
    })
}

pub struct Table {
    writer: csv::Writer<Box<dyn Write>>,
}

impl Table {
    /// The header is written immediately so empty tables keep their schema.
    pub fn create<S: AsRef<str>>(out: Option<&Path>, header: &[S]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_writer(sink(out)?);
        writer
            .write_record(header.iter().map(|h| h.as_ref()))
            .map_err(CliError::io)?;
        Ok(Self { writer })
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) -> Result<(), CliError> {
        self.writer
            .write_record(cells.iter().map(|c| c.as_ref()))
            .map_err(CliError::io)
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(e.into()))
    }
}

/// Parses `a,b,c` or `start:end:count` (inclusive, evenly spaced).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("'{s}' is not a number"))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range '{text}' must be start:end:count"));
        }
        let (a, b) = (parse(parts[0])?, parse(parts[1])?);
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| format!("'{}' is not a point count", parts[2]))?;
        return Ok(match count {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect(),
        });
    }
    text.split(',').map(parse).collect()
}

pub fn nonempty(name: &str, values: Vec<f64>) -> Result<Vec<f64>, CliError> {
    if values.is_empty() {
        return Err(CliError::input(format!("{name} is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CliError::input(format!("{name} contains non-finite value {v}")));
    }
    Ok(values)
}
