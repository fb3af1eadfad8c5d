//! Envelope CSV exchange.
//!
//! Two layouts: `time_s,intensity` (phase discarded; imports as a real
//! amplitude `sqrt(intensity)`) and `time_s,re,im`.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use super::{Envelope, TimeGrid};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("time axis is not uniform at row {0}")]
    NonUniform(usize),
    #[error("too few rows ({0})")]
    TooShort(usize),
}

pub fn write_intensity_csv<W: Write>(env: &Envelope, mut w: W) -> std::io::Result<()> {
    writeln!(w, "time_s,intensity")?;
    for (t, s) in env.grid.times().zip(&env.samples) {
        writeln!(w, "{:e},{:e}", t, s.norm_sqr())?;
    }
    Ok(())
}

pub fn write_complex_csv<W: Write>(env: &Envelope, mut w: W) -> std::io::Result<()> {
    writeln!(w, "time_s,re,im")?;
    for (t, s) in env.grid.times().zip(&env.samples) {
        writeln!(w, "{:e},{:e},{:e}", t, s.re, s.im)?;
    }
    Ok(())
}

/// Reads either layout, chosen by column count.
pub fn read_envelope_csv<R: BufRead>(r: R) -> Result<Envelope, CsvError> {
    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut columns = None;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.first().is_some_and(|f| f.starts_with("time")) {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| CsvError::Parse { line: n + 1, message: format!("{s:?}: {e}") })
        };
        if *columns.get_or_insert(fields.len()) != fields.len() {
            return Err(CsvError::Parse { line: n + 1, message: "column count changes".into() });
        }
        let sample = match fields.len() {
            2 => {
                let intensity = parse(fields[1])?;
                if intensity < 0.0 {
                    return Err(CsvError::Parse { line: n + 1, message: "negative intensity".into() });
                }
                Complex64::new(intensity.sqrt(), 0.0)
            }
            3 => Complex64::new(parse(fields[1])?, parse(fields[2])?),
            k => return Err(CsvError::Parse { line: n + 1, message: format!("expected 2 or 3 columns, got {k}") }),
        };
        times.push(parse(fields[0])?);
        samples.push(sample);
    }
    if times.len() < 4 {
        return Err(CsvError::TooShort(times.len()));
    }
    let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, t) in times.iter().enumerate() {
        let expected = times[0] + step * i as f64;
        if (t - expected).abs() > 1e-6 * step {
            return Err(CsvError::NonUniform(i));
        }
    }
    let grid = TimeGrid::new(times[0], step, times.len())
        .map_err(|e| CsvError::Parse { line: 0, message: e.to_string() })?;
    Envelope::new(grid, samples).map_err(|e| CsvError::Parse { line: 0, message: e.to_string() })
}
