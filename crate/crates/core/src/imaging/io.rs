//! Image and frame-stack files: portable graymaps, map CSV, and a binary
//! frame raster.
//!
//! Raster layout (little endian): magic `FLFRAME1`, `u64` ny, nx, bins,
//! `f64` bin width, `f64` origin, `u64` pad y, pad x, then `ny*nx*bins`
//! frame values in `[y, x, bin]` order, followed by the `ny*nx` underflow and
//! overflow values.

use std::io::{BufRead, Read, Write};

use ndarray::{Array2, Array3};
use thiserror::Error;

use super::GatedFrameStack;

pub const RASTER_MAGIC: &[u8; 8] = b"FLFRAME1";

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed graymap: {0}")]
    Pgm(String),
    #[error("malformed frame raster: {0}")]
    Raster(String),
}

/// Reads a P2 or P5 graymap as values in `[0, 1]` (pixel / maxval), indexed `[row, column]`.
pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Array2<f64>, ImageIoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String, ImageIoError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageIoError::Pgm("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let number = |s: String| s.parse::<usize>().map_err(|e| ImageIoError::Pgm(format!("{s:?}: {e}")));
    let width = number(token()?)?;
    let height = number(token()?)?;
    let maxval = number(token()?)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(ImageIoError::Pgm(format!("bad header {width}x{height} max {maxval}")));
    }
    let count = width * height;
    let values: Vec<usize> = match magic.as_str() {
        "P2" => (0..count).map(|_| token().and_then(number)).collect::<Result<_, _>>()?,
        "P5" => {
            // exactly one whitespace byte separates the header from the data
            let data = &bytes[pos + 1..];
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            if data.len() < need {
                return Err(ImageIoError::Pgm(format!("expected {need} data bytes, found {}", data.len())));
            }
            if wide {
                data.chunks_exact(2).take(count).map(|c| u16::from_be_bytes([c[0], c[1]]) as usize).collect()
            } else {
                data[..count].iter().map(|&b| b as usize).collect()
            }
        }
        other => return Err(ImageIoError::Pgm(format!("unsupported magic {other:?}"))),
    };
    if let Some(v) = values.iter().find(|&&v| v > maxval) {
        return Err(ImageIoError::Pgm(format!("value {v} above maxval {maxval}")));
    }
    let scale = 1.0 / maxval as f64;
    Ok(Array2::from_shape_vec((height, width), values.into_iter().map(|v| v as f64 * scale).collect())
        .expect("length checked"))
}

/// Writes an 8-bit binary graymap scaled linearly from the finite minimum to
/// the finite maximum. Non-finite entries become 0.
pub fn write_pgm<W: Write>(image: &Array2<f64>, mut w: W) -> std::io::Result<()> {
    let (h, wd) = image.dim();
    let finite = image.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{wd} {h}\n255\n")?;
    let data: Vec<u8> = image
        .iter()
        .map(|&v| if v.is_finite() { (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect();
    w.write_all(&data)
}

/// `x_index,y_index,value` rows in row-major order.
pub fn write_map_csv<W: Write>(image: &Array2<f64>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "x_index,y_index,value")?;
    for ((y, x), v) in image.indexed_iter() {
        writeln!(w, "{x},{y},{v:e}")?;
    }
    Ok(())
}

pub fn write_raster<W: Write>(stack: &GatedFrameStack, mut w: W) -> std::io::Result<()> {
    let (ny, nx, bins) = stack.frames.dim();
    w.write_all(RASTER_MAGIC)?;
    for n in [ny, nx, bins] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&stack.bin_width.to_le_bytes())?;
    w.write_all(&stack.origin.to_le_bytes())?;
    w.write_all(&(stack.padding.0 as u64).to_le_bytes())?;
    w.write_all(&(stack.padding.1 as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * (ny * nx * (bins + 2)));
    for v in stack.frames.iter().chain(&stack.underflow).chain(&stack.overflow) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_raster<R: Read>(mut r: R) -> Result<GatedFrameStack, ImageIoError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != RASTER_MAGIC {
        return Err(ImageIoError::Raster("bad magic".into()));
    }
    let mut word = || -> std::io::Result<[u8; 8]> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(b)
    };
    let ny = u64::from_le_bytes(word()?) as usize;
    let nx = u64::from_le_bytes(word()?) as usize;
    let bins = u64::from_le_bytes(word()?) as usize;
    let bin_width = f64::from_le_bytes(word()?);
    let origin = f64::from_le_bytes(word()?);
    let padding = (u64::from_le_bytes(word()?) as usize, u64::from_le_bytes(word()?) as usize);
    let total = ny
        .checked_mul(nx)
        .and_then(|p| p.checked_mul(bins + 2))
        .ok_or_else(|| ImageIoError::Raster("dimensions overflow".into()))?;
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(f64::from_le_bytes(word()?));
    }
    let plane = ny * nx;
    let over = values.split_off(plane * bins + plane);
    let under = values.split_off(plane * bins);
    let shape_err = |e: ndarray::ShapeError| ImageIoError::Raster(e.to_string());
    Ok(GatedFrameStack {
        frames: Array3::from_shape_vec((ny, nx, bins), values).map_err(shape_err)?,
        bin_width,
        origin,
        underflow: Array2::from_shape_vec((ny, nx), under).map_err(shape_err)?,
        overflow: Array2::from_shape_vec((ny, nx), over).map_err(shape_err)?,
        padding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_graymap_with_comments() {
        let text = "P2\n# comment\n3 2\n4\n0 1 2\n3 4 0\n";
        let img = read_pgm(text.as_bytes()).unwrap();
        assert_eq!(img.dim(), (2, 3));
        assert_eq!(img[[0, 2]], 0.5);
        assert_eq!(img[[1, 1]], 1.0);
    }

    #[test]
    fn binary_graymap_roundtrip() {
        let img = Array2::from_shape_fn((4, 5), |(y, x)| (y * 5 + x) as f64);
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        let back = read_pgm(buf.as_slice()).unwrap();
        assert_eq!(back.dim(), (4, 5));
        assert_eq!(back[[0, 0]], 0.0);
        assert_eq!(back[[3, 4]], 1.0);
    }

    #[test]
    fn wide_binary_graymap() {
        let mut bytes = b"P5 2 1 1000\n".to_vec();
        bytes.extend_from_slice(&500u16.to_be_bytes());
        bytes.extend_from_slice(&1000u16.to_be_bytes());
        let img = read_pgm(bytes.as_slice()).unwrap();
        assert_eq!(img.as_slice().unwrap(), &[0.5, 1.0]);
    }

    #[test]
    fn malformed_graymaps_fail() {
        assert!(read_pgm("P3\n1 1\n1\n0\n".as_bytes()).is_err());
        assert!(read_pgm("P2\n2 2\n1\n0 1 1\n".as_bytes()).is_err());
        assert!(read_pgm("P2\n1 1\n1\n7\n".as_bytes()).is_err());
    }

    #[test]
    fn raster_roundtrip_is_exact() {
        let mut stack = GatedFrameStack::zeros(3, 2, 4, 2.44e-9, -1e-6);
        stack.frames.indexed_iter_mut().for_each(|((y, x, k), v)| *v = (y as f64 + 0.1 * x as f64) / (k as f64 + 1.0));
        stack.underflow[[1, 1]] = 0.25;
        stack.overflow[[2, 0]] = 1e-30;
        stack.padding = (1, 0);
        let mut buf = Vec::new();
        write_raster(&stack, &mut buf).unwrap();
        assert_eq!(&buf[..8], RASTER_MAGIC);
        assert_eq!(read_raster(buf.as_slice()).unwrap(), stack);
        assert!(read_raster(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn map_csv_layout() {
        let img = Array2::from_shape_vec((1, 2), vec![1.0, 2.5]).unwrap();
        let mut buf = Vec::new();
        write_map_csv(&img, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x_index,y_index,value\n0,0,1e0\n1,0,2.5e0\n");
    }
}
