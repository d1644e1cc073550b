//! Grayscale PFM ("Pf") reader/writer: float32 payload, bottom-up row
//! order, sign of the scale line selecting endianness. Non-finite and zero
//! values read as invalid mask entries; negative depths are rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{DepthGrid, ValidityMask};

fn read_line(reader: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(Error::Format("unexpected end of PFM header".into()));
    }
    Ok(line.trim().to_string())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthGrid> {
    let mut reader = BufReader::new(File::open(path.as_ref())?);
    let magic = read_line(&mut reader)?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::Format("color PFM not supported, want grayscale Pf".into())),
        other => return Err(Error::Format(format!("bad PFM magic {other:?}"))),
    }
    let dims = read_line(&mut reader)?;
    let mut parts = dims.split_whitespace();
    let width: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format("bad PFM width".into()))?;
    let height: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format("bad PFM height".into()))?;
    if parts.next().is_some() {
        return Err(Error::Format("malformed PFM dimension line".into()));
    }
    let scale: f64 = read_line(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 {
        return Err(Error::Format("PFM scale must be nonzero".into()));
    }
    let little_endian = scale < 0.0;
    let n = width * height;
    let mut buf = vec![0u8; n * 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated PFM payload".into()))?;

    let mut values = vec![0.0f64; n];
    let mut mask = ValidityMask::filled(width, height, false);
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        } as f64;
        // Bottom-up row order: file row 0 is the bottom image row.
        let file_row = i / width;
        let x = i % width;
        let y = height - 1 - file_row;
        if v.is_finite() && v != 0.0 {
            if v < 0.0 {
                return Err(Error::Format(format!("negative depth {v} at pixel ({x}, {y})")));
            }
            values[y * width + x] = v;
            mask.set(x, y, true);
        }
    }
    DepthGrid::from_parts(width, height, values, mask)
}

/// Write with scale -1.0 (little-endian); invalid pixels become NaN.
pub fn write_pfm(path: impl AsRef<Path>, grid: &DepthGrid) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    write!(writer, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    let (w, h) = (grid.width(), grid.height());
    for file_row in 0..h {
        let y = h - 1 - file_row;
        for x in 0..w {
            let v = if grid.valid(x, y) { grid.value(x, y) as f32 } else { f32::NAN };
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}
