//! Binary PGM (P5) reader/writer, 8- and 16-bit, big-endian 16-bit payload
//! per the format convention. Intensities normalize to [0, 1] on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

/// Sample depth of a written PGM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

/// Read one header token, skipping whitespace and '#' comments.
fn read_token(reader: &mut impl Read) -> Result<String> {
    let mut token = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        let n = reader.read(&mut byte)?;
        if n == 0 {
            if token.is_empty() {
                return Err(Error::Format("unexpected end of PGM header".into()));
            }
            return Ok(token);
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c);
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let mut reader = BufReader::new(File::open(path.as_ref())?);
    let magic = read_token(&mut reader)?;
    if magic != "P5" {
        return Err(Error::Format(format!("unsupported PGM variant {magic:?}, want binary P5")));
    }
    let width: usize = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PGM width".into()))?;
    let height: usize = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PGM height".into()))?;
    let maxval: u32 = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PGM maxval".into()))?;
    if width == 0 || height == 0 {
        return Err(Error::Format("empty PGM extent".into()));
    }
    let n = width * height;
    let data = match maxval {
        255 => {
            let mut buf = vec![0u8; n];
            reader
                .read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated PGM payload".into()))?;
            buf.iter().map(|v| *v as f64 / 255.0).collect()
        }
        65535 => {
            let mut buf = vec![0u8; n * 2];
            reader
                .read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated PGM payload".into()))?;
            buf.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
                .collect()
        }
        other => {
            return Err(Error::Format(format!("unsupported PGM maxval {other}")));
        }
    };
    ImageBuffer::from_vec(width, height, data)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &ImageBuffer, depth: PgmDepth) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    let maxval = match depth {
        PgmDepth::Eight => 255u32,
        PgmDepth::Sixteen => 65535,
    };
    write!(writer, "P5\n{} {}\n{}\n", img.width(), img.height(), maxval)?;
    match depth {
        PgmDepth::Eight => {
            let buf: Vec<u8> = img
                .data()
                .iter()
                .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            writer.write_all(&buf)?;
        }
        PgmDepth::Sixteen => {
            let mut buf = Vec::with_capacity(img.data().len() * 2);
            for v in img.data() {
                let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
                buf.extend_from_slice(&q.to_be_bytes());
            }
            writer.write_all(&buf)?;
        }
    }
    writer.flush()?;
    Ok(())
}
