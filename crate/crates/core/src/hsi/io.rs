//! HSIF cube files and binary PGM band export.
//!
//! HSIF layout (little-endian): `"HSIF"`, version `u32 = 1`, then `B`, `H`,
//! `W` as `u32`, then `B*H*W` `f32` values band-major, row-major.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{HsiCube, HsiError, Result};

pub const HSIF_MAGIC: [u8; 4] = *b"HSIF";
pub const HSIF_VERSION: u32 = 1;

/// Hard cap on the payload a header may announce (16 GiB).
const MAX_PAYLOAD_BYTES: u64 = 1 << 34;

pub fn write_cube<W: Write>(cube: &HsiCube, mut out: W) -> Result<()> {
    let (b, h, w) = cube.dims();
    out.write_all(&HSIF_MAGIC)?;
    for v in [HSIF_VERSION, b as u32, h as u32, w as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_cube<R: Read>(mut input: R) -> Result<HsiCube> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse_cube(&bytes)
}

fn parse_cube(bytes: &[u8]) -> Result<HsiCube> {
    const HEADER: usize = 20;
    if bytes.len() < 4 {
        return Err(HsiError::Truncated {
            expected: HEADER as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != HSIF_MAGIC {
        return Err(HsiError::BadMagic {
            expected: HSIF_MAGIC,
            found: magic,
        });
    }
    if bytes.len() < HEADER {
        return Err(HsiError::Truncated {
            expected: HEADER as u64,
            found: bytes.len() as u64,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let version = word(0);
    if version != HSIF_VERSION {
        return Err(HsiError::UnsupportedVersion(version));
    }
    let (b, h, w) = (u64::from(word(1)), u64::from(word(2)), u64::from(word(3)));
    let overflow = HsiError::DimensionOverflow {
        bands: b,
        height: h,
        width: w,
    };
    if b == 0 || h == 0 || w == 0 {
        return Err(overflow);
    }
    let payload = b
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(4))
        .filter(|&n| n <= MAX_PAYLOAD_BYTES)
        .ok_or(overflow)?;
    let found = (bytes.len() - HEADER) as u64;
    if found != payload {
        return Err(HsiError::Truncated {
            expected: payload,
            found,
        });
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    HsiCube::new(b as usize, h as usize, w as usize, data)
}

pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    write_cube(cube, BufWriter::new(File::create(path)?))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    parse_cube(&std::fs::read(path)?)
}

/// Writes band `band` as an 8-bit P5 image, `round(clamp(x, 0, 1) * 255)`
/// with halves rounded up.
pub fn write_band_pgm<W: Write>(cube: &HsiCube, band: usize, mut out: W) -> Result<()> {
    if band >= cube.bands() {
        return Err(HsiError::BandOutOfRange {
            band,
            bands: cube.bands(),
        });
    }
    write!(out, "P5\n{} {}\n255\n", cube.width(), cube.height())?;
    let pixels: Vec<u8> = cube
        .band(band)
        .iter()
        .map(|&v| (f64::from(v).clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
        .collect();
    out.write_all(&pixels)?;
    out.flush()?;
    Ok(())
}

pub fn export_band_pgm(cube: &HsiCube, band: usize, path: impl AsRef<Path>) -> Result<()> {
    if band >= cube.bands() {
        return Err(HsiError::BandOutOfRange {
            band,
            bands: cube.bands(),
        });
    }
    write_band_pgm(cube, band, BufWriter::new(File::create(path)?))
}
