//! `BAY1` raw mosaic files.
//!
//! Layout, all little-endian: magic `BAY1`, `u32` width, `u32` height,
//! `u16` bit depth, `u16` pattern code, then `width * height` `u16`
//! samples in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{BayerImage, BayerPattern, ImagingError};

pub const BAY_MAGIC: &[u8; 4] = b"BAY1";
const HEADER_LEN: usize = 16;

pub fn encode_bay(img: &BayerImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * img.pixel_count());
    out.extend_from_slice(BAY_MAGIC);
    out.extend_from_slice(&img.width().to_le_bytes());
    out.extend_from_slice(&img.height().to_le_bytes());
    out.extend_from_slice(&img.bit_depth().to_le_bytes());
    out.extend_from_slice(&img.pattern().code().to_le_bytes());
    for s in img.samples() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_bay(bytes: &[u8]) -> Result<BayerImage, ImagingError> {
    if bytes.len() < HEADER_LEN {
        return Err(ImagingError::BadBayFile(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != BAY_MAGIC {
        return Err(ImagingError::BadBayFile("missing BAY1 magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let width = u32_at(4);
    let height = u32_at(8);
    let bit_depth = u16_at(12);
    let code = u16_at(14);
    let pattern = BayerPattern::from_code(code)
        .ok_or_else(|| ImagingError::BadBayFile(format!("pattern code {code}")))?;
    let n = width as usize * height as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 2 * n {
        return Err(ImagingError::BadBayFile(format!(
            "expected {} sample bytes for {width}x{height}, found {}",
            2 * n,
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    BayerImage::new(width, height, bit_depth, pattern, samples)
}

pub fn read_bay(path: &Path) -> Result<BayerImage, ImagingError> {
    decode_bay(&fs::read(path)?)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_bay(path: &Path, img: &BayerImage) -> Result<(), ImagingError> {
    let tmp = path.with_extension("bay.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode_bay(img))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
