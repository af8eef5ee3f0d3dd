//! Back-end image transforms: area downscale, RGB to Bayer mosaic,
//! a reference demosaic for inspection, and pixel-wise comparison.
//!
//! Every operation is a pure function. Rounding is half-up on
//! non-negative integers throughout.

mod bayfile;
mod demosaic;
mod diff;
mod mosaic;
mod resize;

pub use bayfile::{decode_bay, encode_bay, read_bay, write_bay, BAY_MAGIC};
pub use demosaic::demosaic_bilinear;
pub use diff::{pixel_diff, DiffReport};
pub use mosaic::rgb_to_bayer;
pub use resize::resize_area;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image dimensions {width}x{height} are invalid")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("sample buffer has {got} entries, expected {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("cannot upscale {src_w}x{src_h} to {dst_w}x{dst_h}")]
    Upscale {
        src_w: u32,
        src_h: u32,
        dst_w: u32,
        dst_h: u32,
    },
    #[error("Bayer mosaics need even dimensions, got {width}x{height}")]
    OddDimensions { width: u32, height: u32 },
    #[error("bit depth {0} is outside 8..=16")]
    InvalidBitDepth(u16),
    #[error("sample {value} at index {index} exceeds {bit_depth}-bit range")]
    SampleRange {
        index: usize,
        value: u16,
        bit_depth: u16,
    },
    #[error("images differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("unknown Bayer pattern {0:?}")]
    UnknownPattern(String),
    #[error("malformed Bayer file: {0}")]
    BadBayFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Red,
    Green,
    Blue,
}

impl Channel {
    pub fn offset(self) -> usize {
        match self {
            Channel::Red => 0,
            Channel::Green => 1,
            Channel::Blue => 2,
        }
    }
}

/// 2x2 colour filter layout, named row-major from the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPattern {
    Rggb,
    #[default]
    Bggr,
    Grbg,
    Gbrg,
}

impl BayerPattern {
    pub const ALL: [BayerPattern; 4] = [
        BayerPattern::Rggb,
        BayerPattern::Bggr,
        BayerPattern::Grbg,
        BayerPattern::Gbrg,
    ];

    /// Code used in the `BAY1` file header.
    pub fn code(self) -> u16 {
        match self {
            BayerPattern::Rggb => 0,
            BayerPattern::Bggr => 1,
            BayerPattern::Grbg => 2,
            BayerPattern::Gbrg => 3,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Colour sensed at pixel `(row, col)`.
    pub fn channel_at(self, row: usize, col: usize) -> Channel {
        use Channel::*;
        let tile = match self {
            BayerPattern::Rggb => [[Red, Green], [Green, Blue]],
            BayerPattern::Bggr => [[Blue, Green], [Green, Red]],
            BayerPattern::Grbg => [[Green, Red], [Blue, Green]],
            BayerPattern::Gbrg => [[Green, Blue], [Red, Green]],
        };
        tile[row & 1][col & 1]
    }
}

impl fmt::Display for BayerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BayerPattern::Rggb => "RGGB",
            BayerPattern::Bggr => "BGGR",
            BayerPattern::Grbg => "GRBG",
            BayerPattern::Gbrg => "GBRG",
        };
        f.write_str(s)
    }
}

impl FromStr for BayerPattern {
    type Err = ImagingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerPattern::Rggb),
            "BGGR" => Ok(BayerPattern::Bggr),
            "GRBG" => Ok(BayerPattern::Grbg),
            "GBRG" => Ok(BayerPattern::Gbrg),
            _ => Err(ImagingError::UnknownPattern(s.to_string())),
        }
    }
}

/// 8-bit interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidDimensions { width, height });
        }
        let expected = 3 * width as usize * height as usize;
        if data.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let n = width as usize * height as usize;
        let data = rgb.iter().copied().cycle().take(3 * n).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn<F>(width: u32, height: u32, mut f: F) -> Result<Self, ImagingError>
    where
        F: FnMut(u32, u32) -> [u8; 3],
    {
        let mut data = Vec::with_capacity(3 * width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Bytes needed to move this image at 8 bits per channel.
    pub fn payload_bytes(&self) -> usize {
        self.data.len()
    }
}

impl From<image::RgbImage> for RgbImage {
    fn from(img: image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        RgbImage {
            width: w,
            height: h,
            data: img.into_raw(),
        }
    }
}

/// Single-channel colour-filter mosaic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayerImage {
    width: u32,
    height: u32,
    bit_depth: u16,
    pattern: BayerPattern,
    samples: Vec<u16>,
}

impl BayerImage {
    pub fn new(
        width: u32,
        height: u32,
        bit_depth: u16,
        pattern: BayerPattern,
        samples: Vec<u16>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidDimensions { width, height });
        }
        if width % 2 != 0 || height % 2 != 0 {
            return Err(ImagingError::OddDimensions { width, height });
        }
        check_bit_depth(bit_depth)?;
        let expected = width as usize * height as usize;
        if samples.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                got: samples.len(),
            });
        }
        let limit = max_sample(bit_depth);
        let peak = samples.iter().copied().max().unwrap_or(0);
        if peak > limit {
            let index = samples.iter().position(|&v| v > limit).expect("peak exceeds limit");
            let value = samples[index];
            return Err(ImagingError::SampleRange {
                index,
                value,
                bit_depth,
            });
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            pattern,
            samples,
        })
    }

    pub fn zeroed(
        width: u32,
        height: u32,
        bit_depth: u16,
        pattern: BayerPattern,
    ) -> Result<Self, ImagingError> {
        Self::new(
            width,
            height,
            bit_depth,
            pattern,
            vec![0; width as usize * height as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> u16 {
        self.bit_depth
    }

    pub fn pattern(&self) -> BayerPattern {
        self.pattern
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u16> {
        self.samples
    }

    pub fn pixel_count(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, x: u32, y: u32) -> u16 {
        self.samples[y as usize * self.width as usize + x as usize]
    }

    pub fn same_shape(&self, other: &BayerImage) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bit_depth == other.bit_depth
            && self.pattern == other.pattern
    }

    /// Bytes on a link that carries `bits_per_sample` per pixel, rounded up.
    pub fn payload_bytes(&self, bits_per_sample: u32) -> usize {
        (self.samples.len() * bits_per_sample as usize).div_ceil(8)
    }
}

pub(crate) fn check_bit_depth(bit_depth: u16) -> Result<(), ImagingError> {
    if (8..=16).contains(&bit_depth) {
        Ok(())
    } else {
        Err(ImagingError::InvalidBitDepth(bit_depth))
    }
}

pub(crate) fn max_sample(bit_depth: u16) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}
