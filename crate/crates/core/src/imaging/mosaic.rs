use super::{check_bit_depth, BayerImage, BayerPattern, ImagingError, RgbImage};

/// Keeps only the channel each filter position senses and widens it from
/// 8 bits to `bit_depth` by a left shift, so `>> (bit_depth - 8)` inverts it.
pub fn rgb_to_bayer(
    img: &RgbImage,
    pattern: BayerPattern,
    bit_depth: u16,
) -> Result<BayerImage, ImagingError> {
    let (w, h) = (img.width(), img.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(ImagingError::OddDimensions {
            width: w,
            height: h,
        });
    }
    check_bit_depth(bit_depth)?;
    let shift = bit_depth - 8;
    let offsets = [
        [
            pattern.channel_at(0, 0).offset(),
            pattern.channel_at(0, 1).offset(),
        ],
        [
            pattern.channel_at(1, 0).offset(),
            pattern.channel_at(1, 1).offset(),
        ],
    ];

    let mut samples = Vec::with_capacity(w as usize * h as usize);
    for (y, row) in img.data().chunks_exact(3 * w as usize).enumerate() {
        let parity = &offsets[y & 1];
        for (x, px) in row.chunks_exact(3).enumerate() {
            samples.push((px[parity[x & 1]] as u16) << shift);
        }
    }
    BayerImage::new(w, h, bit_depth, pattern, samples)
}
