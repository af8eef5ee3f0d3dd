use super::{BayerImage, RgbImage};

/// Bilinear reconstruction for viewing and report thumbnails.
///
/// A missing channel is the rounded mean of the same-colour pixels in the
/// 3x3 neighbourhood. The raster is padded by mirroring one pixel about each
/// border, which keeps the 2x2 colour phase intact at the edges. Output is
/// scaled back to 8 bits by `>> (bit_depth - 8)`.
pub fn demosaic_bilinear(img: &BayerImage) -> RgbImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let shift = img.bit_depth() - 8;
    let pattern = img.pattern();
    let samples = img.samples();
    let reflect = |i: isize, n: usize| -> usize {
        if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * n - 2 - i as usize
        } else {
            i as usize
        }
    };
    let mut data = Vec::with_capacity(3 * w * h);

    for y in 0..h {
        for x in 0..w {
            let own = pattern.channel_at(y, x).offset();
            let mut sum = [0u32; 3];
            let mut count = [0u32; 3];
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    // Colour phase follows the virtual (unreflected) position.
                    let c = pattern
                        .channel_at((y as isize + dy + 2) as usize, (x as isize + dx + 2) as usize)
                        .offset();
                    let sy = reflect(y as isize + dy, h);
                    let sx = reflect(x as isize + dx, w);
                    sum[c] += samples[sy * w + sx] as u32;
                    count[c] += 1;
                }
            }
            for c in 0..3 {
                let v = if c == own {
                    samples[y * w + x] as u32
                } else {
                    (sum[c] + count[c] / 2) / count[c]
                };
                data.push((v >> shift) as u8);
            }
        }
    }
    RgbImage::new(w as u32, h as u32, data).expect("dimensions come from a valid mosaic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{rgb_to_bayer, BayerPattern, Channel};

    #[test]
    fn constant_mosaic_gives_constant_rgb() {
        let img = BayerImage::new(6, 4, 10, BayerPattern::Bggr, vec![512; 24]).unwrap();
        let rgb = demosaic_bilinear(&img);
        assert!(rgb.data().iter().all(|&v| v == 128));
    }

    #[test]
    fn constant_colour_survives_round_trip() {
        let src = RgbImage::filled(8, 8, [200, 31, 7]).unwrap();
        for p in BayerPattern::ALL {
            let back = demosaic_bilinear(&rgb_to_bayer(&src, p, 10).unwrap());
            assert_eq!(back, src, "{p}");
        }
    }

    /// Fixed-kernel bilinear with one-pixel mirror padding.
    fn reference(img: &BayerImage) -> Vec<[u8; 3]> {
        let (w, h) = (img.width() as i64, img.height() as i64);
        let p = img.pattern();
        let at = |y: i64, x: i64| -> u32 {
            let y = if y < 0 { -y } else if y >= h { 2 * h - 2 - y } else { y };
            let x = if x < 0 { -x } else if x >= w { 2 * w - 2 - x } else { x };
            img.sample(x as u32, y as u32) as u32
        };
        let chan = |y: i64, x: i64| p.channel_at(y.rem_euclid(2) as usize, x.rem_euclid(2) as usize);
        let mean = |vals: &[u32]| {
            let n = vals.len() as u32;
            (vals.iter().sum::<u32>() + n / 2) / n
        };
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let mut px = [0u32; 3];
                let own = chan(y, x);
                px[own.offset()] = at(y, x);
                let cross = [at(y - 1, x), at(y + 1, x), at(y, x - 1), at(y, x + 1)];
                let diag = [at(y - 1, x - 1), at(y - 1, x + 1), at(y + 1, x - 1), at(y + 1, x + 1)];
                match own {
                    Channel::Green => {
                        let horiz = chan(y, x + 1);
                        let vert = chan(y + 1, x);
                        px[horiz.offset()] = mean(&[at(y, x - 1), at(y, x + 1)]);
                        px[vert.offset()] = mean(&[at(y - 1, x), at(y + 1, x)]);
                    }
                    Channel::Red | Channel::Blue => {
                        px[Channel::Green.offset()] = mean(&cross);
                        px[chan(y + 1, x + 1).offset()] = mean(&diag);
                    }
                }
                out.push(px.map(|v| (v >> (img.bit_depth() - 8)) as u8));
            }
        }
        out
    }

    #[test]
    fn four_by_four_matches_neighbour_oracle() {
        let samples: Vec<u16> = (0..16u16).map(|i| (i * 61 + 13) % 1024).collect();
        for p in BayerPattern::ALL {
            let img = BayerImage::new(4, 4, 10, p, samples.clone()).unwrap();
            let got = demosaic_bilinear(&img);
            let want = reference(&img);
            for (i, px) in want.iter().enumerate() {
                assert_eq!(&got.data()[3 * i..3 * i + 3], px, "{p} pixel {i}");
            }
        }
    }

    #[test]
    fn larger_random_mosaic_matches_oracle() {
        let mut s = 0x9E37_79B9u32;
        let samples: Vec<u16> = (0..12 * 10)
            .map(|_| {
                s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                ((s >> 8) % 1024) as u16
            })
            .collect();
        let img = BayerImage::new(12, 10, 10, BayerPattern::Gbrg, samples).unwrap();
        let got = demosaic_bilinear(&img);
        for (i, px) in reference(&img).iter().enumerate() {
            assert_eq!(&got.data()[3 * i..3 * i + 3], px, "pixel {i}");
        }
    }
}
