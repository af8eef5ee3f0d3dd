use super::{ImagingError, RgbImage};

/// Box-filter downscale. Each output pixel is the half-up rounded mean of
/// every source pixel its footprint touches.
pub fn resize_area(img: &RgbImage, out_w: u32, out_h: u32) -> Result<RgbImage, ImagingError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImagingError::InvalidDimensions {
            width: out_w,
            height: out_h,
        });
    }
    let (src_w, src_h) = (img.width(), img.height());
    if src_w < out_w || src_h < out_h {
        return Err(ImagingError::Upscale {
            src_w,
            src_h,
            dst_w: out_w,
            dst_h: out_h,
        });
    }
    if src_w == out_w && src_h == out_h {
        return Ok(img.clone());
    }

    let cols = spans(src_w, out_w);
    let rows = spans(src_h, out_h);
    let src = img.data();
    let stride = 3 * src_w as usize;
    let mut data = Vec::with_capacity(3 * out_w as usize * out_h as usize);

    for &(y0, y1) in &rows {
        for &(x0, x1) in &cols {
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                let row = &src[y * stride + 3 * x0..y * stride + 3 * x1];
                for px in row.chunks_exact(3) {
                    sum[0] += px[0] as u64;
                    sum[1] += px[1] as u64;
                    sum[2] += px[2] as u64;
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as u64;
            for s in sum {
                data.push(((s + n / 2) / n) as u8);
            }
        }
    }
    RgbImage::new(out_w, out_h, data)
}

/// Source index range `[floor(i*src/dst), ceil((i+1)*src/dst))` per output index.
fn spans(src: u32, dst: u32) -> Vec<(usize, usize)> {
    let (src, dst) = (src as u64, dst as u64);
    (0..dst)
        .map(|i| {
            let lo = i * src / dst;
            let hi = ((i + 1) * src).div_ceil(dst);
            (lo as usize, hi as usize)
        })
        .collect()
}
