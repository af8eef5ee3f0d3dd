use serde::{Deserialize, Serialize};

use super::{BayerImage, ImagingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiffReport {
    pub deviations: u64,
    pub max_abs_delta: u16,
    pub first_diff_index: Option<usize>,
}

pub fn pixel_diff(a: &BayerImage, b: &BayerImage) -> Result<DiffReport, ImagingError> {
    if !a.same_shape(b) {
        return Err(ImagingError::ShapeMismatch(format!(
            "{}x{} {}-bit {} vs {}x{} {}-bit {}",
            a.width(),
            a.height(),
            a.bit_depth(),
            a.pattern(),
            b.width(),
            b.height(),
            b.bit_depth(),
            b.pattern()
        )));
    }
    let (a, b) = (a.samples(), b.samples());
    if a == b {
        return Ok(DiffReport::default());
    }
    // Locate the first mismatch block-wise so equal prefixes compare as memcmp.
    const BLOCK: usize = 256;
    let block = a
        .chunks(BLOCK)
        .zip(b.chunks(BLOCK))
        .position(|(x, y)| x != y)
        .expect("slices differ");
    let first = block * BLOCK
        + a[block * BLOCK..]
            .iter()
            .zip(&b[block * BLOCK..])
            .position(|(x, y)| x != y)
            .expect("block differs");
    // Branch-free passes over bounded blocks; a block's count fits in u32.
    let (mut deviations, mut max_abs_delta) = (0u64, 0u16);
    for (x, y) in a[first..].chunks(4096).zip(b[first..].chunks(4096)) {
        let pairs = x.iter().zip(y);
        deviations += u64::from(pairs.clone().fold(0u32, |n, (p, q)| n.wrapping_add(u32::from(p != q))));
        max_abs_delta = pairs.fold(max_abs_delta, |m, (p, q)| m.max(p.abs_diff(*q)));
    }
    Ok(DiffReport {
        deviations,
        max_abs_delta,
        first_diff_index: Some(first),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::BayerPattern;
    use proptest::prelude::*;

    fn img(samples: Vec<u16>) -> BayerImage {
        BayerImage::new(4, 4, 10, BayerPattern::Bggr, samples).unwrap()
    }

    #[test]
    fn equal_images() {
        let a = img((0..16).collect());
        let r = pixel_diff(&a, &a).unwrap();
        assert_eq!(r, DiffReport::default());
    }

    #[test]
    fn single_change() {
        let a = img((0..16).collect());
        let mut s: Vec<u16> = (0..16).collect();
        s[9] = 1000;
        let r = pixel_diff(&a, &img(s)).unwrap();
        assert_eq!(r.deviations, 1);
        assert_eq!(r.first_diff_index, Some(9));
        assert_eq!(r.max_abs_delta, 991);
    }

    #[test]
    fn shape_mismatch() {
        let a = img(vec![0; 16]);
        let b = BayerImage::zeroed(4, 4, 10, BayerPattern::Rggb).unwrap();
        assert!(matches!(
            pixel_diff(&a, &b),
            Err(ImagingError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn prefix_replacement_counts_only_real_differences() {
        // Two 320x320 frames; the first 1000 pixels of `a` are replaced by `other`'s.
        let n = 320 * 320;
        let a: Vec<u16> = (0..n).map(|i| ((i * 7) % 1024) as u16).collect();
        let other: Vec<u16> = (0..n).map(|i| ((i * 3) % 1024) as u16).collect();
        let mut b = a.clone();
        b[..1000].copy_from_slice(&other[..1000]);
        let oracle = (0..1000).filter(|&i| a[i] != other[i]).count() as u64;
        let mk = |s| BayerImage::new(320, 320, 10, BayerPattern::Bggr, s).unwrap();
        let r = pixel_diff(&mk(a), &mk(b)).unwrap();
        assert_eq!(r.deviations, oracle);
        assert!(oracle > 0 && oracle < 1000);
    }

    proptest! {
        #[test]
        fn deviation_count_is_symmetric(
            a in proptest::collection::vec(0u16..1024, 16),
            b in proptest::collection::vec(0u16..1024, 16),
        ) {
            let (a, b) = (img(a), img(b));
            let ab = pixel_diff(&a, &b).unwrap();
            let ba = pixel_diff(&b, &a).unwrap();
            prop_assert_eq!(ab.deviations, ba.deviations);
            prop_assert_eq!(ab.first_diff_index, ba.first_diff_index);
            prop_assert_eq!(ab.deviations == 0, ab.first_diff_index.is_none());
        }
    }
}
