use crate::corpus::RgbImage;
use crate::error::{Error, Result};

/// Channel-major `(3, size, size)` pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTensor {
    pub size: usize,
    pub data: Vec<f64>,
}

impl PixelTensor {
    pub fn zeros(size: usize) -> Self {
        PixelTensor {
            size,
            data: vec![0.0; 3 * size * size],
        }
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.data[(channel * self.size + y) * self.size + x]
    }
}

/// Nearest-neighbour resize to `target x target`, scaled to `[0, 1]`.
pub fn prepare_image(img: &RgbImage, target: usize) -> Result<PixelTensor> {
    if target == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    if img.width == 0 || img.height == 0 || img.data.len() != img.width * img.height * 3 {
        return Err(Error::InvalidArgument(format!(
            "image buffer of {} bytes does not match {}x{} RGB",
            img.data.len(),
            img.width,
            img.height
        )));
    }
    let mut out = PixelTensor::zeros(target);
    for y in 0..target {
        let sy = y * img.height / target;
        for x in 0..target {
            let sx = x * img.width / target;
            let px = img.pixel(sx, sy);
            for (c, v) in px.iter().enumerate() {
                out.data[(c * target + y) * target + x] = f64::from(*v) / 255.0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn white_is_one_black_is_zero() {
        let white = prepare_image(&RgbImage::filled(7, 5, [255; 3]), 8).unwrap();
        assert!(white.data.iter().all(|&v| v == 1.0));
        let black = prepare_image(&RgbImage::filled(3, 9, [0; 3]), 4).unwrap();
        assert!(black.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_upscale_is_block_replicated() {
        let mut img = RgbImage::new(2, 2);
        img.set_pixel(0, 0, [255, 255, 255]);
        img.set_pixel(1, 1, [255, 255, 255]);
        let t = prepare_image(&img, 4).unwrap();
        // Hand-computed: source pixel (x/2, y/2) fills each 2x2 block.
        let expected = [
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 1.0],
        ];
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(t.get(c, y, x), expected[y][x], "c{c} y{y} x{x}");
                }
            }
        }
    }

    #[test]
    fn zero_target_is_rejected() {
        assert!(prepare_image(&RgbImage::new(2, 2), 0).is_err());
    }

    proptest! {
        #[test]
        fn output_in_unit_range_with_exact_shape(
            w in 1usize..12, h in 1usize..12, target in 1usize..16, seed in any::<u64>()
        ) {
            let mut img = RgbImage::new(w, h);
            let mut s = seed;
            for b in img.data.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *b = (s >> 56) as u8;
            }
            let t = prepare_image(&img, target).unwrap();
            prop_assert_eq!(t.size, target);
            prop_assert_eq!(t.data.len(), 3 * target * target);
            prop_assert!(t.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
