use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, RgbImage};

use crate::{Error, Result, INPUT_SIZE};

/// A 224×224×3 image (row-major, channels last) scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessedImage {
    data: Vec<f32>,
    pub source_id: String,
}

impl PreprocessedImage {
    pub const SHAPE: [usize; 3] = [INPUT_SIZE, INPUT_SIZE, 3];

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * INPUT_SIZE + x) * 3 + c]
    }
}

/// Bilinear resize to the network input size followed by division by 255.
pub fn preprocess_image(raw: &RgbImage, source_id: impl Into<String>) -> Result<PreprocessedImage> {
    let (w, h) = raw.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Shape { expected: "H, W >= 1".into(), got: vec![h as usize, w as usize, 3] });
    }
    let side = INPUT_SIZE as u32;
    let resized;
    let pixels = if (w, h) == (side, side) {
        raw
    } else {
        resized = imageops::resize(raw, side, side, FilterType::Triangle);
        &resized
    };
    let data = pixels.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Ok(PreprocessedImage { data, source_id: source_id.into() })
}

/// Like [`preprocess_image`] but accepts a decoded image of any layout,
/// rejecting anything that is not 8-bit RGB.
pub fn preprocess_dynamic(img: &DynamicImage, source_id: impl Into<String>) -> Result<PreprocessedImage> {
    match img {
        DynamicImage::ImageRgb8(rgb) => preprocess_image(rgb, source_id),
        other => Err(Error::ChannelLayout { layout: format!("{:?}", other.color()) }),
    }
}

/// Decodes an image file and preprocesses it. The file stem becomes the
/// source id.
pub fn load_image(path: &Path) -> Result<PreprocessedImage> {
    let img = image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    preprocess_dynamic(&img, id).map_err(|e| match e {
        Error::ChannelLayout { .. } => Error::Image { path: path.to_path_buf(), message: e.to_string() },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Rgb, RgbaImage};
    use proptest::prelude::*;

    fn uniform(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v, v]))
    }

    #[test]
    fn saturated_zero_and_mid_grey() {
        let p = preprocess_image(&uniform(300, 200, 255), "x").unwrap();
        assert_eq!(p.as_slice().len(), 224 * 224 * 3);
        assert!(p.as_slice().iter().all(|&v| v == 1.0));
        let p = preprocess_image(&uniform(10, 10, 0), "x").unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
        let p = preprocess_image(&uniform(512, 384, 128), "x").unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-6));
        assert!((p.get(0, 0, 0) - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn native_size_is_not_resampled() {
        let mut img = uniform(224, 224, 0);
        img.put_pixel(5, 3, Rgb([255, 51, 0]));
        let p = preprocess_image(&img, "x").unwrap();
        assert_eq!(p.get(3, 5, 0), 1.0);
        assert_eq!(p.get(3, 5, 1), 0.2);
        assert_eq!(p.get(3, 4, 0), 0.0);
    }

    #[test]
    fn rejects_grey_and_alpha() {
        let grey = DynamicImage::ImageLuma8(GrayImage::new(4, 4));
        let err = preprocess_dynamic(&grey, "g").unwrap_err();
        assert!(err.to_string().contains("convert the image to 8-bit 3-channel RGB"), "{err}");
        let rgba = DynamicImage::ImageRgba8(RgbaImage::new(4, 4));
        assert!(matches!(preprocess_dynamic(&rgba, "a"), Err(Error::ChannelLayout { .. })));
    }

    #[test]
    fn rejects_empty() {
        assert!(preprocess_image(&RgbImage::new(0, 3), "e").is_err());
    }

    #[test]
    fn load_uses_file_stem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc123.png");
        uniform(8, 8, 255).save(&path).unwrap();
        let p = load_image(&path).unwrap();
        assert_eq!(p.source_id, "abc123");
        assert!(matches!(load_image(&dir.path().join("nope.png")), Err(Error::Image { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn output_in_unit_range(w in 1u32..64, h in 1u32..64, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = RgbImage::from_fn(w, h, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
            let p = preprocess_image(&img, "p").unwrap();
            prop_assert_eq!(p.as_slice().len(), 224 * 224 * 3);
            prop_assert!(p.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
