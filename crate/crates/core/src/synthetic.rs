//! Seeded, linearly separable stand-in data for offline runs and tests.
//!
//! Class `k` images are a flat prototype colour with uniform per-pixel noise
//! and a small per-image brightness offset. Written as PNG files plus an
//! APTOS-style `labels.csv`, so they flow through the ordinary loader.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::dataset::{load_manifest, DatasetManifest};
use crate::{seed, Error, Result, NUM_CLASSES};

const PROTOTYPES: [[f32; 3]; NUM_CLASSES] = [
    [1.0, 0.0, 0.0],
    [0.8, 1.0, 0.0],
    [0.0, 1.0, 0.4],
    [0.0, 0.4, 1.0],
    [0.8, 0.0, 1.0],
];

const STREAM: u64 = 0x5e7;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    /// Total number of images, dealt round-robin over the classes.
    pub n_images: usize,
    pub size: u32,
    /// Half-width of the per-pixel uniform noise, in [0, 1] units.
    pub noise: f32,
    /// Half-width of the per-image brightness offset.
    pub jitter: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n_images: 500, size: crate::INPUT_SIZE as u32, noise: 0.08, jitter: 0.05, seed: 0 }
    }
}

pub struct SyntheticDataset {
    pub labels_file: PathBuf,
    pub image_dir: PathBuf,
    pub manifest: DatasetManifest,
}

pub fn render(label: usize, spec: &SyntheticSpec, rng: &mut impl Rng) -> RgbImage {
    let proto = PROTOTYPES[label % NUM_CLASSES];
    let shift = rng.gen_range(-spec.jitter..=spec.jitter);
    RgbImage::from_fn(spec.size, spec.size, |_, _| {
        Rgb(std::array::from_fn(|c| {
            let v = proto[c] + shift + rng.gen_range(-spec.noise..=spec.noise);
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        }))
    })
}

/// Writes `images/syn_<i>.png` and `labels.csv` under `dir` and loads them
/// back as a manifest.
pub fn generate(dir: &Path, spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    if spec.n_images == 0 || spec.size == 0 {
        return Err(Error::InvalidConfig("synthetic dataset needs n_images >= 1 and size >= 1".into()));
    }
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let labels_file = dir.join("labels.csv");
    let mut csv = String::from("id_code,diagnosis\n");
    let mut rng = seed::rng(spec.seed, STREAM);
    let width = spec.n_images.to_string().len();
    for i in 0..spec.n_images {
        let label = i % NUM_CLASSES;
        let id = format!("syn_{i:0width$}");
        let path = image_dir.join(format!("{id}.png"));
        render(label, spec, &mut rng)
            .save(&path)
            .map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
        csv.push_str(&format!("{id},{label}\n"));
    }
    let mut f = std::fs::File::create(&labels_file).map_err(|e| Error::io(&labels_file, e))?;
    f.write_all(csv.as_bytes()).map_err(|e| Error::io(&labels_file, e))?;
    let manifest = load_manifest(&labels_file, &image_dir, &crate::default_class_names())?;
    Ok(SyntheticDataset { labels_file, image_dir, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let spec = SyntheticSpec { n_images: 10, size: 8, ..Default::default() };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let da = generate(a.path(), &spec).unwrap();
        generate(b.path(), &spec).unwrap();
        assert_eq!(da.manifest.class_counts, vec![2; 5]);
        for r in &da.manifest.records {
            let other = b.path().join("images").join(r.path.file_name().unwrap());
            assert_eq!(std::fs::read(&r.path).unwrap(), std::fs::read(other).unwrap());
        }
    }

    #[test]
    fn class_means_are_near_prototypes() {
        let spec = SyntheticSpec { size: 16, ..Default::default() };
        let mut rng = seed::rng(1, 2);
        for (k, proto) in PROTOTYPES.iter().enumerate() {
            let img = render(k, &spec, &mut rng);
            for c in 0..3 {
                let mean = img.pixels().map(|p| p[c] as f32).sum::<f32>() / 256.0 / 255.0;
                assert!((mean - proto[c]).abs() < 0.08, "class {k} channel {c}: {mean}");
            }
        }
    }
}
