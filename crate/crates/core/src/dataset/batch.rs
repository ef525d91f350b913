use candle_core::{Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{load_image, DatasetManifest, PreprocessedImage, Split};
use crate::{Error, Result, INPUT_SIZE};

/// One mini-batch: images as `B×224×224×3`, labels one-hot as `B×K`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Tensor,
    pub onehot: Tensor,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn one_hot(label: usize, num_classes: usize) -> Vec<f32> {
    let mut v = vec![0.0; num_classes];
    v[label] = 1.0;
    v
}

/// Stacks preprocessed images into a `B×224×224×3` tensor.
pub fn images_to_tensor(images: &[PreprocessedImage]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * INPUT_SIZE * INPUT_SIZE * 3);
    for img in images {
        data.extend_from_slice(img.as_slice());
    }
    Ok(Tensor::from_vec(data, (images.len(), INPUT_SIZE, INPUT_SIZE, 3), &Device::Cpu)?)
}

/// Iterates over one epoch of a split. Images are decoded lazily, one batch
/// at a time.
pub struct BatchIter<'a> {
    manifest: &'a DatasetManifest,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

pub fn batch_iterator(
    manifest: &DatasetManifest,
    split: Split,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    let mut order = manifest.indices(split);
    if order.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(BatchIter { manifest, order, batch_size, pos: 0 })
}

impl BatchIter<'_> {
    /// Record indices in the order they will be emitted.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    fn load(&self, indices: &[usize]) -> Result<Batch> {
        let k = self.manifest.num_classes();
        let mut images = Vec::with_capacity(indices.len());
        let mut onehot = Vec::with_capacity(indices.len() * k);
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            let record = &self.manifest.records[i];
            images.push(load_image(&record.path)?);
            onehot.extend(one_hot(record.label, k));
            labels.push(record.label);
            ids.push(record.image_id.clone());
        }
        let n = labels.len();
        Ok(Batch {
            images: images_to_tensor(&images)?,
            onehot: Tensor::from_vec(onehot, (n, k), &Device::Cpu)?,
            labels,
            ids,
        })
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(self.load(&indices))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageRecord;
    use image::{Rgb, RgbImage};

    fn manifest_on_disk(n: usize) -> (tempfile::TempDir, DatasetManifest) {
        let dir = tempfile::tempdir().unwrap();
        let records = (0..n)
            .map(|i| {
                let path = dir.path().join(format!("img{i:03}.png"));
                RgbImage::from_pixel(4, 4, Rgb([i as u8, 0, 0])).save(&path).unwrap();
                ImageRecord { image_id: format!("img{i:03}"), path, label: i % 5, split: Split::Train }
            })
            .collect();
        (dir, DatasetManifest::from_records(records, crate::default_class_names()).unwrap())
    }

    #[test]
    fn ceiling_batches() {
        let (_dir, m) = manifest_on_disk(33);
        let sizes: Vec<usize> = batch_iterator(&m, Split::Train, 16, None).unwrap().map(|b| b.unwrap().len()).collect();
        assert_eq!(sizes, [16, 16, 1]);
        let first = batch_iterator(&m, Split::Train, 16, None).unwrap().next().unwrap().unwrap();
        assert_eq!(first.images.dims(), &[16, 224, 224, 3]);
        assert_eq!(first.onehot.dims(), &[16, 5]);
    }

    #[test]
    fn one_hot_encoding() {
        assert_eq!(one_hot(3, 5), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn shuffle_is_seeded_and_covers_everything() {
        let (_dir, m) = manifest_on_disk(20);
        let a = batch_iterator(&m, Split::Train, 3, Some(9)).unwrap();
        let b = batch_iterator(&m, Split::Train, 3, Some(9)).unwrap();
        assert_eq!(a.order(), b.order());
        let plain = batch_iterator(&m, Split::Train, 3, None).unwrap();
        assert_eq!(plain.order(), (0..20).collect::<Vec<_>>().as_slice());
        assert_ne!(a.order(), plain.order());

        let mut ids: Vec<String> = a.flat_map(|b| b.unwrap().ids).collect();
        ids.sort();
        let expected: Vec<String> = m.records.iter().map(|r| r.image_id.clone()).collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn empty_split_and_zero_batch_size() {
        let (_dir, m) = manifest_on_disk(3);
        assert!(matches!(batch_iterator(&m, Split::Test, 4, None), Err(Error::EmptySplit(_))));
        assert!(batch_iterator(&m, Split::Train, 0, None).is_err());
    }
}
