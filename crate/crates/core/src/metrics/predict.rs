use crate::dataset::{batch_iterator, images_to_tensor, DatasetManifest, PreprocessedImage, Split};
use crate::ensemble::{EnsembleModel, Mode};
use crate::Result;

/// Index of each row's maximum; the lowest index wins ties.
pub fn argmax_rows<T: PartialOrd + Copy>(rows: &[Vec<T>]) -> Vec<usize> {
    rows.iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub ids: Vec<String>,
    pub true_labels: Vec<usize>,
    pub pred_labels: Vec<usize>,
    pub probabilities: Vec<Vec<f32>>,
}

impl Predictions {
    pub fn accuracy(&self) -> f64 {
        if self.true_labels.is_empty() {
            return 0.0;
        }
        let hits = self.true_labels.iter().zip(&self.pred_labels).filter(|(t, p)| t == p).count();
        hits as f64 / self.true_labels.len() as f64
    }
}

/// Inference-mode predictions for every record of `split`, in manifest order.
pub fn predict_labels(model: &EnsembleModel, manifest: &DatasetManifest, split: Split, batch_size: usize) -> Result<Predictions> {
    let mut out = Predictions { ids: vec![], true_labels: vec![], pred_labels: vec![], probabilities: vec![] };
    for batch in batch_iterator(manifest, split, batch_size, None)? {
        let batch = batch?;
        let probs = model.forward(&batch.images, Mode::Infer)?.to_vec2::<f32>()?;
        out.pred_labels.extend(argmax_rows(&probs));
        out.probabilities.extend(probs);
        out.true_labels.extend(batch.labels);
        out.ids.extend(batch.ids);
    }
    Ok(out)
}

/// Inference-mode class probabilities for already preprocessed images.
pub fn predict_images(model: &EnsembleModel, images: &[PreprocessedImage]) -> Result<Vec<Vec<f32>>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    Ok(model.forward(&images_to_tensor(images)?, Mode::Infer)?.to_vec2::<f32>()?)
}
