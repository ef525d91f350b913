use rand::seq::SliceRandom;

use super::{DatasetManifest, Split};
use crate::{seed, Error, Result};

/// Distributes `round(fraction * total)` items across classes: each class
/// gets `floor(fraction * n)`, and the leftover units go to the classes with
/// the largest fractional remainders (lowest class index wins ties).
pub fn allocate_largest_remainder(counts: &[usize], fraction: f64) -> Vec<usize> {
    let quotas: Vec<f64> = counts.iter().map(|&n| snap(fraction * n as f64)).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let total = snap(fraction * counts.iter().sum::<usize>() as f64).round() as usize;
    let assigned: usize = alloc.iter().sum();

    let mut order: Vec<usize> = (0..counts.len()).filter(|&c| quotas[c].fract() > 0.0).collect();
    order.sort_by(|&a, &b| quotas[b].fract().total_cmp(&quotas[a].fract()).then(a.cmp(&b)));
    for &c in order.iter().take(total.saturating_sub(assigned)) {
        alloc[c] += 1;
    }
    alloc
}

// Absorbs representation error such as 0.7 * 10 = 7.000000000000001.
fn snap(q: f64) -> f64 {
    let r = q.round();
    if (q - r).abs() < 1e-9 {
        r
    } else {
        q
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..1.0).contains(&value) {
        return Err(Error::InvalidFraction { name, value, reason: "must lie in [0, 1)" });
    }
    Ok(())
}

/// Moves a stratified share of the records currently in `from` into `to`.
fn reassign(manifest: &mut DatasetManifest, from: Split, to: Split, fraction: f64, seed: u64, stream: u64) -> Result<()> {
    let k = manifest.num_classes();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, r) in manifest.records.iter().enumerate() {
        if r.split == from {
            per_class[r.label].push(i);
        }
    }
    let counts: Vec<usize> = per_class.iter().map(Vec::len).collect();
    if fraction > 0.0 {
        if let Some(class) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidManifest(format!("class {class} has no {from} records to split")));
        }
    }
    let alloc = allocate_largest_remainder(&counts, fraction);
    for (class, (members, &take)) in per_class.iter_mut().zip(&alloc).enumerate() {
        if take >= members.len() && !members.is_empty() {
            return Err(Error::EmptyTrainClass { class });
        }
        let mut rng = seed::rng(seed, stream.wrapping_add(class as u64));
        members.shuffle(&mut rng);
        for &i in members.iter().take(take) {
            manifest.records[i].split = to;
        }
    }
    Ok(())
}

/// Assigns every record to train or test, stratified per class. Any previous
/// assignment is discarded.
pub fn stratified_split(manifest: &DatasetManifest, test_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    check_fraction("test_fraction", test_fraction)?;
    let mut out = manifest.clone();
    for r in &mut out.records {
        r.split = Split::Train;
    }
    reassign(&mut out, Split::Train, Split::Test, test_fraction, seed, seed::TEST_SPLIT << 8)?;
    out.seed = Some(seed);
    out.fractions.test = Some(test_fraction);
    out.fractions.val = None;
    Ok(out)
}

/// Reassigns a stratified share of the train records to val. Test records
/// are never touched.
pub fn carve_validation(manifest: &DatasetManifest, val_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    check_fraction("val_fraction", val_fraction)?;
    if manifest.records.iter().any(|r| r.split == Split::Unassigned) {
        return Err(Error::InvalidManifest("carve_validation needs an assigned train/test split".into()));
    }
    let mut out = manifest.clone();
    reassign(&mut out, Split::Train, Split::Val, val_fraction, seed, seed::VAL_SPLIT << 8)?;
    out.fractions.val = Some(val_fraction);
    Ok(out)
}
