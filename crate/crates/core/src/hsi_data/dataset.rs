use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{bicubic_downsample, check_scale, DataError, HsiCube};

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub lr: HsiCube,
    pub hr: HsiCube,
    pub scale: usize,
    pub source_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPairDataset {
    pub pairs: Vec<PatchPair>,
    pub split: Vec<Split>,
    pub seed: u64,
}

impl PatchPairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn subset(&self, which: Split) -> Vec<&PatchPair> {
        self.pairs
            .iter()
            .zip(&self.split)
            .filter(|(_, s)| **s == which)
            .map(|(p, _)| p)
            .collect()
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|s| **s == which).count()
    }
}

/// Tiles `hr` into `hr_patch` squares at `stride` and pairs each with its
/// bicubic reduction. Everything is tagged [`Split::Train`].
pub fn crop_pairs(hr: &HsiCube, scale: usize, hr_patch: usize, stride: usize) -> Result<PatchPairDataset, DataError> {
    check_scale(scale)?;
    if hr_patch == 0 || hr_patch % scale != 0 {
        return Err(DataError::NotDivisible {
            height: hr_patch,
            width: hr_patch,
            divisor: scale,
        });
    }
    if stride == 0 {
        return Err(DataError::Invalid("stride must be positive".into()));
    }
    if hr_patch > hr.height() || hr_patch > hr.width() {
        return Err(DataError::PatchTooLarge {
            patch: hr_patch,
            height: hr.height(),
            width: hr.width(),
        });
    }
    let mut pairs = Vec::new();
    for y in (0..=hr.height() - hr_patch).step_by(stride) {
        for x in (0..=hr.width() - hr_patch).step_by(stride) {
            let patch = hr.crop(y, x, hr_patch, hr_patch);
            let lr = bicubic_downsample(&patch, scale)?;
            pairs.push(PatchPair {
                lr,
                hr: patch,
                scale,
                source_id: format!("y{y}-x{x}"),
            });
        }
    }
    let split = vec![Split::Train; pairs.len()];
    Ok(PatchPairDataset { pairs, split, seed: 0 })
}

/// Seeded random assignment of `floor(n * train_ratio)` pairs to training.
pub fn split_dataset(ds: &PatchPairDataset, train_ratio: f64, seed: u64) -> Result<PatchPairDataset, DataError> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(DataError::Invalid(format!("train ratio {train_ratio} not in (0, 1)")));
    }
    let n = ds.pairs.len();
    let n_train = (n as f64 * train_ratio).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    Ok(PatchPairDataset {
        pairs: ds.pairs.clone(),
        split,
        seed,
    })
}
