use hsisr_tensor::Tensor;
use rand::Rng;

use super::{DataConfig, TrainError};
use crate::hsi_data::{
    add_noise_snr, bicubic_upsample, crop_pairs, split_dataset, synth_cube, HsiCube, PatchPair, PatchPairDataset, Split, SynthSpec,
};
use crate::models::cubes_to_tensor;

/// Patch pairs with their bicubic enlargements, split into train and test.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Vec<PatchPair>,
    pub test: Vec<PatchPair>,
    pub train_up: Vec<HsiCube>,
    pub test_up: Vec<HsiCube>,
}

/// One minibatch as `(N, 1, bands, H, W)` tensors.
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
    pub lr_up: Tensor,
}

impl TrainData {
    pub fn from_dataset(ds: &PatchPairDataset, scale: usize) -> Result<Self, TrainError> {
        let train: Vec<PatchPair> = ds.subset(Split::Train).into_iter().cloned().collect();
        let test: Vec<PatchPair> = ds.subset(Split::Test).into_iter().cloned().collect();
        if train.is_empty() {
            return Err(TrainError::EmptyData);
        }
        let up = |v: &[PatchPair]| -> Result<Vec<HsiCube>, TrainError> {
            v.iter().map(|p| bicubic_upsample(&p.lr, scale).map_err(TrainError::Data)).collect()
        };
        Ok(Self {
            train_up: up(&train)?,
            test_up: up(&test)?,
            train,
            test,
        })
    }

    /// Synthetic scenes tiled into pairs and split; deterministic in `seed`.
    pub fn synthetic(d: &DataConfig, bands: usize, scale: usize, hr_patch: usize, seed: u64) -> Result<Self, TrainError> {
        let cubes = (0..d.n_scenes)
            .map(|s| {
                synth_cube(&SynthSpec {
                    height: d.scene_size,
                    width: d.scene_size,
                    bands,
                    n_endmembers: d.n_endmembers,
                    smoothness: d.smoothness,
                    seed: seed.wrapping_mul(1000).wrapping_add(s as u64),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_cubes(&cubes, d, scale, hr_patch, seed)
    }

    /// HR scenes tiled with `d.stride`, degraded (plus noise at `d.snr_db`)
    /// and split with `d.train_ratio`; deterministic in `seed`.
    pub fn from_cubes(cubes: &[HsiCube], d: &DataConfig, scale: usize, hr_patch: usize, seed: u64) -> Result<Self, TrainError> {
        let mut all = PatchPairDataset {
            pairs: Vec::new(),
            split: Vec::new(),
            seed,
        };
        for (s, cube) in cubes.iter().enumerate() {
            let mut ds = crop_pairs(cube, scale, hr_patch, d.stride)?;
            for (i, p) in ds.pairs.iter_mut().enumerate() {
                p.source_id = format!("s{s}-{}", p.source_id);
                if d.snr_db.is_finite() {
                    p.lr = add_noise_snr(&p.lr, d.snr_db, seed ^ ((s as u64) << 32) ^ i as u64)?;
                }
            }
            all.split.extend(ds.split);
            all.pairs.extend(ds.pairs);
        }
        if all.pairs.is_empty() {
            return Err(TrainError::EmptyData);
        }
        let ds = split_dataset(&all, d.train_ratio, seed)?;
        Self::from_dataset(&ds, scale)
    }

    pub fn batch(&self, idx: &[usize], test: bool) -> Result<Batch, TrainError> {
        let (pairs, up) = if test {
            (&self.test, &self.test_up)
        } else {
            (&self.train, &self.train_up)
        };
        let lr: Vec<&HsiCube> = idx.iter().map(|&i| &pairs[i].lr).collect();
        let hr: Vec<&HsiCube> = idx.iter().map(|&i| &pairs[i].hr).collect();
        let u: Vec<&HsiCube> = idx.iter().map(|&i| &up[i]).collect();
        Ok(Batch {
            lr: cubes_to_tensor(&lr)?,
            hr: cubes_to_tensor(&hr)?,
            lr_up: cubes_to_tensor(&u)?,
        })
    }

    /// `n` training indices drawn uniformly with replacement.
    pub fn sample(&self, rng: &mut impl Rng, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.train.len())).collect()
    }

    pub fn wavelengths(&self) -> &[f64] {
        self.train[0].hr.wavelengths()
    }
}
