use super::{critic_features, critic_scores, super_resolve_tensor, TrainData, TrainError, TrainState};
use crate::hsi_data::HsiCube;
use crate::losses::svd_mode_spectrum;
use crate::metrics::{evaluate, MetricReport};
use crate::models::tensor_to_cubes;

pub const HISTOGRAM_BINS: usize = 64;
/// Score batches smaller than this give unreliable densities.
pub const MIN_DIAGNOSTIC_BATCH: usize = 32;

/// Probability mass per bin over `[lo, hi]`; sums to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.mass.len() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

fn fill(v: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut mass = vec![0.0; bins];
    for &x in v {
        let i = if hi > lo {
            (((x - lo) / (hi - lo)) * bins as f64).floor().max(0.0) as usize
        } else {
            0
        };
        mass[i.min(bins - 1)] += 1.0;
    }
    let n = v.len().max(1) as f64;
    mass.iter_mut().for_each(|m| *m /= n);
    mass
}

/// Two histograms over the common range of both samples.
pub fn shared_histograms(a: &[f64], b: &[f64], bins: usize) -> (Histogram, Histogram) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    (
        Histogram {
            lo,
            hi,
            mass: fill(a, lo, hi, bins),
        },
        Histogram {
            lo,
            hi,
            mass: fill(b, lo, hi, bins),
        },
    )
}

/// `sum_i sqrt(p_i q_i)`, clamped to `[0, 1]`.
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum::<f64>().clamp(0.0, 1.0)
}

/// Overlap of two score samples on shared 64-bin histograms.
pub fn score_overlap(real: &[f64], generated: &[f64]) -> f64 {
    let (p, q) = shared_histograms(real, generated, HISTOGRAM_BINS);
    bhattacharyya(&p.mass, &q.mass)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseDiagnostics {
    pub scores_real: Vec<f64>,
    pub scores_gen: Vec<f64>,
    pub density_real: Histogram,
    pub density_gen: Histogram,
    pub overlap: f64,
    /// Fewer than [`MIN_DIAGNOSTIC_BATCH`] samples per side.
    pub small_batch: bool,
    /// Singular values of the (samples x channels) critic feature matrix.
    pub spectrum_real: Vec<f64>,
    pub spectrum_gen: Vec<f64>,
    pub is_curve: Vec<(usize, f64)>,
    pub fid_curve: Vec<(usize, f64)>,
}

/// Critic-score densities of real and generated test patches.
pub fn collapse_diagnostics(state: &TrainState, data: &TrainData) -> Result<CollapseDiagnostics, TrainError> {
    if data.test.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let idx: Vec<usize> = (0..data.test.len()).collect();
    let batch = data.batch(&idx, true)?;
    let sr = super_resolve_tensor(&state.generator, &batch.lr)?;
    let scores_real = critic_scores(&state.discriminator, &batch.hr)?;
    let scores_gen = critic_scores(&state.discriminator, &sr)?;
    let (density_real, density_gen) = shared_histograms(&scores_real, &scores_gen, HISTOGRAM_BINS);
    let overlap = bhattacharyya(&density_real.mass, &density_gen.mass);
    let spectrum = |x| -> Result<Vec<f64>, TrainError> {
        let f = critic_features(&state.discriminator, x)?;
        let cols = f[0].len();
        let flat: Vec<f64> = f.iter().flatten().copied().collect();
        Ok(svd_mode_spectrum(&flat, f.len(), cols)?.values)
    };
    Ok(CollapseDiagnostics {
        small_batch: scores_real.len() < MIN_DIAGNOSTIC_BATCH,
        spectrum_real: spectrum(&batch.hr)?,
        spectrum_gen: spectrum(&sr)?,
        scores_real,
        scores_gen,
        density_real,
        density_gen,
        overlap,
        is_curve: state.curves.iter().filter_map(|r| r.is.map(|v| (r.iter, v))).collect(),
        fid_curve: state.curves.iter().filter_map(|r| r.fid.map(|v| (r.iter, v))).collect(),
    })
}

/// Generated test cubes, in test-split order.
pub fn super_resolve_test(state: &TrainState, data: &TrainData) -> Result<Vec<HsiCube>, TrainError> {
    let idx: Vec<usize> = (0..data.test.len()).collect();
    let batch = data.batch(&idx, true)?;
    let sr = super_resolve_tensor(&state.generator, &batch.lr)?;
    Ok(tensor_to_cubes(&sr, data.wavelengths())?)
}

/// Fidelity of the generator and of bicubic enlargement on the test split.
pub fn test_reports(state: &TrainState, data: &TrainData) -> Result<(MetricReport, MetricReport), TrainError> {
    if data.test.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let sr = super_resolve_test(state, data)?;
    let model: Vec<(&HsiCube, &HsiCube)> = data.test.iter().zip(&sr).map(|(p, s)| (&p.hr, s)).collect();
    let base: Vec<(&HsiCube, &HsiCube)> = data.test.iter().zip(&data.test_up).map(|(p, s)| (&p.hr, s)).collect();
    Ok((evaluate(&model, None, true)?, evaluate(&base, None, true)?))
}
