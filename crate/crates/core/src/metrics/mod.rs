//! Full-reference fidelity metrics, the no-reference perceptual index and
//! the diversity scores (IS, FID).

mod diversity;
mod niqe;
mod report;
mod ssim;

use crate::hsi_data::HsiCube;

pub use diversity::{fid, inception_score, inception_score_from_probs, Fid, KMeansClassifier, ProbClassifier};
pub use niqe::{fit_niqe, niqe, pi, ConstantMa, MaScorer, NiqeModel, NiqeParams};
pub use report::{evaluate, per_band_of, DiversityReport, MetricReport, PerBand};
pub use ssim::{ssim, ssim_band};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: Vec<usize>, right: Vec<usize> },
    #[error("empty input")]
    Empty,
    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    Window { height: usize, width: usize, window: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("feature dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("{0}")]
    Invalid(String),
}

fn dims(c: &HsiCube) -> Vec<usize> {
    vec![c.height(), c.width(), c.bands()]
}

pub(crate) fn check_pair(hr: &HsiCube, sr: &HsiCube) -> Result<(), MetricError> {
    if dims(hr) != dims(sr) {
        return Err(MetricError::Shape {
            left: dims(hr),
            right: dims(sr),
        });
    }
    if hr.data().is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn band_mse(hr: &[f32], sr: &[f32]) -> f64 {
    hr.iter().zip(sr).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>() / hr.len() as f64
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// `10 log10(255^2 / MSE)` over all voxels; `+inf` when the cubes agree.
pub fn psnr(hr: &HsiCube, sr: &HsiCube) -> Result<f64, MetricError> {
    check_pair(hr, sr)?;
    Ok(psnr_from_mse(band_mse(hr.data(), sr.data())))
}

pub fn psnr_per_band(hr: &HsiCube, sr: &HsiCube) -> Result<Vec<f64>, MetricError> {
    check_pair(hr, sr)?;
    Ok((0..hr.bands()).map(|b| psnr_from_mse(band_mse(hr.band(b), sr.band(b)))).collect())
}

/// Root of the band-averaged per-band mean squared error.
pub fn sre(hr: &HsiCube, sr: &HsiCube) -> Result<f64, MetricError> {
    let per = sre_per_band(hr, sr)?;
    Ok((per.iter().map(|e| e * e).sum::<f64>() / per.len() as f64).sqrt())
}

/// Per-band root mean squared error.
pub fn sre_per_band(hr: &HsiCube, sr: &HsiCube) -> Result<Vec<f64>, MetricError> {
    check_pair(hr, sr)?;
    Ok((0..hr.bands()).map(|b| band_mse(hr.band(b), sr.band(b)).sqrt()).collect())
}

/// Spectral angle statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamValue {
    /// Mean angle over the pixels that were not skipped, in degrees.
    pub degrees: f64,
    /// Pixels skipped because one of the spectra has zero norm.
    pub skipped: usize,
    pub pixels: usize,
}

impl SamValue {
    /// More than 1% of the pixels were skipped.
    pub fn warn(&self) -> bool {
        self.skipped * 100 > self.pixels
    }
}

/// Angle between two vectors, `2 atan2(|a^ - b^|, |a^ + b^|)`, which stays
/// accurate near 0 and 90 degrees. `None` if either has zero norm.
fn angle(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Some(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

pub fn sam_detailed(hr: &HsiCube, sr: &HsiCube) -> Result<SamValue, MetricError> {
    check_pair(hr, sr)?;
    let (mut total, mut counted, mut skipped) = (0.0, 0usize, 0usize);
    let mut a = vec![0.0; hr.bands()];
    let mut b = vec![0.0; hr.bands()];
    for y in 0..hr.height() {
        for x in 0..hr.width() {
            for k in 0..hr.bands() {
                a[k] = hr.get(k, y, x) as f64;
                b[k] = sr.get(k, y, x) as f64;
            }
            match angle(&a, &b) {
                Some(t) => {
                    total += t;
                    counted += 1;
                }
                None => skipped += 1,
            }
        }
    }
    let degrees = if counted == 0 { 0.0 } else { (total / counted as f64).to_degrees() };
    Ok(SamValue {
        degrees,
        skipped,
        pixels: hr.height() * hr.width(),
    })
}

/// Mean spectral angle in degrees.
pub fn sam(hr: &HsiCube, sr: &HsiCube) -> Result<f64, MetricError> {
    sam_detailed(hr, sr).map(|s| s.degrees)
}
