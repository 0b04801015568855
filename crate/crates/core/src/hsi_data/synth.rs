//! Synthetic scenes: per-pixel convex mixtures of smooth endmember spectra
//! with spatially correlated abundance maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::resample::reflect;
use super::{default_wavelengths, DataError, HsiCube};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub n_endmembers: usize,
    /// Correlation length of the abundance maps, in pixels.
    pub smoothness: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_endmembers < 2 {
            return Err(DataError::Invalid("n_endmembers must be at least 2".into()));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(DataError::Invalid("smoothness must be positive".into()));
        }
        if self.height == 0 || self.width == 0 || self.bands == 0 {
            return Err(DataError::Invalid("cube dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// A synthetic cube together with the ground truth it was mixed from.
#[derive(Clone, Debug)]
pub struct SynthScene {
    pub cube: HsiCube,
    /// `n_endmembers` spectra of length `bands`, values in `(0, 255]`.
    pub endmembers: Vec<Vec<f64>>,
    /// Per endmember, a `height * width` abundance map; columns sum to 1.
    pub abundances: Vec<Vec<f64>>,
}

/// Sharpness of the transition between materials.
const ABUNDANCE_GAIN: f64 = 4.0;

fn endmember(rng: &mut ChaCha8Rng, wavelengths: &[f64], slot: usize, n: usize) -> Vec<f64> {
    // one dominant peak per endmember, spread over the range, so the
    // spectra stay well separated
    let centre = 450.0 + 500.0 * (slot as f64 + rng.random_range(0.25..0.75)) / n as f64;
    let width = rng.random_range(40.0..90.0);
    let second = rng.random_range(450.0..950.0);
    let second_w = rng.random_range(60.0..160.0);
    let second_a = rng.random_range(0.1..0.4);
    let edge = rng.random_range(650.0..800.0);
    let edge_a = rng.random_range(0.0..0.3);
    let base = rng.random_range(0.05..0.15);
    let raw: Vec<f64> = wavelengths
        .iter()
        .map(|&l| {
            let g1 = (-(l - centre).powi(2) / (2.0 * width * width)).exp();
            let g2 = second_a * (-(l - second).powi(2) / (2.0 * second_w * second_w)).exp();
            let step = edge_a / (1.0 + (-(l - edge) / 15.0).exp());
            base + g1 + g2 + step
        })
        .collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    let level = rng.random_range(180.0..250.0);
    raw.iter().map(|v| v / peak * level).collect()
}

fn gaussian_blur(field: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in (-radius..=radius).enumerate() {
                acc += kernel[k] * field[y * w + reflect(x as isize + t, w)];
            }
            tmp[y * w + x] = acc / norm;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in (-radius..=radius).enumerate() {
                acc += kernel[k] * tmp[reflect(y as isize + t, h) * w + x];
            }
            out[y * w + x] = acc / norm;
        }
    }
    out
}

pub fn synth_scene(spec: &SynthSpec) -> Result<SynthScene, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w, n) = (spec.height, spec.width, spec.n_endmembers);
    let wavelengths = default_wavelengths(spec.bands);
    let endmembers: Vec<Vec<f64>> = (0..n).map(|m| endmember(&mut rng, &wavelengths, m, n)).collect();

    let mut fields: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let noise: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
            let mut f = gaussian_blur(&noise, h, w, spec.smoothness);
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            let sd = (f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f.len() as f64).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            f.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            f
        })
        .collect();
    for p in 0..h * w {
        let zmax = fields.iter().map(|f| f[p]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for f in fields.iter_mut() {
            f[p] = (ABUNDANCE_GAIN * (f[p] - zmax)).exp();
            total += f[p];
        }
        for f in fields.iter_mut() {
            f[p] /= total;
        }
    }
    let abundances = fields;

    let mut data = Vec::with_capacity(h * w * spec.bands);
    for b in 0..spec.bands {
        for p in 0..h * w {
            let v: f64 = (0..n).map(|m| abundances[m][p] * endmembers[m][b]).sum();
            data.push(v as f32);
        }
    }
    let cube = HsiCube::new(h, w, spec.bands, data, wavelengths)?;
    Ok(SynthScene {
        cube,
        endmembers,
        abundances,
    })
}

pub fn synth_cube(spec: &SynthSpec) -> Result<HsiCube, DataError> {
    synth_scene(spec).map(|s| s.cube)
}
