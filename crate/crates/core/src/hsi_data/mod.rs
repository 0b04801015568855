//! Hyperspectral cubes, synthetic scenes and the degradation pipeline.

mod dataset;
mod io;
mod noise;
mod resample;
mod synth;

use std::path::PathBuf;

pub use dataset::{crop_pairs, split_dataset, PatchPair, PatchPairDataset, Split};
pub use io::{cube_paths, load_cube, save_cube};
pub use noise::{add_noise_snr, band_snr_db};
pub use resample::{bicubic_downsample, bicubic_upsample, bicubic_upsample_planes, catmull_rom, reflect as reflect_index};
pub use synth::{synth_cube, synth_scene, SynthScene, SynthSpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header: {0}")]
    Header(String),
    #[error("payload holds {actual} bytes, header implies {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("data length {actual} does not match {height}x{width}x{bands}")]
    Shape {
        height: usize,
        width: usize,
        bands: usize,
        actual: usize,
    },
    #[error("wavelengths must be strictly increasing with one entry per band")]
    Wavelengths,
    #[error("cube contains non-finite values")]
    NonFinite,
    #[error("unsupported scale factor {0}; expected 2, 4 or 8")]
    Scale(usize),
    #[error("{height}x{width} is not divisible by {divisor}")]
    NotDivisible { height: usize, width: usize, divisor: usize },
    #[error("snr must be positive and below 200 dB or infinite, got {0}")]
    Snr(f64),
    #[error("patch {patch} does not fit into {height}x{width}")]
    PatchTooLarge { patch: usize, height: usize, width: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// A radiance cube, band-sequential: `data[b * height * width + y * width + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f32>,
    wavelengths: Vec<f64>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>, wavelengths: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != height * width * bands {
            return Err(DataError::Shape {
                height,
                width,
                bands,
                actual: data.len(),
            });
        }
        if wavelengths.len() != bands || wavelengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Wavelengths);
        }
        if wavelengths.iter().any(|w| !w.is_finite()) || data.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
            wavelengths,
        })
    }

    /// Cube with evenly spaced wavelengths over 450..950 nm.
    pub fn with_default_wavelengths(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self, DataError> {
        Self::new(height, width, bands, data, default_wavelengths(bands))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> f32 {
        self.data[(b * self.height + y) * self.width + x]
    }

    /// Spectrum of pixel `(y, x)`.
    pub fn spectrum(&self, y: usize, x: usize) -> Vec<f32> {
        (0..self.bands).map(|b| self.get(b, y, x)).collect()
    }

    /// Keeps only band `b` (used to check per-band independence).
    pub fn select_band(&self, b: usize) -> HsiCube {
        HsiCube {
            height: self.height,
            width: self.width,
            bands: 1,
            data: self.band(b).to_vec(),
            wavelengths: vec![self.wavelengths[b]],
        }
    }

    /// Spatial crop `[y0, y0 + h) x [x0, x0 + w)` over all bands.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> HsiCube {
        assert!(y0 + h <= self.height && x0 + w <= self.width, "crop out of bounds");
        let mut data = Vec::with_capacity(h * w * self.bands);
        for b in 0..self.bands {
            for y in y0..y0 + h {
                let row = (b * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        HsiCube {
            height: h,
            width: w,
            bands: self.bands,
            data,
            wavelengths: self.wavelengths.clone(),
        }
    }

    /// Same geometry and wavelengths, new values (rounded to f32).
    pub fn with_values(&self, values: impl IntoIterator<Item = f64>) -> Result<HsiCube, DataError> {
        let data: Vec<f32> = values.into_iter().map(|v| v as f32).collect();
        HsiCube::new(self.height, self.width, self.bands, data, self.wavelengths.clone())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| *v as f64).collect()
    }

    fn same_geometry(&self, height: usize, width: usize, data: Vec<f32>) -> HsiCube {
        debug_assert_eq!(data.len(), height * width * self.bands);
        HsiCube {
            height,
            width,
            bands: self.bands,
            data,
            wavelengths: self.wavelengths.clone(),
        }
    }
}

pub fn default_wavelengths(bands: usize) -> Vec<f64> {
    if bands == 1 {
        return vec![700.0];
    }
    let step = 500.0 / (bands - 1) as f64;
    (0..bands).map(|i| 450.0 + step * i as f64).collect()
}

pub(crate) fn check_scale(scale: usize) -> Result<(), DataError> {
    match scale {
        2 | 4 | 8 => Ok(()),
        s => Err(DataError::Scale(s)),
    }
}
