use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, HsiCube};

/// Adds white Gaussian noise to every band so that
/// `10 log10(P_signal / P_noise) = snr_db`, with `P` the mean square of the
/// band. An infinite `snr_db` returns the cube unchanged.
pub fn add_noise_snr(cube: &HsiCube, snr_db: f64, seed: u64) -> Result<HsiCube, DataError> {
    if snr_db == f64::INFINITY {
        return Ok(cube.clone());
    }
    if !(snr_db > 0.0 && snr_db < 200.0) {
        return Err(DataError::Snr(snr_db));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cube.data().len());
    for b in 0..cube.bands() {
        let band = cube.band(b);
        let power = band.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / band.len() as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        out.extend(band.iter().map(|v| (*v as f64 + normal.sample(&mut rng)) as f32));
    }
    HsiCube::new(cube.height(), cube.width(), cube.bands(), out, cube.wavelengths().to_vec())
}

/// Empirical per-band SNR of `noisy` against `clean`, in dB.
pub fn band_snr_db(clean: &HsiCube, noisy: &HsiCube) -> Vec<f64> {
    (0..clean.bands())
        .map(|b| {
            let (c, n) = (clean.band(b), noisy.band(b));
            let sig: f64 = c.iter().map(|v| (*v as f64).powi(2)).sum();
            let err: f64 = c.iter().zip(n).map(|(a, b)| (*b as f64 - *a as f64).powi(2)).sum();
            10.0 * (sig / err).log10()
        })
        .collect()
}
