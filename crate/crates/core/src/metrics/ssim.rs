use super::{check_pair, MetricError};
use crate::hsi_data::HsiCube;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let r = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let t = i as f64 - r;
        *v = (-t * t / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter keeping only positions where the window fits.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..WINDOW).map(|t| k[t] * img[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|t| k[t] * tmp[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Single-band SSIM, Gaussian window 11, sigma 1.5, mean over the valid
/// region.
pub fn ssim_band(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64, MetricError> {
    if h < WINDOW || w < WINDOW {
        return Err(MetricError::Window {
            height: h,
            width: w,
            window: WINDOW,
        });
    }
    let k = kernel();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let aa = filter_valid(&prod(a, a), h, w, &k);
    let bb = filter_valid(&prod(b, b), h, w, &k);
    let ab = filter_valid(&prod(a, b), h, w, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Band-averaged SSIM.
pub fn ssim(hr: &HsiCube, sr: &HsiCube) -> Result<f64, MetricError> {
    check_pair(hr, sr)?;
    let mut total = 0.0;
    for band in 0..hr.bands() {
        let a: Vec<f64> = hr.band(band).iter().map(|v| *v as f64).collect();
        let b: Vec<f64> = sr.band(band).iter().map(|v| *v as f64).collect();
        total += ssim_band(&a, &b, hr.height(), hr.width())?;
    }
    Ok(total / hr.bands() as f64)
}
