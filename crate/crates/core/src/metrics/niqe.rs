//! Natural-scene-statistics quality model and the perceptual index.
//!
//! Each band is normalised into MSCN coefficients, cut into blocks, and
//! every block yields 18 features (a generalised Gaussian fit of the
//! coefficients plus asymmetric fits of four neighbour products) at two
//! scales. A multivariate Gaussian fitted on pristine blocks is compared
//! with the one of the image under test.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::MetricError;
use crate::hsi_data::HsiCube;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NiqeParams {
    /// Block side at full resolution; halved at the coarse scale.
    pub block: usize,
}

impl Default for NiqeParams {
    fn default() -> Self {
        Self { block: 8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiqeModel {
    pub params: NiqeParams,
    pub mean: Vec<f64>,
    /// Row-major `d x d` covariance.
    pub cov: Vec<f64>,
}

/// Supplies the learned perceptual score combined with NIQE.
pub trait MaScorer {
    fn score(&self, sr: &HsiCube) -> f64;
}

/// Fixed score; absolute index values are then only comparable with each
/// other, not with learned-score results.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantMa(pub f64);

impl Default for ConstantMa {
    fn default() -> Self {
        Self(5.0)
    }
}

impl MaScorer for ConstantMa {
    fn score(&self, _sr: &HsiCube) -> f64 {
        self.0
    }
}

const SHAPE_MIN: f64 = 0.2;
const SHAPE_STEP: f64 = 0.001;
const SHAPE_COUNT: usize = 9801;

fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

fn shape_table() -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let shapes: Vec<f64> = (0..SHAPE_COUNT).map(|i| SHAPE_MIN + SHAPE_STEP * i as f64).collect();
        let ratio = shapes
            .iter()
            .map(|&a| gamma(1.0 / a) * gamma(3.0 / a) / gamma(2.0 / a).powi(2))
            .collect();
        (shapes, ratio)
    })
}

fn closest_shape(target: f64, invert: bool) -> f64 {
    let (shapes, ratio) = shape_table();
    let mut best = (f64::INFINITY, shapes[SHAPE_COUNT - 1]);
    for (a, r) in shapes.iter().zip(ratio) {
        let r = if invert { 1.0 / r } else { *r };
        let d = (r - target).abs();
        if d < best.0 {
            best = (d, *a);
        }
    }
    best.1
}

/// Generalised Gaussian: `(shape, variance)`.
fn ggd_fit(x: &[f64]) -> [f64; 2] {
    let n = x.len() as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    let abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if var <= 0.0 || abs <= 0.0 {
        return [SHAPE_MIN + SHAPE_STEP * (SHAPE_COUNT - 1) as f64, 0.0];
    }
    [closest_shape(var / (abs * abs), false), var]
}

/// Asymmetric generalised Gaussian: `(shape, mean, left var, right var)`.
fn aggd_fit(x: &[f64]) -> [f64; 4] {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    for &v in x {
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
    }
    let tiny = 1e-12;
    let sl = (ls / ln.max(1) as f64).sqrt().max(tiny);
    let sr = (rs / rn.max(1) as f64).sqrt().max(tiny);
    let n = x.len() as f64;
    let abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    if sq <= 0.0 {
        return [SHAPE_MIN + SHAPE_STEP * (SHAPE_COUNT - 1) as f64, 0.0, 0.0, 0.0];
    }
    let g = sl / sr;
    let r = abs * abs / sq;
    let big_r = r * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let a = closest_shape(big_r, true);
    let mean = (sr - sl) * gamma(2.0 / a) / gamma(1.0 / a) * (gamma(1.0 / a) / gamma(3.0 / a)).sqrt();
    [a, mean, sl * sl, sr * sr]
}

fn reflect(j: isize, n: usize) -> usize {
    crate::hsi_data::reflect_index(j, n)
}

/// Mean-subtracted contrast-normalised coefficients (7x7 Gaussian,
/// sigma 7/6, stabilising constant 1).
fn mscn(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let sigma = 7.0 / 6.0;
    let k: Vec<f64> = (-3..=3).map(|t: i32| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / s).collect();
    let blur = |src: &[f64]| -> Vec<f64> {
        let mut tmp = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = (0..7).map(|t| k[t] * src[y * w + reflect(x as isize + t as isize - 3, w)]).sum();
            }
        }
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = (0..7).map(|t| k[t] * tmp[reflect(y as isize + t as isize - 3, h) * w + x]).sum();
            }
        }
        out
    };
    let mu = blur(img);
    let sq: Vec<f64> = img.iter().map(|v| v * v).collect();
    let mu2 = blur(&sq);
    (0..h * w)
        .map(|i| {
            let sd = (mu2[i] - mu[i] * mu[i]).abs().sqrt();
            (img[i] - mu[i]) / (sd + 1.0)
        })
        .collect()
}

fn block_features(m: &[f64], w: usize, y0: usize, x0: usize, b: usize, out: &mut Vec<f64>) {
    let at = |y: usize, x: usize| m[y * w + x];
    let mut v = Vec::with_capacity(b * b);
    for y in y0..y0 + b {
        for x in x0..x0 + b {
            v.push(at(y, x));
        }
    }
    out.extend(ggd_fit(&v));
    let shifts: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];
    for (dy, dx) in shifts {
        let mut p = Vec::with_capacity(b * b);
        for y in y0..y0 + b {
            for x in x0..x0 + b {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                if yy >= (y0 + b) as isize || xx < x0 as isize || xx >= (x0 + b) as isize {
                    continue;
                }
                p.push(at(y, x) * at(yy as usize, xx as usize));
            }
        }
        out.extend(aggd_fit(&p));
    }
}

fn half(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (hh, hw) = (h / 2, w / 2);
    let mut out = vec![0.0; hh * hw];
    for y in 0..hh {
        for x in 0..hw {
            out[y * hw + x] = 0.25
                * (img[2 * y * w + 2 * x] + img[2 * y * w + 2 * x + 1] + img[(2 * y + 1) * w + 2 * x] + img[(2 * y + 1) * w + 2 * x + 1]);
        }
    }
    out
}

/// One 36-dimensional feature row per block of a single band.
fn band_features(img: &[f64], h: usize, w: usize, p: NiqeParams) -> Result<Vec<Vec<f64>>, MetricError> {
    let b = p.block;
    if b < 4 || b % 2 != 0 {
        return Err(MetricError::Invalid("NIQE block must be even and at least 4".into()));
    }
    if h < b || w < b {
        return Err(MetricError::Window {
            height: h,
            width: w,
            window: b,
        });
    }
    let fine = mscn(img, h, w);
    let small = half(img, h, w);
    let coarse = mscn(&small, h / 2, w / 2);
    let mut rows = Vec::new();
    for by in 0..h / b {
        for bx in 0..w / b {
            let mut f = Vec::with_capacity(36);
            block_features(&fine, w, by * b, bx * b, b, &mut f);
            block_features(&coarse, w / 2, by * b / 2, bx * b / 2, b / 2, &mut f);
            rows.push(f);
        }
    }
    Ok(rows)
}

fn cube_band(c: &HsiCube, band: usize) -> Vec<f64> {
    c.band(band).iter().map(|v| *v as f64).collect()
}

fn mean_cov(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    cov /= (n - 1.0).max(1.0);
    (mean, cov)
}

/// Fits the pristine model on every block of every band of `pristine`.
pub fn fit_niqe(pristine: &[&HsiCube], params: NiqeParams) -> Result<NiqeModel, MetricError> {
    let mut rows = Vec::new();
    for c in pristine {
        for band in 0..c.bands() {
            rows.extend(band_features(&cube_band(c, band), c.height(), c.width(), params)?);
        }
    }
    if rows.len() < 2 {
        return Err(MetricError::TooFewSamples {
            needed: 2,
            got: rows.len(),
        });
    }
    let (mean, cov) = mean_cov(&rows);
    Ok(NiqeModel {
        params,
        mean: mean.iter().copied().collect(),
        cov: cov.transpose().iter().copied().collect(),
    })
}

/// Band-averaged NIQE distance of `cube` from the pristine model.
pub fn niqe(model: &NiqeModel, cube: &HsiCube) -> Result<f64, MetricError> {
    let d = model.mean.len();
    let mu0 = DVector::from_column_slice(&model.mean);
    let cov0 = DMatrix::from_row_slice(d, d, &model.cov);
    let mut total = 0.0;
    for band in 0..cube.bands() {
        let rows = band_features(&cube_band(cube, band), cube.height(), cube.width(), model.params)?;
        let (mu, cov) = if rows.len() >= 2 {
            mean_cov(&rows)
        } else {
            (DVector::from_column_slice(&rows[0]), DMatrix::zeros(d, d))
        };
        let pooled = (&cov0 + cov) * 0.5;
        let inv = pooled
            .pseudo_inverse(1e-10)
            .map_err(|e| MetricError::Invalid(format!("pseudo-inverse failed: {e}")))?;
        let diff = &mu0 - mu;
        let q = (diff.transpose() * inv * &diff)[(0, 0)];
        total += q.max(0.0).sqrt();
    }
    Ok(total / cube.bands() as f64)
}

/// `((10 - MA) + NIQE) / 2`.
pub fn pi(sr: &HsiCube, ma: &dyn MaScorer, model: &NiqeModel) -> Result<f64, MetricError> {
    Ok(0.5 * ((10.0 - ma.score(sr)) + niqe(model, sr)?))
}
