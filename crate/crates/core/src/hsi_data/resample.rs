//! Separable per-band bicubic resampling (Catmull-Rom, `a = -0.5`).
//!
//! Downsampling widens the kernel by the scale factor (antialiasing), as
//! in common `imresize` implementations. Borders use half-sample symmetric
//! reflection.

use super::{check_scale, DataError, HsiCube};

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn catmull_rom(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Half-sample symmetric index: `-1 -> 0`, `n -> n - 1`.
pub fn reflect(j: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = j.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Normalised taps for each output sample. `ratio` is input samples per
/// output sample.
fn taps(in_len: usize, out_len: usize, ratio: f64) -> Vec<Vec<(usize, f64)>> {
    let stretch = ratio.max(1.0);
    let radius = 2.0 * stretch;
    (0..out_len)
        .map(|i| {
            let centre = (i as f64 + 0.5) * ratio - 0.5;
            let lo = (centre - radius).floor() as isize;
            let hi = (centre + radius).ceil() as isize;
            let mut t: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for j in lo..=hi {
                let w = catmull_rom((j as f64 - centre) / stretch);
                if w == 0.0 {
                    continue;
                }
                total += w;
                let idx = reflect(j, in_len);
                match t.iter_mut().find(|(k, _)| *k == idx) {
                    Some(e) => e.1 += w,
                    None => t.push((idx, w)),
                }
            }
            for e in t.iter_mut() {
                e.1 /= total;
            }
            t
        })
        .collect()
}

fn resample(cube: &HsiCube, out_h: usize, out_w: usize, ratio: f64) -> HsiCube {
    let (h, w) = (cube.height(), cube.width());
    let row_taps = taps(w, out_w, ratio);
    let col_taps = taps(h, out_h, ratio);
    let mut out = Vec::with_capacity(out_h * out_w * cube.bands());
    let mut tmp = vec![0.0f64; h * out_w];
    for b in 0..cube.bands() {
        let band = cube.band(b);
        for y in 0..h {
            for (x, tx) in row_taps.iter().enumerate() {
                tmp[y * out_w + x] = tx.iter().map(|(j, wt)| wt * band[y * w + j] as f64).sum();
            }
        }
        for ty in &col_taps {
            for x in 0..out_w {
                let v: f64 = ty.iter().map(|(j, wt)| wt * tmp[j * out_w + x]).sum();
                out.push(v as f32);
            }
        }
    }
    cube.same_geometry(out_h, out_w, out)
}

/// Bicubic enlargement of `planes` row-major `h x w` planes held in f64,
/// with the same kernel as [`bicubic_upsample`] but no f32 rounding.
pub fn bicubic_upsample_planes(data: &[f64], planes: usize, h: usize, w: usize, scale: usize) -> Vec<f64> {
    assert_eq!(data.len(), planes * h * w, "plane data length");
    let (oh, ow) = (h * scale, w * scale);
    let ratio = 1.0 / scale as f64;
    let row_taps = taps(w, ow, ratio);
    let col_taps = taps(h, oh, ratio);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut tmp = vec![0.0f64; h * ow];
    for plane in data.chunks(h * w) {
        for y in 0..h {
            for (x, tx) in row_taps.iter().enumerate() {
                tmp[y * ow + x] = tx.iter().map(|(j, wt)| wt * plane[y * w + j]).sum();
            }
        }
        for ty in &col_taps {
            for x in 0..ow {
                out.push(ty.iter().map(|(j, wt)| wt * tmp[j * ow + x]).sum());
            }
        }
    }
    out
}

/// Bicubic reduction by `scale` in both spatial axes; bands unchanged.
pub fn bicubic_downsample(cube: &HsiCube, scale: usize) -> Result<HsiCube, DataError> {
    check_scale(scale)?;
    if cube.height() % scale != 0 || cube.width() % scale != 0 {
        return Err(DataError::NotDivisible {
            height: cube.height(),
            width: cube.width(),
            divisor: scale,
        });
    }
    Ok(resample(cube, cube.height() / scale, cube.width() / scale, scale as f64))
}

/// Bicubic enlargement by `scale`, the interpolation baseline.
pub fn bicubic_upsample(cube: &HsiCube, scale: usize) -> Result<HsiCube, DataError> {
    check_scale(scale)?;
    Ok(resample(cube, cube.height() * scale, cube.width() * scale, 1.0 / scale as f64))
}
