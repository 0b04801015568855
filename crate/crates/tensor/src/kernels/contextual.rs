//! Contextual matching loss over a similarity matrix.
//!
//! Given similarities `c[i][j]` (rows `i` over generated positions, columns
//! `j` over target positions):
//!
//! ```text
//! b[i][j] = c[i][j] / (min_k c[i][k] + eps)
//! A[i][j] = softmax_j((1 - b[i][j]) / n_b)
//! loss    = -ln( (1/N) * sum_j max_i A[i][j] )
//! ```

use super::gemm::gemm;

/// Guard added to the row minimum before dividing by it.
pub const MIN_GUARD: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub(crate) struct CxParams {
    pub bands: f64,
    pub eps: f64,
}

/// Loss for one similarity matrix and, when `upstream` is given, its
/// gradient with respect to `c` scaled by `upstream`.
pub(crate) fn loss_from_similarity(
    c: &[f64],
    rows: usize,
    cols: usize,
    n_norm: f64,
    p: CxParams,
    upstream: Option<f64>,
) -> (f64, Option<Vec<f64>>) {
    let mut a = vec![0.0; rows * cols];
    let mut denom = vec![0.0; rows];
    let mut kmin = vec![0usize; rows];
    for i in 0..rows {
        let row = &c[i * cols..(i + 1) * cols];
        let (mut k, mut m) = (0, f64::INFINITY);
        for (j, &v) in row.iter().enumerate() {
            if v < m {
                m = v;
                k = j;
            }
        }
        kmin[i] = k;
        denom[i] = m + p.eps;
        let arow = &mut a[i * cols..(i + 1) * cols];
        let mut zmax = f64::NEG_INFINITY;
        for (dst, &v) in arow.iter_mut().zip(row) {
            *dst = (1.0 - v / denom[i]) / p.bands;
            zmax = zmax.max(*dst);
        }
        let mut total = 0.0;
        for dst in arow.iter_mut() {
            *dst = (*dst - zmax).exp();
            total += *dst;
        }
        for dst in arow.iter_mut() {
            *dst /= total;
        }
    }
    let mut imax = vec![0usize; cols];
    let mut s = 0.0;
    for j in 0..cols {
        let (mut best, mut bi) = (f64::NEG_INFINITY, 0);
        for i in 0..rows {
            if a[i * cols + j] > best {
                best = a[i * cols + j];
                bi = i;
            }
        }
        imax[j] = bi;
        s += best;
    }
    s /= n_norm;
    let loss = -s.ln();
    let Some(g) = upstream else {
        return (loss, None);
    };

    let dm = -g / s / n_norm;
    let mut da = vec![0.0; rows * cols];
    for (j, &i) in imax.iter().enumerate() {
        da[i * cols + j] += dm;
    }
    let mut dc = vec![0.0; rows * cols];
    for i in 0..rows {
        let arow = &a[i * cols..(i + 1) * cols];
        let darow = &da[i * cols..(i + 1) * cols];
        let dot: f64 = arow.iter().zip(darow).map(|(x, y)| x * y).sum();
        let crow = &c[i * cols..(i + 1) * cols];
        let dcrow = &mut dc[i * cols..(i + 1) * cols];
        let mut dd = 0.0;
        for j in 0..cols {
            let dz = arow[j] * (darow[j] - dot);
            let db = -dz / p.bands;
            dcrow[j] = db / denom[i];
            dd -= db * crow[j] / (denom[i] * denom[i]);
        }
        dcrow[kmin[i]] += dd;
    }
    (loss, Some(dc))
}

/// Column-normalises a `(C x P)` block in place; returns the column norms.
fn normalize_columns(x: &mut [f64], ch: usize, pos: usize) -> Vec<f64> {
    let mut norms = vec![0.0; pos];
    for c in 0..ch {
        for p in 0..pos {
            norms[p] += x[c * pos + p] * x[c * pos + p];
        }
    }
    for n in norms.iter_mut() {
        *n = n.sqrt();
    }
    for c in 0..ch {
        for p in 0..pos {
            x[c * pos + p] = if norms[p] > 0.0 { x[c * pos + p] / norms[p] } else { 0.0 };
        }
    }
    norms
}

/// `dx = (dxhat - xhat * <xhat, dxhat>) / |x|`, column-wise.
fn normalize_columns_backward(xhat: &[f64], norms: &[f64], dxhat: &[f64], ch: usize, pos: usize) -> Vec<f64> {
    let mut dots = vec![0.0; pos];
    for c in 0..ch {
        for p in 0..pos {
            dots[p] += xhat[c * pos + p] * dxhat[c * pos + p];
        }
    }
    let mut dx = vec![0.0; ch * pos];
    for c in 0..ch {
        for p in 0..pos {
            if norms[p] > 0.0 {
                let i = c * pos + p;
                dx[i] = (dxhat[i] - xhat[i] * dots[p]) / norms[p];
            }
        }
    }
    dx
}

pub(crate) struct SampleGrads {
    pub dsr: Vec<f64>,
    pub dhr: Vec<f64>,
}

/// Template mode for one sample: both inputs are `(C x P)` blocks and the
/// similarity is the cosine between every generated/target position pair.
pub(crate) fn template_sample(
    sr: &[f64],
    hr: &[f64],
    ch: usize,
    pos: usize,
    p: CxParams,
    upstream: Option<f64>,
) -> (f64, Option<SampleGrads>) {
    let mut xs = sr.to_vec();
    let mut ys = hr.to_vec();
    let nx = normalize_columns(&mut xs, ch, pos);
    let ny = normalize_columns(&mut ys, ch, pos);
    let mut c = vec![0.0; pos * pos];
    gemm(pos, ch, pos, 1.0, &xs, true, &ys, false, 0.0, &mut c);
    let (loss, dc) = loss_from_similarity(&c, pos, pos, pos as f64, p, upstream);
    let Some(dc) = dc else {
        return (loss, None);
    };
    let mut dxhat = vec![0.0; ch * pos];
    gemm(ch, pos, pos, 1.0, &ys, false, &dc, true, 0.0, &mut dxhat);
    let mut dyhat = vec![0.0; ch * pos];
    gemm(ch, pos, pos, 1.0, &xs, false, &dc, false, 0.0, &mut dyhat);
    let dsr = normalize_columns_backward(&xs, &nx, &dxhat, ch, pos);
    let dhr = normalize_columns_backward(&ys, &ny, &dyhat, ch, pos);
    (loss, Some(SampleGrads { dsr, dhr }))
}

/// Position-wise mode for one sample: the similarity at each grid position
/// is the cosine between the feature difference `sr - hr` and the image
/// difference `lr_up - target`, all `(C x rows*cols)` blocks.
#[allow(clippy::too_many_arguments)]
pub(crate) fn positional_sample(
    sr: &[f64],
    hr: &[f64],
    lr_up: &[f64],
    target: &[f64],
    ch: usize,
    rows: usize,
    cols: usize,
    p: CxParams,
    upstream: Option<f64>,
) -> (f64, Option<SampleGrads>) {
    let pos = rows * cols;
    let mut u: Vec<f64> = sr.iter().zip(hr).map(|(a, b)| a - b).collect();
    let mut v: Vec<f64> = lr_up.iter().zip(target).map(|(a, b)| a - b).collect();
    let nu = normalize_columns(&mut u, ch, pos);
    normalize_columns(&mut v, ch, pos);
    let mut c = vec![0.0; pos];
    for k in 0..ch {
        for q in 0..pos {
            c[q] += u[k * pos + q] * v[k * pos + q];
        }
    }
    let (loss, dc) = loss_from_similarity(&c, rows, cols, pos as f64, p, upstream);
    let Some(dc) = dc else {
        return (loss, None);
    };
    let mut duhat = vec![0.0; ch * pos];
    for k in 0..ch {
        for q in 0..pos {
            duhat[k * pos + q] = dc[q] * v[k * pos + q];
        }
    }
    let dsr = normalize_columns_backward(&u, &nu, &duhat, ch, pos);
    let dhr = dsr.iter().map(|g| -g).collect();
    (loss, Some(SampleGrads { dsr, dhr }))
}
