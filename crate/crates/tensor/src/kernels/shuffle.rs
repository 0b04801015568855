//! Sub-pixel rearrangement and nearest-neighbour resizing on
//! `(N, C, D, H, W)` tensors. Both act only on the two trailing axes.

use crate::{ShapeError, Tensor};

fn dims5(t: &Tensor) -> Result<[usize; 5], ShapeError> {
    <[usize; 5]>::try_from(t.shape()).map_err(|_| ShapeError::Rank {
        expected: 5,
        shape: t.shape().to_vec(),
    })
}

/// `(N, C*k*k, D, H, W) -> (N, C, D, H*k, W*k)`.
///
/// Output pixel `(h*k + i, w*k + j)` of channel `c` takes input channel
/// `c*k*k + i*k + j` at `(h, w)`. Pure data movement.
pub fn pixel_shuffle(t: &Tensor, k: usize) -> Result<Tensor, ShapeError> {
    let [n, cin, d, h, w] = dims5(t)?;
    let kk = k * k;
    if k == 0 || cin % kk != 0 {
        return Err(ShapeError::Divisibility {
            what: "channels",
            value: cin,
            divisor: kk,
        });
    }
    let c = cin / kk;
    let (ho, wo) = (h * k, w * k);
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for s in 0..n {
        for ch in 0..c {
            for i in 0..k {
                for j in 0..k {
                    let ic = ch * kk + i * k + j;
                    for z in 0..d {
                        let in_base = ((s * cin + ic) * d + z) * h * w;
                        let out_base = ((s * c + ch) * d + z) * ho * wo;
                        for y in 0..h {
                            let orow = out_base + (y * k + i) * wo + j;
                            let irow = in_base + y * w;
                            for x in 0..w {
                                out[orow + x * k] = src[irow + x];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, c, d, ho, wo], out)
}

/// Exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(t: &Tensor, k: usize) -> Result<Tensor, ShapeError> {
    let [n, c, d, ho, wo] = dims5(t)?;
    if k == 0 || ho % k != 0 || wo % k != 0 {
        return Err(ShapeError::Divisibility {
            what: "spatial extent",
            value: ho.min(wo),
            divisor: k,
        });
    }
    let kk = k * k;
    let (h, w) = (ho / k, wo / k);
    let cin = c * kk;
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for s in 0..n {
        for ch in 0..c {
            for i in 0..k {
                for j in 0..k {
                    let ic = ch * kk + i * k + j;
                    for z in 0..d {
                        let in_base = ((s * cin + ic) * d + z) * h * w;
                        let out_base = ((s * c + ch) * d + z) * ho * wo;
                        for y in 0..h {
                            let orow = out_base + (y * k + i) * wo + j;
                            let irow = in_base + y * w;
                            for x in 0..w {
                                out[irow + x] = src[orow + x * k];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, cin, d, h, w], out)
}

/// Replicates every pixel into a `k x k` block.
pub fn upsample_nearest(t: &Tensor, k: usize) -> Result<Tensor, ShapeError> {
    let [n, c, d, h, w] = dims5(t)?;
    let (ho, wo) = (h * k, w * k);
    let src = t.data();
    let mut out = vec![0.0; n * c * d * ho * wo];
    for plane in 0..n * c * d {
        let ib = plane * h * w;
        let ob = plane * ho * wo;
        for y in 0..ho {
            for x in 0..wo {
                out[ob + y * wo + x] = src[ib + (y / k) * w + x / k];
            }
        }
    }
    Tensor::new(&[n, c, d, ho, wo], out)
}

/// Adjoint of [`upsample_nearest`]: sums each `k x k` block.
pub fn upsample_nearest_adjoint(t: &Tensor, k: usize) -> Result<Tensor, ShapeError> {
    let [n, c, d, ho, wo] = dims5(t)?;
    let (h, w) = (ho / k, wo / k);
    let src = t.data();
    let mut out = vec![0.0; n * c * d * h * w];
    for plane in 0..n * c * d {
        let ib = plane * ho * wo;
        let ob = plane * h * w;
        for y in 0..ho {
            for x in 0..wo {
                out[ob + (y / k) * w + x / k] += src[ib + y * wo + x];
            }
        }
    }
    Tensor::new(&[n, c, d, h, w], out)
}
