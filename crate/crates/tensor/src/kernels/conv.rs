//! 3-D convolution over `(N, C, D, H, W)` tensors via im2col + GEMM.

use super::gemm::gemm;

/// Stride and zero padding of a 3-D convolution, per `(depth, height, width)`.
///
/// Padding may be asymmetric so that even kernel extents can still keep
/// the output extent equal to the input extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: [usize; 3],
    pub pad_lo: [usize; 3],
    pub pad_hi: [usize; 3],
}

impl ConvGeom {
    pub fn new(stride: [usize; 3], pad_lo: [usize; 3], pad_hi: [usize; 3]) -> Self {
        Self { stride, pad_lo, pad_hi }
    }

    /// Unit stride with "same" padding for the given kernel extents.
    pub fn same(kernel: [usize; 3]) -> Self {
        let lo = kernel.map(|k| (k - 1) / 2);
        let hi = kernel.map(|k| k - 1 - (k - 1) / 2);
        Self::new([1, 1, 1], lo, hi)
    }

    /// Output extents for an input of extents `input` and kernel `kernel`,
    /// or `None` when the kernel does not fit.
    pub fn output_dims(&self, input: [usize; 3], kernel: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + self.pad_lo[a] + self.pad_hi[a];
            if padded < kernel[a] || self.stride[a] == 0 {
                return None;
            }
            out[a] = (padded - kernel[a]) / self.stride[a] + 1;
        }
        Some(out)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub ci: usize,
    pub co: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub output: [usize; 3],
}

impl ConvDims {
    pub fn from_shapes(x: &[usize], w: &[usize], geom: &ConvGeom) -> ConvDims {
        assert_eq!(x.len(), 5, "conv3d input must be (N, C, D, H, W), got {x:?}");
        assert_eq!(w.len(), 5, "conv3d weight must be (Co, Ci, kD, kH, kW), got {w:?}");
        assert_eq!(x[1], w[1], "conv3d channel mismatch: input {x:?}, weight {w:?}");
        let input = [x[2], x[3], x[4]];
        let kernel = [w[2], w[3], w[4]];
        let output = geom
            .output_dims(input, kernel)
            .unwrap_or_else(|| panic!("conv3d kernel {kernel:?} larger than padded input {input:?}"));
        ConvDims {
            n: x[0],
            ci: x[1],
            co: w[0],
            input,
            kernel,
            output,
        }
    }

    fn k(&self) -> usize {
        self.ci * self.kernel.iter().product::<usize>()
    }

    fn p(&self) -> usize {
        self.output.iter().product()
    }

    fn in_len(&self) -> usize {
        self.ci * self.input.iter().product::<usize>()
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.co, self.output[0], self.output[1], self.output[2]]
    }
}

fn im2col(x: &[f64], d: &ConvDims, g: &ConvGeom, cols: &mut [f64]) {
    let [id, ih, iw] = d.input;
    let [kd, kh, kw] = d.kernel;
    let [od, oh, ow] = d.output;
    let p_len = od * oh * ow;
    let mut row = 0;
    for ci in 0..d.ci {
        for a in 0..kd {
            for b in 0..kh {
                for c in 0..kw {
                    let dst = &mut cols[row * p_len..(row + 1) * p_len];
                    let mut p = 0;
                    for z in 0..od {
                        let iz = (z * g.stride[0] + a) as isize - g.pad_lo[0] as isize;
                        if iz < 0 || iz >= id as isize {
                            dst[p..p + oh * ow].fill(0.0);
                            p += oh * ow;
                            continue;
                        }
                        for y in 0..oh {
                            let iy = (y * g.stride[1] + b) as isize - g.pad_lo[1] as isize;
                            if iy < 0 || iy >= ih as isize {
                                dst[p..p + ow].fill(0.0);
                                p += ow;
                                continue;
                            }
                            let base = ((ci * id + iz as usize) * ih + iy as usize) * iw;
                            for xo in 0..ow {
                                let ix = (xo * g.stride[2] + c) as isize - g.pad_lo[2] as isize;
                                dst[p + xo] = if ix >= 0 && ix < iw as isize { x[base + ix as usize] } else { 0.0 };
                            }
                            p += ow;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im(cols: &[f64], d: &ConvDims, g: &ConvGeom, dx: &mut [f64]) {
    let [id, ih, iw] = d.input;
    let [kd, kh, kw] = d.kernel;
    let [od, oh, ow] = d.output;
    let p_len = od * oh * ow;
    let mut row = 0;
    for ci in 0..d.ci {
        for a in 0..kd {
            for b in 0..kh {
                for c in 0..kw {
                    let src = &cols[row * p_len..(row + 1) * p_len];
                    let mut p = 0;
                    for z in 0..od {
                        let iz = (z * g.stride[0] + a) as isize - g.pad_lo[0] as isize;
                        if iz < 0 || iz >= id as isize {
                            p += oh * ow;
                            continue;
                        }
                        for y in 0..oh {
                            let iy = (y * g.stride[1] + b) as isize - g.pad_lo[1] as isize;
                            if iy < 0 || iy >= ih as isize {
                                p += ow;
                                continue;
                            }
                            let base = ((ci * id + iz as usize) * ih + iy as usize) * iw;
                            for xo in 0..ow {
                                let ix = (xo * g.stride[2] + c) as isize - g.pad_lo[2] as isize;
                                if ix >= 0 && ix < iw as isize {
                                    dx[base + ix as usize] += src[p + xo];
                                }
                            }
                            p += ow;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

pub(crate) fn forward(x: &[f64], w: &[f64], d: &ConvDims, g: &ConvGeom) -> Vec<f64> {
    let (k, p) = (d.k(), d.p());
    let mut out = vec![0.0; d.n * d.co * p];
    let mut cols = vec![0.0; k * p];
    for s in 0..d.n {
        let xs = &x[s * d.in_len()..(s + 1) * d.in_len()];
        im2col(xs, d, g, &mut cols);
        gemm(
            d.co,
            k,
            p,
            1.0,
            w,
            false,
            &cols,
            false,
            0.0,
            &mut out[s * d.co * p..(s + 1) * d.co * p],
        );
    }
    out
}

/// Gradients with respect to the input and the weight; either may be skipped.
pub(crate) fn backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    d: &ConvDims,
    g: &ConvGeom,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (k, p) = (d.k(), d.p());
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut dw = want_dw.then(|| vec![0.0; w.len()]);
    let mut cols = vec![0.0; k * p];
    for s in 0..d.n {
        let dys = &dy[s * d.co * p..(s + 1) * d.co * p];
        if let Some(dw) = dw.as_mut() {
            let xs = &x[s * d.in_len()..(s + 1) * d.in_len()];
            im2col(xs, d, g, &mut cols);
            // dW (Co x K) += dY (Co x P) * cols^T (P x K)
            gemm(d.co, p, k, 1.0, dys, false, &cols, true, 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols (K x P) = W^T (K x Co) * dY (Co x P)
            gemm(k, d.co, p, 1.0, w, true, dys, false, 0.0, &mut cols);
            col2im(&cols, d, g, &mut dx[s * d.in_len()..(s + 1) * d.in_len()]);
        }
    }
    (dx, dw)
}
