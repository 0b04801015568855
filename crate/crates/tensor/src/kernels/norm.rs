//! Per-channel batch normalisation over `(N, C, ...)` tensors.

/// Statistics produced by a training-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased variance, as used for the normalisation itself.
    pub var: Vec<f64>,
    /// Number of elements reduced per channel.
    pub count: usize,
}

impl BatchStats {
    /// Unbiased variance, the estimator that feeds running statistics.
    pub fn unbiased_var(&self) -> Vec<f64> {
        let n = self.count as f64;
        let f = if self.count > 1 { n / (n - 1.0) } else { 1.0 };
        self.var.iter().map(|v| v * f).collect()
    }
}

pub(crate) struct Layout {
    pub n: usize,
    pub c: usize,
    pub inner: usize,
}

impl Layout {
    pub fn of(shape: &[usize]) -> Layout {
        assert!(shape.len() >= 2, "batch norm needs (N, C, ...), got {shape:?}");
        Layout {
            n: shape[0],
            c: shape[1],
            inner: shape[2..].iter().product(),
        }
    }

    fn for_each_in_channel(&self, ch: usize, mut f: impl FnMut(usize)) {
        for s in 0..self.n {
            let base = (s * self.c + ch) * self.inner;
            for i in base..base + self.inner {
                f(i);
            }
        }
    }
}

pub(crate) fn batch_stats(x: &[f64], l: &Layout) -> BatchStats {
    let count = l.n * l.inner;
    let mut mean = vec![0.0; l.c];
    let mut var = vec![0.0; l.c];
    for ch in 0..l.c {
        let mut acc = 0.0;
        l.for_each_in_channel(ch, |i| acc += x[i]);
        let m = acc / count as f64;
        let mut sq = 0.0;
        l.for_each_in_channel(ch, |i| sq += (x[i] - m) * (x[i] - m));
        mean[ch] = m;
        var[ch] = sq / count as f64;
    }
    BatchStats { mean, var, count }
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`; also returns `xhat`.
pub(crate) fn normalize(x: &[f64], l: &Layout, mean: &[f64], var: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    for ch in 0..l.c {
        let inv = 1.0 / (var[ch] + eps).sqrt();
        l.for_each_in_channel(ch, |i| {
            let h = (x[i] - mean[ch]) * inv;
            xhat[i] = h;
            y[i] = gamma[ch] * h + beta[ch];
        });
    }
    (y, xhat)
}

pub(crate) struct NormGrads {
    pub dx: Vec<f64>,
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
}

/// Backward pass. With `batch_mode` the mean and variance are functions of
/// `x`; otherwise they are constants (running statistics).
pub(crate) fn backward(dy: &[f64], xhat: &[f64], l: &Layout, var: &[f64], gamma: &[f64], eps: f64, batch_mode: bool) -> NormGrads {
    let m = (l.n * l.inner) as f64;
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; l.c];
    let mut dbeta = vec![0.0; l.c];
    for ch in 0..l.c {
        let (mut sdy, mut sdyx) = (0.0, 0.0);
        l.for_each_in_channel(ch, |i| {
            sdy += dy[i];
            sdyx += dy[i] * xhat[i];
        });
        dgamma[ch] = sdyx;
        dbeta[ch] = sdy;
        let inv = 1.0 / (var[ch] + eps).sqrt();
        let g = gamma[ch] * inv;
        if batch_mode {
            l.for_each_in_channel(ch, |i| {
                dx[i] = g * (dy[i] - sdy / m - xhat[i] * sdyx / m);
            });
        } else {
            l.for_each_in_channel(ch, |i| dx[i] = g * dy[i]);
        }
    }
    NormGrads { dx, dgamma, dbeta }
}
