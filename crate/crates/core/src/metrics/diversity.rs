//! Inception score and Frechet distance over feature vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MetricError;

/// Anything that maps a feature vector to a class probability vector.
pub trait ProbClassifier {
    fn classes(&self) -> usize;
    fn probs(&self, features: &[f64]) -> Vec<f64>;
}

/// Self-labelled classifier: k-means centroids over reference features and
/// a softmax over negative squared distances.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansClassifier {
    pub centroids: Vec<Vec<f64>>,
    /// Softmax temperature, the mean squared distance of the fitting
    /// samples to their nearest centroid.
    pub temperature: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(c: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, m) in c.iter().enumerate() {
        let d = dist2(m, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

impl KMeansClassifier {
    /// Lloyd iterations from a k-means++ seeding; deterministic per seed.
    pub fn fit(features: &[Vec<f64>], k: usize, seed: u64) -> Result<Self, MetricError> {
        if k == 0 {
            return Err(MetricError::Invalid("k must be positive".into()));
        }
        if features.len() < k {
            return Err(MetricError::TooFewSamples {
                needed: k,
                got: features.len(),
            });
        }
        let d = features[0].len();
        if let Some(f) = features.iter().find(|f| f.len() != d) {
            return Err(MetricError::Dimension(d, f.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids = vec![features[rng.random_range(0..features.len())].clone()];
        while centroids.len() < k {
            let w: Vec<f64> = features.iter().map(|f| nearest(&centroids, f).1).collect();
            let total: f64 = w.iter().sum();
            let pick = if total > 0.0 {
                let mut r = rng.random::<f64>() * total;
                let mut idx = w.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    if r < *wi {
                        idx = i;
                        break;
                    }
                    r -= wi;
                }
                idx
            } else {
                rng.random_range(0..features.len())
            };
            centroids.push(features[pick].clone());
        }
        for _ in 0..100 {
            let mut sums = vec![vec![0.0; d]; k];
            let mut counts = vec![0usize; k];
            for f in features {
                let (i, _) = nearest(&centroids, f);
                counts[i] += 1;
                for (s, v) in sums[i].iter_mut().zip(f) {
                    *s += v;
                }
            }
            let mut moved = false;
            for i in 0..k {
                if counts[i] == 0 {
                    continue;
                }
                let m: Vec<f64> = sums[i].iter().map(|s| s / counts[i] as f64).collect();
                if m != centroids[i] {
                    moved = true;
                    centroids[i] = m;
                }
            }
            if !moved {
                break;
            }
        }
        let mean_d2 = features.iter().map(|f| nearest(&centroids, f).1).sum::<f64>() / features.len() as f64;
        Ok(Self {
            centroids,
            temperature: if mean_d2 > 0.0 { mean_d2 } else { 1.0 },
        })
    }
}

impl ProbClassifier for KMeansClassifier {
    fn classes(&self) -> usize {
        self.centroids.len()
    }

    fn probs(&self, features: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self.centroids.iter().map(|c| -dist2(c, features) / self.temperature).collect();
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }
}

/// `exp(mean_x KL(p(y|x) || p(y)))` from per-sample probability vectors.
pub fn inception_score_from_probs(probs: &[Vec<f64>]) -> Result<f64, MetricError> {
    let Some(first) = probs.first() else {
        return Err(MetricError::Empty);
    };
    let c = first.len();
    if let Some(p) = probs.iter().find(|p| p.len() != c) {
        return Err(MetricError::Dimension(c, p.len()));
    }
    let n = probs.len() as f64;
    let mut marginal = vec![0.0; c];
    for p in probs {
        for (m, v) in marginal.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut kl = 0.0;
    for p in probs {
        for (pi, mi) in p.iter().zip(&marginal) {
            if *pi > 0.0 {
                kl += pi * (pi / mi).ln();
            }
        }
    }
    Ok((kl / n).exp())
}

pub fn inception_score<C: ProbClassifier + ?Sized>(classifier: &C, samples: &[Vec<f64>]) -> Result<f64, MetricError> {
    let probs: Vec<Vec<f64>> = samples.iter().map(|s| classifier.probs(s)).collect();
    inception_score_from_probs(&probs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fid {
    pub value: f64,
    /// The matrix root needed the `1e-6 I` ridge to stay finite.
    pub regularized: bool,
}

fn moments(x: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in x {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for r in x {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    (mean, cov / (n - 1.0))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * s * e.eigenvectors.transpose()
}

/// `Tr((C1 C2)^(1/2))`, evaluated as the trace of the root of the
/// symmetric `C1^(1/2) C2 C1^(1/2)`, which has the same eigenvalues.
fn trace_sqrt_product(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> f64 {
    let r = psd_sqrt(c1);
    let inner = &r * c2 * &r;
    let e = SymmetricEigen::new((&inner + inner.transpose()) * 0.5);
    e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// `|m1 - m2|^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2))` with unbiased covariances.
pub fn fid(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<Fid, MetricError> {
    for side in [real, generated] {
        if side.len() < 2 {
            return Err(MetricError::TooFewSamples {
                needed: 2,
                got: side.len(),
            });
        }
    }
    let d = real[0].len();
    for f in real.iter().chain(generated) {
        if f.len() != d {
            return Err(MetricError::Dimension(d, f.len()));
        }
    }
    let (m1, c1) = moments(real);
    let (m2, c2) = moments(generated);
    let mean_term = (&m1 - &m2).norm_squared();
    let mut regularized = false;
    let mut tr = trace_sqrt_product(&c1, &c2);
    if !tr.is_finite() {
        regularized = true;
        let ridge = DMatrix::identity(d, d) * 1e-6;
        tr = trace_sqrt_product(&(&c1 + &ridge), &(&c2 + &ridge));
    }
    let value = mean_term + c1.trace() + c2.trace() - 2.0 * tr;
    if !value.is_finite() {
        return Err(MetricError::Invalid("FID is not finite".into()));
    }
    Ok(Fid {
        value: value.max(0.0),
        regularized,
    })
}
