use hsisr_core::hsi_data::*;
use hsisr_core::metrics::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn cube(h: usize, w: usize, b: usize, data: Vec<f32>) -> HsiCube {
    HsiCube::with_default_wavelengths(h, w, b, data).unwrap()
}

fn random_cube(h: usize, w: usize, b: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cube(h, w, b, (0..h * w * b).map(|_| rng.random_range(0.0..255.0f32)).collect())
}

/// Same formula the frozen reference values were computed on.
fn wave_cube() -> HsiCube {
    let (b, h, w) = (3, 32, 32);
    let mut d = Vec::with_capacity(b * h * w);
    for k in 0..b {
        for y in 0..h {
            for x in 0..w {
                let (xf, yf, kf) = (x as f64, y as f64, k as f64);
                let v = 127.5 + 100.0 * (0.37 * xf + 0.23 * yf * (kf + 1.0)).sin() + 20.0 * (1.3 * xf * yf / 7.0 + kf).cos();
                d.push(v as f32);
            }
        }
    }
    cube(h, w, b, d)
}

fn map(c: &HsiCube, f: impl Fn(f32) -> f32) -> HsiCube {
    cube(c.height(), c.width(), c.bands(), c.data().iter().map(|v| f(*v)).collect())
}

fn naive_mse(a: &HsiCube, b: &HsiCube) -> f64 {
    let mut s = 0.0;
    for k in 0..a.bands() {
        for y in 0..a.height() {
            for x in 0..a.width() {
                let d = a.get(k, y, x) as f64 - b.get(k, y, x) as f64;
                s += d * d;
            }
        }
    }
    s / (a.bands() * a.height() * a.width()) as f64
}

#[test]
fn psnr_identity_is_infinite() {
    let a = random_cube(8, 8, 4, 1);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
}

#[test]
fn psnr_of_constant_offset() {
    // integer radiances keep the offset exact in f32
    let a = map(&random_cube(8, 8, 4, 2), |v| (v * 0.5).round());
    let b = map(&a, |v| v + 16.0);
    let expected = 10.0 * (65025.0f64 / 256.0).log10();
    assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-9);
    assert!((expected - 24.048).abs() < 5e-4);
}

#[test]
fn psnr_matches_direct_summation() {
    for seed in 0..5 {
        let a = random_cube(9, 7, 5, seed);
        let b = random_cube(9, 7, 5, seed + 100);
        let oracle = 10.0 * (255.0 * 255.0 / naive_mse(&a, &b)).log10();
        assert!((psnr(&a, &b).unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn psnr_decreases_with_nested_perturbations() {
    let a = random_cube(8, 8, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise: Vec<f32> = (0..a.data().len()).map(|_| rng.random_range(-1.0..1.0f32)).collect();
    let mut last = f64::INFINITY;
    for amp in [0.5f32, 1.0, 2.0, 4.0, 8.0] {
        let b = cube(8, 8, 3, a.data().iter().zip(&noise).map(|(v, n)| v + amp * n).collect());
        let p = psnr(&a, &b).unwrap();
        assert!(p < last);
        last = p;
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    let a = random_cube(8, 8, 3, 1);
    let b = random_cube(8, 8, 4, 1);
    assert!(matches!(psnr(&a, &b), Err(MetricError::Shape { .. })));
    assert!(sre(&a, &b).is_err());
    assert!(ssim(&a, &b).is_err());
    assert!(sam(&a, &b).is_err());
}

#[test]
fn sre_cases() {
    let a = map(&random_cube(6, 5, 4, 5), f32::round);
    assert_eq!(sre(&a, &a).unwrap(), 0.0);
    let shifted = map(&a, |v| v + 3.0);
    assert!((sre(&a, &shifted).unwrap() - 3.0).abs() < 1e-9);
    let b = random_cube(6, 5, 4, 6);
    let mut acc = 0.0;
    for k in 0..a.bands() {
        let mut m = 0.0;
        for (x, y) in a.band(k).iter().zip(b.band(k)) {
            m += (*x as f64 - *y as f64).powi(2);
        }
        acc += m / 30.0;
    }
    let oracle = (acc / 4.0).sqrt();
    assert!((sre(&a, &b).unwrap() - oracle).abs() < 1e-9);
}

#[test]
fn ssim_of_identical_cubes_is_exactly_one() {
    let a = wave_cube();
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
}

#[test]
fn ssim_matches_frozen_reference_values() {
    // scikit-image structural_similarity(gaussian_weights=True, sigma=1.5,
    // use_sample_covariance=False, data_range=255), averaged over bands
    let hr = wave_cube();
    let inverted = map(&hr, |v| 255.0 - v);
    let stretched = map(&hr, |v| 0.5 * v + 64.0);
    let inv = ssim(&hr, &inverted).unwrap();
    let st = ssim(&hr, &stretched).unwrap();
    assert!((inv - -0.7531182015269685).abs() < 1e-4, "{inv}");
    assert!((st - 0.782700998606019).abs() < 1e-4, "{st}");
    assert!(inv < 0.2);
    assert!(st < 1.0);
}

/// Every window summed directly in two dimensions, no separability.
fn ssim_oracle(a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
    let k: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let ks: f64 = k.iter().sum::<f64>().powi(2);
    let (c1, c2) = (2.55f64 * 2.55, 7.65f64 * 7.65);
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = k[i] * k[j] / ks;
                    let p = a[(y + i) * w + x + j] as f64;
                    let q = b[(y + i) * w + x + j] as f64;
                    ma += wt * p;
                    mb += wt * q;
                    saa += wt * p * p;
                    sbb += wt * q * q;
                    sab += wt * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_windowed_loop_oracle() {
    let a = random_cube(15, 13, 2, 9);
    let b = map(&a, |v| (v * 0.8 + 20.0).min(255.0));
    let c = random_cube(15, 13, 2, 10);
    for other in [&b, &c] {
        let oracle: f64 = (0..2).map(|k| ssim_oracle(a.band(k), other.band(k), 15, 13)).sum::<f64>() / 2.0;
        assert!((ssim(&a, other).unwrap() - oracle).abs() < 1e-10);
    }
}

#[test]
fn ssim_rejects_patches_smaller_than_window() {
    let a = random_cube(10, 20, 1, 1);
    assert!(matches!(ssim(&a, &a), Err(MetricError::Window { .. })));
}

#[test]
fn sam_cases() {
    let a = random_cube(4, 4, 6, 11);
    assert_eq!(sam(&a, &a).unwrap(), 0.0);
    assert!(sam(&a, &map(&a, |v| 2.0 * v)).unwrap().abs() < 1e-9);
    // disjoint band supports
    let mut p = vec![0.0f32; 4 * 4 * 6];
    let mut q = vec![0.0f32; 4 * 4 * 6];
    for i in 0..16 {
        for k in 0..3 {
            p[k * 16 + i] = 10.0 + k as f32;
            q[(k + 3) * 16 + i] = 5.0 + i as f32;
        }
    }
    let (p, q) = (cube(4, 4, 6, p), cube(4, 4, 6, q));
    assert!((sam(&p, &q).unwrap() - 90.0).abs() < 1e-9);
}

#[test]
fn sam_counts_zero_spectra() {
    let a = random_cube(4, 4, 3, 12);
    let mut z = a.data().to_vec();
    for k in 0..3 {
        z[k * 16] = 0.0;
    }
    let b = cube(4, 4, 3, z);
    let s = sam_detailed(&a, &b).unwrap();
    assert_eq!(s.skipped, 1);
    assert_eq!(s.pixels, 16);
    assert!(s.warn());
    assert!(!sam_detailed(&a, &a).unwrap().warn());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sam_ignores_positive_per_pixel_scaling(seed in 0u64..1000, scales in prop::collection::vec(0.1f32..10.0, 16)) {
        let a = random_cube(4, 4, 5, seed);
        let b = random_cube(4, 4, 5, seed + 1);
        let mut scaled = b.data().to_vec();
        for k in 0..5 {
            for (i, s) in scales.iter().enumerate() {
                scaled[k * 16 + i] *= s;
            }
        }
        let base = sam(&a, &b).unwrap();
        let moved = sam(&a, &cube(4, 4, 5, scaled)).unwrap();
        prop_assert!((base - moved).abs() < 1e-4);
    }

    #[test]
    fn ssim_is_symmetric(seed in 0u64..1000) {
        let a = random_cube(12, 12, 2, seed);
        let b = random_cube(12, 12, 2, seed + 7);
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn inception_score_stays_in_range(seed in 0u64..1000, c in 2usize..8, n in 1usize..20) {
        let probs = random_probs(n, c, seed);
        let s = inception_score_from_probs(&probs).unwrap();
        prop_assert!(s >= 1.0 - 1e-12 && s <= c as f64 + 1e-12);
    }
}

fn random_probs(n: usize, c: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0f64).exp()).collect();
            let s: f64 = z.iter().sum();
            z.iter().map(|v| v / s).collect()
        })
        .collect()
}

#[test]
fn inception_score_extremes() {
    let c = 5;
    let one_hot: Vec<Vec<f64>> = (0..20)
        .map(|i| (0..c).map(|j| if i % c == j { 1.0 } else { 0.0 }).collect())
        .collect();
    assert!((inception_score_from_probs(&one_hot).unwrap() - c as f64).abs() < 1e-12);
    let uniform = vec![vec![1.0 / c as f64; c]; 7];
    assert!((inception_score_from_probs(&uniform).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(inception_score_from_probs(&[]), Err(MetricError::Empty)));
}

#[test]
fn inception_score_matches_direct_kl() {
    let probs = random_probs(13, 6, 21);
    let mut marginal = [0.0; 6];
    for p in &probs {
        for j in 0..6 {
            marginal[j] += p[j];
        }
    }
    let mut kl = 0.0;
    for p in &probs {
        for j in 0..6 {
            kl += p[j] * (p[j].ln() - (marginal[j] / 13.0).ln());
        }
    }
    let oracle = (kl / 13.0).exp();
    assert!((inception_score_from_probs(&probs).unwrap() - oracle).abs() < 1e-9);
}

fn gaussian_cloud(n: usize, d: usize, seed: u64, shift: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(0.0, 1.0).unwrap();
    let mix: Vec<f64> = (0..d * d).map(|_| nd.sample(&mut rng) * 0.5).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| nd.sample(&mut rng)).collect();
            (0..d)
                .map(|i| shift + (0..d).map(|j| mix[i * d + j] * z[j]).sum::<f64>() + z[i])
                .collect()
        })
        .collect()
}

#[test]
fn kmeans_classifier_is_deterministic_and_bounded() {
    let feats: Vec<Vec<f64>> = gaussian_cloud(40, 3, 5, 0.0)
        .into_iter()
        .chain(gaussian_cloud(40, 3, 6, 8.0))
        .collect();
    let a = KMeansClassifier::fit(&feats, 4, 1).unwrap();
    let b = KMeansClassifier::fit(&feats, 4, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.classes(), 4);
    let s = inception_score(&a, &feats).unwrap();
    assert!((1.0..=4.0).contains(&s));
    let p = a.probs(&feats[0]);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(KMeansClassifier::fit(&feats[..3], 4, 1).is_err());
}

#[test]
fn fid_of_identical_sets_is_zero() {
    let a = gaussian_cloud(50, 4, 1, 0.0);
    assert!(fid(&a, &a).unwrap().value <= 1e-6);
}

#[test]
fn fid_of_shifted_set_is_squared_shift() {
    let a = gaussian_cloud(60, 5, 2, 0.0);
    let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v + 0.7).collect()).collect();
    let f = fid(&a, &b).unwrap();
    assert!((f.value - 5.0 * 0.49).abs() < 1e-6, "{}", f.value);
    assert!(!f.regularized);
}

fn cov(x: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (x.len(), x[0].len());
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let c = DMatrix::from_fn(d, d, |i, j| {
        x.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64
    });
    (mean, c)
}

#[test]
fn fid_matches_joint_diagonalisation_oracle() {
    for seed in 0..3 {
        let a = gaussian_cloud(80, 6, 10 + seed, 0.0);
        let b = gaussian_cloud(70, 6, 20 + seed, 0.3);
        let (ma, ca) = cov(&a);
        let (mb, cb) = cov(&b);
        // C2 = L L^T; (C1 C2)^(1/2) has the eigenvalues of L^T C1 L
        let l = cb.clone().cholesky().unwrap().l();
        let inner = l.transpose() * &ca * &l;
        let tr: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
        let dm: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum();
        let oracle = dm + ca.trace() + cb.trace() - 2.0 * tr;
        assert!((fid(&a, &b).unwrap().value - oracle).abs() < 1e-4);
    }
}

#[test]
fn fid_input_errors() {
    let a = gaussian_cloud(10, 3, 1, 0.0);
    let b = gaussian_cloud(10, 4, 1, 0.0);
    assert!(matches!(fid(&a, &b), Err(MetricError::Dimension(3, 4))));
    assert!(matches!(fid(&a[..1], &a), Err(MetricError::TooFewSamples { .. })));
}

fn scene(seed: u64) -> HsiCube {
    synth_cube(&SynthSpec {
        height: 48,
        width: 48,
        bands: 4,
        n_endmembers: 4,
        smoothness: 3.0,
        seed,
    })
    .unwrap()
}

fn blur(c: &HsiCube) -> HsiCube {
    let up = bicubic_upsample(&bicubic_downsample(c, 4).unwrap(), 4).unwrap();
    up
}

fn model() -> NiqeModel {
    let pristine: Vec<HsiCube> = (0..4).map(|s| scene(100 + s)).collect();
    let refs: Vec<&HsiCube> = pristine.iter().collect();
    fit_niqe(&refs, NiqeParams::default()).unwrap()
}

#[test]
fn pi_with_constant_scorer_is_arithmetic_pass_through() {
    let m = model();
    let c = scene(1);
    let n = niqe(&m, &c).unwrap();
    let p = pi(&c, &ConstantMa::default(), &m).unwrap();
    assert!((p - 0.5 * (5.0 + n)).abs() < 1e-12);
}

#[test]
fn niqe_prefers_sharp_over_blurred() {
    let m = model();
    for seed in 1..4 {
        let sharp = scene(seed);
        let blurred = blur(&sharp);
        let (ns, nb) = (niqe(&m, &sharp).unwrap(), niqe(&m, &blurred).unwrap());
        assert!(nb > ns, "seed {seed}: blurred {nb} sharp {ns}");
        let ma = ConstantMa::default();
        assert!(pi(&blurred, &ma, &m).unwrap() > pi(&sharp, &ma, &m).unwrap());
    }
}

#[test]
fn niqe_prefers_pristine_over_noisy() {
    let m = model();
    let pristine: Vec<HsiCube> = (0..4).map(|s| scene(100 + s)).collect();
    let clean: f64 = pristine.iter().map(|c| niqe(&m, c).unwrap()).sum::<f64>() / 4.0;
    let noisy: f64 = pristine
        .iter()
        .map(|c| niqe(&m, &add_noise_snr(c, 10.0, 3).unwrap()).unwrap())
        .sum::<f64>()
        / 4.0;
    assert!(noisy > clean, "noisy {noisy} clean {clean}");
}

#[test]
fn evaluate_agrees_with_library_calls() {
    let hr = random_cube(16, 16, 3, 40);
    let sr = map(&hr, |v| (v + 5.0).min(255.0));
    let r = evaluate(&[(&hr, &sr)], None, true).unwrap();
    assert!((r.psnr - psnr(&hr, &sr).unwrap()).abs() < 1e-12);
    assert!((r.ssim - ssim(&hr, &sr).unwrap()).abs() < 1e-12);
    assert!((r.sam - sam(&hr, &sr).unwrap()).abs() < 1e-12);
    assert!((r.sre - sre(&hr, &sr).unwrap()).abs() < 1e-12);
    let pb = r.per_band.as_ref().unwrap();
    for (a, b) in pb.psnr.iter().zip(psnr_per_band(&hr, &sr).unwrap()) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(r.to_text().contains("psnr = "));
    assert!(r.per_band_csv().unwrap().lines().count() == 4);
    let id = evaluate(&[(&hr, &hr)], None, false).unwrap();
    assert!(id.psnr.is_infinite());
    assert!(id.to_text().contains("psnr = inf"));
    assert_eq!(id.sam, 0.0);
    assert_eq!(id.sre, 0.0);
}
