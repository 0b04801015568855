use hsisr_core::models::*;
use hsisr_tensor::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gen_config(bands: usize, f: usize, skip: bool) -> GeneratorConfig {
    GeneratorConfig {
        bands,
        n_resblocks: 2,
        feature_width: f,
        first_kernel: 3,
        residual_scale: 0.1,
        scale: 2,
        conv: ConvKind::Spectral3d,
        upscale: UpscaleMode::Cascade,
        global_skip: skip,
    }
}

fn disc_config(bands: usize, patch: usize, sigmoid: bool) -> DiscriminatorConfig {
    DiscriminatorConfig {
        bands,
        n_maxpool_blocks: 2,
        base_channels: 4,
        dense_width: 8,
        patch: (patch, patch),
        first_stride: 1,
        sigmoid,
    }
}

fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn generate(w: &NetworkWeights, lr: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let b = w.bind(&mut g, false);
    let x = g.constant(lr.clone());
    let y = generator_forward(&mut g, w, &b, x).unwrap();
    g.value(y).clone()
}

fn scores(w: &NetworkWeights, x: &Tensor) -> Vec<f64> {
    let mut g = Graph::new();
    let b = w.bind(&mut g, false);
    let v = g.constant(x.clone());
    let o = discriminator_forward(&mut g, w, &b, v, DiscMode::Eval).unwrap();
    g.value(o.taps.score).data().to_vec()
}

/// Autodiff against central differences on `count` trainable entries of
/// `w`, for the scalar `probe(weights)` computed on a graph.
fn weight_gradcheck(
    w: &NetworkWeights,
    count: usize,
    seed: u64,
    probe: impl Fn(&mut Graph, &NetworkWeights, &Bound) -> hsisr_tensor::Var,
) -> (usize, f64) {
    let mut g = Graph::new();
    let b = w.bind(&mut g, true);
    let out = probe(&mut g, w, &b);
    let grads = g.backward(out);
    let value = |w: &NetworkWeights| {
        let mut g = Graph::new();
        let b = w.bind(&mut g, false);
        let out = probe(&mut g, w, &b);
        g.value(out).item()
    };
    let trainable: Vec<usize> = (0..w.params.len()).filter(|&i| w.params[i].trainable).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for k in 0..count {
        // cycle through parameters so every tensor is visited
        let pi = trainable[k % trainable.len()];
        let e = rng.random_range(0..w.params[pi].tensor.len());
        let analytic = grads.get_or_zeros(b.vars[pi], w.params[pi].tensor.shape()).data()[e];
        let mut wp = w.clone();
        wp.params[pi].tensor.data_mut()[e] += h;
        let up = value(&wp);
        wp.params[pi].tensor.data_mut()[e] -= 2.0 * h;
        let down = value(&wp);
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
        worst = worst.max(err);
    }
    (count, worst)
}

#[test]
fn generator_parameter_count_matches_layer_shapes() {
    let (b, f, fk) = (16, 8, 3);
    let w = init_weights(&NetConfig::Generator(gen_config(b, f, false)), 0).unwrap();
    let first = f * b * fk * fk + f;
    let res = 2 * 2 * (f * f * 27 + f);
    let up = 4 * f * f * 27 + 4 * f;
    let dec = f + 1;
    assert_eq!(w.parameter_count(), first + res + up + dec);
}

#[test]
fn init_is_deterministic_and_sets_residual_scale() {
    let c = NetConfig::Generator(gen_config(4, 4, false));
    let a = init_weights(&c, 9).unwrap();
    assert_eq!(a, init_weights(&c, 9).unwrap());
    assert_ne!(a, init_weights(&c, 10).unwrap());
    for i in 0..2 {
        assert_eq!(a.get(&format!("res{i}.scale")).unwrap().item(), 0.1);
    }
}

#[test]
fn generator_output_shape_law() {
    let mut c = gen_config(2, 2, false);
    c.scale = 8;
    c.n_resblocks = 1;
    let w = init_weights(&NetConfig::Generator(c), 1).unwrap();
    let y = generate(&w, &Tensor::full(&[1, 1, 2, 48, 48], 50.0));
    assert_eq!(y.shape(), &[1, 1, 2, 384, 384]);
}

#[test]
fn zero_weights_on_zero_input_give_zero_output() {
    for skip in [false, true] {
        let mut w = init_weights(&NetConfig::Generator(gen_config(3, 4, skip)), 2).unwrap();
        for p in w.params.iter_mut().filter(|p| p.trainable) {
            p.tensor = Tensor::zeros(p.tensor.shape());
        }
        let y = generate(&w, &Tensor::zeros(&[2, 1, 3, 5, 5]));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn global_skip_starts_at_bicubic() {
    let w = init_weights(&NetConfig::Generator(gen_config(3, 4, true)), 3).unwrap();
    let lr = random_tensor(&[1, 1, 3, 6, 6], 4, 0.0, 255.0);
    let y = generate(&w, &lr);
    let up = hsisr_core::hsi_data::bicubic_upsample_planes(lr.data(), 3, 6, 6, 2);
    for (a, b) in y.data().iter().zip(&up) {
        assert!((a - b).abs() < 1e-9);
    }
}

fn resblock_out(w: &NetworkWeights, x: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let b = w.bind(&mut g, false);
    let v = g.constant(x.clone());
    let y = resblock_forward(&mut g, w, &b, 0, v);
    g.value(y).clone()
}

#[test]
fn resblock_identities() {
    let c = gen_config(3, 4, false);
    let w = init_weights(&NetConfig::Generator(c), 5).unwrap();
    let x = random_tensor(&[1, 4, 3, 5, 5], 6, -1.0, 1.0);

    let mut zero = w.clone();
    for name in ["res0.conv1.w", "res0.conv1.b", "res0.conv2.w", "res0.conv2.b"] {
        let s = zero.get(name).unwrap().shape().to_vec();
        zero.set(name, Tensor::zeros(&s)).unwrap();
    }
    assert_eq!(resblock_out(&zero, &x), x);

    let mut no_scale = w.clone();
    no_scale.set("res0.scale", Tensor::full(&[1], 0.0)).unwrap();
    assert_eq!(resblock_out(&no_scale, &x), x);

    let mut full = w.clone();
    full.set("res0.scale", Tensor::full(&[1], 1.0)).unwrap();
    let small = resblock_out(&w, &x);
    let big = resblock_out(&full, &x);
    for ((s, b), x0) in small.data().iter().zip(big.data()).zip(x.data()) {
        // branch = big - x, and big - small = 0.9 * branch
        assert!(((b - s) - 0.9 * (b - x0)).abs() < 1e-12);
    }
}

#[test]
fn upscale_shuffle_example_shape() {
    let b = 2;
    let t = Tensor::zeros(&[1, 4 * 32 * b, 1, 3, 3]);
    assert_eq!(upscale_shuffle(&t, 2).unwrap().shape(), &[1, 32 * b, 1, 6, 6]);
    assert!(upscale_shuffle(&Tensor::zeros(&[1, 6, 1, 2, 2]), 2).is_err());
}

proptest! {
    #[test]
    fn shuffle_round_trips_and_preserves_sum(k in prop::sample::select(vec![2usize, 4]), c in 1usize..3, h in 1usize..4, seed in any::<u64>()) {
        let t = random_tensor(&[1, c * k * k, 2, h, h], seed, -5.0, 5.0);
        let s = upscale_shuffle(&t, k).unwrap();
        prop_assert_eq!(upscale_unshuffle(&s, k).unwrap(), t.clone());
        let mut a: Vec<f64> = t.data().to_vec();
        let mut b: Vec<f64> = s.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn generator_weight_gradients_match_differences() {
    let mut c = gen_config(3, 4, false);
    c.n_resblocks = 1;
    let w = init_weights(&NetConfig::Generator(c), 7).unwrap();
    let lr = random_tensor(&[1, 1, 3, 3, 3], 8, 0.0, 255.0);
    let (n, worst) = weight_gradcheck(&w, 24, 1, |g, w, b| {
        let x = g.constant(lr.clone());
        let y = generator_forward(g, w, b, x).unwrap();
        let y = g.scale(y, 1.0 / 255.0);
        g.sum(y)
    });
    assert!(n >= 20);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn single_gray_pixel_jacobian_matches_differences() {
    let w = init_weights(&NetConfig::Generator(gen_config(2, 2, false)), 11).unwrap();
    let lr = Tensor::full(&[1, 1, 2, 1, 1], 128.0);
    let (_, worst) = weight_gradcheck(&w, 20, 4, |g, w, b| {
        let x = g.constant(lr.clone());
        let y = generator_forward(g, w, b, x).unwrap();
        let y = g.scale(y, 1.0 / 255.0);
        g.sum(y)
    });
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn critic_weight_gradients_match_differences() {
    let w = init_weights(&NetConfig::Discriminator(disc_config(3, 8, false)), 12).unwrap();
    let x = random_tensor(&[2, 1, 3, 8, 8], 13, 0.0, 255.0);
    let (n, worst) = weight_gradcheck(&w, 24, 2, |g, w, b| {
        let v = g.constant(x.clone());
        let o = discriminator_forward(g, w, b, v, DiscMode::Eval).unwrap();
        g.sum(o.taps.score)
    });
    assert!(n >= 20);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn critic_input_gradient_matches_differences() {
    let w = init_weights(&NetConfig::Discriminator(disc_config(4, 16, false)), 14).unwrap();
    let x = random_tensor(&[1, 1, 4, 16, 16], 15, 0.0, 255.0);
    let mut g = Graph::new();
    let b = w.bind(&mut g, false);
    let v = g.variable(x.clone());
    let o = discriminator_forward(&mut g, &w, &b, v, DiscMode::Eval).unwrap();
    let s = g.sum(o.taps.score);
    let grads = g.backward(s);
    let analytic = grads.get_or_zeros(v, x.shape());
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let h = 1e-4;
    for _ in 0..20 {
        let e = rng.random_range(0..x.len());
        let mut xp = x.clone();
        xp.data_mut()[e] += h;
        let up = scores(&w, &xp)[0];
        xp.data_mut()[e] -= 2.0 * h;
        let down = scores(&w, &xp)[0];
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[e];
        assert!(
            (a - numeric).abs() / numeric.abs().max(a.abs()).max(1e-6) < 1e-3,
            "{a} vs {numeric}"
        );
    }
}

#[test]
fn encoder_weight_gradients_match_differences() {
    let c = EncoderConfig {
        bands: 2,
        channel_schedule: vec![2, 2, 4, 4, 4, 4, 4, 4],
        latent_dim: 3,
        dense_width: 4,
        patch: (8, 8),
        first_stride: 1,
    };
    let w = init_weights(&NetConfig::Encoder(c), 17).unwrap();
    let x = random_tensor(&[1, 1, 2, 8, 8], 18, 0.0, 255.0);
    let (n, worst) = weight_gradcheck(&w, 24, 3, |g, w, b| {
        let v = g.constant(x.clone());
        let z = encoder_forward(g, w, b, v).unwrap();
        g.sum(z)
    });
    assert!(n >= 20);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn sigmoid_critic_is_bounded_and_plain_critic_is_not() {
    let plain = init_weights(&NetConfig::Discriminator(disc_config(3, 8, false)), 19).unwrap();
    let mut sig_cfg = disc_config(3, 8, true);
    sig_cfg.sigmoid = true;
    let sig = init_weights(&NetConfig::Discriminator(sig_cfg), 19).unwrap();
    let x = random_tensor(&[6, 1, 3, 8, 8], 20, 0.0, 255.0);
    let s = scores(&sig, &x);
    assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    let range = |xs: &[f64]| xs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let base = range(&scores(&plain, &x));
    let big = range(&scores(
        &plain,
        &Tensor::new(x.shape(), x.data().iter().map(|v| v * 50.0).collect()).unwrap(),
    ));
    assert!(big > 5.0 * base, "{big} vs {base}");
}

#[test]
fn eval_mode_taps_are_per_sample_and_deterministic() {
    let w = init_weights(&NetConfig::Discriminator(disc_config(3, 8, false)), 21).unwrap();
    let x = random_tensor(&[1, 1, 3, 8, 8], 22, 0.0, 255.0);
    let pair = Tensor::concat_outer(&[&x, &x]).unwrap();
    let s = scores(&w, &pair);
    assert_eq!(s.len(), 2);
    assert_eq!(s[0], s[1]);
    assert_eq!(scores(&w, &x)[0], s[0]);
}

#[test]
fn encoder_maps_identical_patches_together() {
    let c = EncoderConfig {
        bands: 2,
        channel_schedule: vec![2, 2, 4, 4, 4, 4, 8, 8],
        latent_dim: 5,
        dense_width: 4,
        patch: (16, 16),
        first_stride: 1,
    };
    let w = init_weights(&NetConfig::Encoder(c), 23).unwrap();
    let x = random_tensor(&[1, 1, 2, 16, 16], 24, 0.0, 255.0);
    let mut g = Graph::new();
    let b = w.bind(&mut g, false);
    let v = g.constant(Tensor::concat_outer(&[&x, &x]).unwrap());
    let z = encoder_forward(&mut g, &w, &b, v).unwrap();
    let z = g.value(z);
    assert_eq!(z.shape(), &[2, 5]);
    assert_eq!(z.data()[..5], z.data()[5..]);
}

#[test]
fn checkpoint_round_trip_and_architecture_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    let cfg = NetConfig::Generator(gen_config(3, 4, true));
    let w = init_weights(&cfg, 25).unwrap();
    save_weights(&w, &path).unwrap();
    assert_eq!(load_weights(&path, Some(&cfg)).unwrap(), w);
    let other = NetConfig::Generator(gen_config(3, 8, true));
    assert!(load_weights(&path, Some(&other)).is_err());
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 8);
    assert!(read_weights(&bytes).is_err());
}

#[test]
fn band_mismatch_is_rejected() {
    let w = init_weights(&NetConfig::Generator(gen_config(3, 4, false)), 26).unwrap();
    let mut g = Graph::new();
    let b = w.bind(&mut g, false);
    let x = g.constant(Tensor::zeros(&[1, 1, 4, 3, 3]));
    assert!(generator_forward(&mut g, &w, &b, x).is_err());
}
