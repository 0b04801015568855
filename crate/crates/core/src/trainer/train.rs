use hsisr_tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{apply_ablation, Ablation, Adam, Batch, Objective, TrainConfig, TrainData, TrainError};
use crate::losses::{
    critic_objective, generator_adversarial, js_objectives, latent_reg, pixel_mse, spatial_texture, spectral_contextual, ContextualVariant,
    LossBreakdown,
};
use crate::metrics::{fid, inception_score, KMeansClassifier};
use crate::models::{
    discriminator_forward, encoder_forward, generator_forward, init_weights, update_running_stats, DiscMode, EncoderConfig, NetConfig,
    NetworkWeights,
};

/// One logged joint iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    /// 1-based iteration number.
    pub iter: usize,
    pub loss: LossBreakdown,
    /// Objective value of the last critic update of the iteration.
    pub critic: f64,
    pub is: Option<f64>,
    pub fid: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    /// Completed joint iterations.
    pub iter: usize,
    /// Completed pretraining iterations.
    pub pretrain_iter: usize,
    pub generator: NetworkWeights,
    pub discriminator: NetworkWeights,
    pub encoder: Option<NetworkWeights>,
    pub adam_g: Adam,
    pub adam_d: Adam,
    pub adam_e: Option<Adam>,
    pub curves: Vec<CurveRow>,
    /// Critic margin (mean real minus mean bicubic score) per pretraining
    /// iteration, measured on the training batch before the update.
    pub pretrain_margin: Vec<f64>,
    pub rng_seed: u64,
    pub rng: ChaCha8Rng,
}

/// Which adversarial game the critic and the generator play.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Game {
    Wasserstein,
    CrossEntropy,
}

fn game(config: &TrainConfig, ab: &Ablation) -> Game {
    if ab.discriminator.sigmoid || config.loss_variant == super::LossVariant::Js {
        Game::CrossEntropy
    } else {
        Game::Wasserstein
    }
}

impl TrainState {
    /// Freshly initialised networks for the configured ablation model.
    pub fn init(config: &TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let ab = apply_ablation(config)?;
        let s = config.seed;
        let generator = init_weights(&NetConfig::Generator(ab.generator.clone()), s.wrapping_mul(4).wrapping_add(1))?;
        let discriminator = init_weights(
            &NetConfig::Discriminator(ab.discriminator.clone()),
            s.wrapping_mul(4).wrapping_add(2),
        )?;
        let encoder = match &ab.encoder {
            Some(e) => Some(init_weights(&NetConfig::Encoder(e.clone()), s.wrapping_mul(4).wrapping_add(3))?),
            None => None,
        };
        Ok(Self {
            iter: 0,
            pretrain_iter: 0,
            adam_g: Adam::new(&generator),
            adam_d: Adam::new(&discriminator),
            adam_e: encoder.as_ref().map(Adam::new),
            generator,
            discriminator,
            encoder,
            curves: Vec::new(),
            pretrain_margin: Vec::new(),
            rng_seed: s,
            rng: ChaCha8Rng::seed_from_u64(s),
        })
    }
}

/// One critic update on `real` against `fake` (both constants). Returns
/// the objective value before the update.
fn critic_step(state: &mut TrainState, config: &TrainConfig, real: &Tensor, fake: &Tensor, game: Game) -> Result<f64, TrainError> {
    let use_gp = config.gp_weight > 0.0 && game == Game::Wasserstein;
    let mixes: Vec<f64> = if use_gp {
        (0..real.shape()[0]).map(|_| state.rng.random()).collect()
    } else {
        Vec::new()
    };
    let d = &state.discriminator;
    let mut g = Graph::new();
    let b = d.bind(&mut g, true);
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let out_r = discriminator_forward(&mut g, d, &b, r, DiscMode::Train)?;
    let out_f = discriminator_forward(&mut g, d, &b, f, DiscMode::Train)?;
    let mut loss = match game {
        Game::Wasserstein => critic_objective(&mut g, out_r.taps.logit, out_f.taps.logit),
        Game::CrossEntropy => js_objectives(&mut g, out_r.taps.logit, out_f.taps.logit).0,
    };
    if use_gp {
        let gp = gradient_penalty(&mut g, d, &b, real, fake, &mixes)?;
        let gp = g.scale(gp, config.gp_weight);
        loss = g.add(loss, gp);
    }
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(TrainError::Diverged {
            iter: state.iter + 1,
            what: "critic loss".into(),
        });
    }
    let grads = g.backward(loss);
    let stats = out_r.batch_stats;
    state.adam_d.step(&mut state.discriminator, &b, &grads, &config.adam);
    update_running_stats(&mut state.discriminator, &stats)?;
    Ok(value)
}

/// Step in normalised input units for the penalty's difference quotient.
const GP_STEP: f64 = 1e-3;

/// `mean((|D(x + h u) - D(x)| / h - 1)^2)` at random interpolates `x` of
/// real and fake samples, with `u` the unit direction from fake to real in
/// the critic's `[-1, 1]` input space. The difference quotient stands in
/// for the input-gradient norm along that line.
fn gradient_penalty(
    g: &mut Graph,
    d: &NetworkWeights,
    b: &crate::models::Bound,
    real: &Tensor,
    fake: &Tensor,
    mixes: &[f64],
) -> Result<Var, TrainError> {
    let n = real.shape()[0];
    let per = real.len() / n;
    let mut x = Vec::with_capacity(real.len());
    let mut xh = Vec::with_capacity(real.len());
    for s in 0..n {
        let e = mixes[s];
        let rs = &real.data()[s * per..(s + 1) * per];
        let fs = &fake.data()[s * per..(s + 1) * per];
        // radiance units are 127.5 per normalised unit
        let norm = rs.iter().zip(fs).map(|(a, c)| ((a - c) / 127.5).powi(2)).sum::<f64>().sqrt();
        for (a, c) in rs.iter().zip(fs) {
            let p = e * a + (1.0 - e) * c;
            let u = if norm > 0.0 { (a - c) / 127.5 / norm } else { 0.0 };
            x.push(p);
            xh.push(p + GP_STEP * 127.5 * u);
        }
    }
    let x0 = g.constant(Tensor::new(real.shape(), x)?);
    let x1 = g.constant(Tensor::new(real.shape(), xh)?);
    let o0 = discriminator_forward(g, d, b, x0, DiscMode::Train)?;
    let o1 = discriminator_forward(g, d, b, x1, DiscMode::Train)?;
    let diff = g.sub(o1.taps.logit, o0.taps.logit);
    let q = g.scale(diff, 1.0 / GP_STEP);
    let q = g.reshape(q, &[n, 1]);
    let abs = g.norm_axis(q, 1);
    let dev = g.add_scalar(abs, -1.0);
    let dev = g.square(dev);
    Ok(g.mean(dev))
}

/// Self-supervised encoder target: the HR patch average-pooled to a
/// thumbnail that fits `latent_dim`, in `[-1, 1]`, zero padded.
fn encoder_target(hr: &Tensor, c: &EncoderConfig) -> Result<Tensor, TrainError> {
    let s = hr.shape();
    let (n, bands, h, w) = (s[0], s[2], s[3], s[4]);
    let mut p = 1;
    while bands * (h / p) * (w / p) > c.latent_dim && h % (2 * p) == 0 && w % (2 * p) == 0 {
        p *= 2;
    }
    let (th, tw) = (h / p, w / p);
    let mut out = vec![0.0; n * c.latent_dim];
    for i in 0..n {
        let mut k = 0;
        for band in 0..bands {
            let base = (i * bands + band) * h * w;
            for ty in 0..th {
                for tx in 0..tw {
                    if k >= c.latent_dim {
                        break;
                    }
                    let mut acc = 0.0;
                    for y in ty * p..(ty + 1) * p {
                        for x in tx * p..(tx + 1) * p {
                            acc += hr.data()[base + y * w + x];
                        }
                    }
                    out[i * c.latent_dim + k] = acc / (p * p) as f64 / 127.5 - 1.0;
                    k += 1;
                }
            }
        }
    }
    Ok(Tensor::new(&[n, c.latent_dim], out)?)
}

fn encoder_step(state: &mut TrainState, config: &TrainConfig, hr: &Tensor) -> Result<(), TrainError> {
    let (Some(e), Some(adam)) = (state.encoder.as_mut(), state.adam_e.as_mut()) else {
        return Ok(());
    };
    let NetConfig::Encoder(c) = &e.config else {
        unreachable!("encoder weights carry an encoder config");
    };
    let target = encoder_target(hr, c)?;
    let mut g = Graph::new();
    let b = e.bind(&mut g, true);
    let x = g.constant(hr.clone());
    let z = encoder_forward(&mut g, e, &b, x)?;
    let t = g.constant(target);
    let loss = pixel_mse(&mut g, z, t);
    if !g.value(loss).item().is_finite() {
        return Err(TrainError::Diverged {
            iter: state.iter,
            what: "encoder pretraining loss".into(),
        });
    }
    let grads = g.backward(loss);
    adam.step(e, &b, &grads, &config.adam);
    Ok(())
}

/// Initialises the networks and pretrains the critic (real against
/// bicubic-enlarged patches) and the encoder (thumbnail reconstruction).
pub fn pretrain(config: &TrainConfig, data: &TrainData) -> Result<TrainState, TrainError> {
    let mut state = TrainState::init(config)?;
    pretrain_until(&mut state, config, data, config.pretrain_iters)?;
    Ok(state)
}

pub fn pretrain_until(state: &mut TrainState, config: &TrainConfig, data: &TrainData, until: usize) -> Result<(), TrainError> {
    if data.train.is_empty() {
        return Err(TrainError::EmptyData);
    }
    while state.pretrain_iter < until {
        let idx = data.sample(&mut state.rng, config.batch_size);
        let batch = data.batch(&idx, false)?;
        let margin = score_margin(&state.discriminator, &batch.hr, &batch.lr_up)?;
        critic_step(state, config, &batch.hr, &batch.lr_up, Game::CrossEntropy)?;
        encoder_step(state, config, &batch.hr)?;
        state.pretrain_margin.push(margin);
        state.pretrain_iter += 1;
    }
    Ok(())
}

/// Evaluation-mode critic scores.
pub fn critic_scores(d: &NetworkWeights, x: &Tensor) -> Result<Vec<f64>, TrainError> {
    let mut g = Graph::new();
    let b = d.bind(&mut g, false);
    let v = g.constant(x.clone());
    let out = discriminator_forward(&mut g, d, &b, v, DiscMode::Eval)?;
    Ok(g.value(out.taps.score).data().to_vec())
}

/// Mean real score minus mean fake score, evaluation mode.
pub fn score_margin(d: &NetworkWeights, real: &Tensor, fake: &Tensor) -> Result<f64, TrainError> {
    let r = critic_scores(d, real)?;
    let f = critic_scores(d, fake)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64 - f.iter().sum::<f64>() / f.len() as f64)
}

struct GenStep {
    graph: Graph,
    bound: crate::models::Bound,
    sr: Var,
}

fn generator_graph(state: &TrainState, lr: &Tensor, differentiable: bool) -> Result<GenStep, TrainError> {
    let mut graph = Graph::new();
    let bound = state.generator.bind(&mut graph, differentiable);
    let x = graph.constant(lr.clone());
    let sr = generator_forward(&mut graph, &state.generator, &bound, x)?;
    Ok(GenStep { graph, bound, sr })
}

/// Generator (and encoder) update on the graph that produced the fake
/// batch of the preceding critic step.
fn generator_step(
    state: &mut TrainState,
    config: &TrainConfig,
    ab: &Ablation,
    gs: GenStep,
    batch: &Batch,
) -> Result<LossBreakdown, TrainError> {
    let GenStep { mut graph, bound, sr } = gs;
    let g = &mut graph;
    let d = &state.discriminator;
    let bd = d.bind(g, false);
    let hr = g.constant(batch.hr.clone());
    let t_sr = discriminator_forward(g, d, &bd, sr, DiscMode::Eval)?.taps;
    let w = &config.loss_weights;
    let adversarial = match game(config, ab) {
        Game::Wasserstein => generator_adversarial(g, t_sr.logit),
        Game::CrossEntropy => {
            let nf = g.scale(t_sr.logit, -1.0);
            let sp = g.softplus(nf);
            g.mean(sp)
        }
    };
    let mut be = None;
    let latent = match &state.encoder {
        Some(e) => {
            let b = e.bind(g, true);
            let z_hr = encoder_forward(g, e, &b, hr)?;
            let z_sr = encoder_forward(g, e, &b, sr)?;
            be = Some(b);
            Some(latent_reg(g, z_hr, z_sr))
        }
        None => None,
    };
    let mut out = LossBreakdown {
        adversarial: g.value(adversarial).item(),
        latent: latent.map(|l| g.value(l).item()).unwrap_or(0.0),
        ..LossBreakdown::default()
    };
    let mut total = g.scale(adversarial, w.sigma_adversarial);
    match ab.objective {
        Objective::Ssrp => {
            let t_hr = discriminator_forward(g, d, &bd, hr, DiscMode::Eval)?.taps;
            let reference = match config.contextual {
                ContextualVariant::Template => None,
                ContextualVariant::Positional => {
                    let up = g.constant(batch.lr_up.clone());
                    let t_up = discriminator_forward(g, d, &bd, up, DiscMode::Eval)?.taps;
                    Some(g.value(t_up.feat_mu).clone())
                }
            };
            let spectral = spectral_contextual(g, t_sr.feat_mu, t_hr.feat_mu, config.contextual, reference.as_ref(), config.bands);
            let spatial = spatial_texture(g, t_sr.feat_phi, t_hr.feat_phi);
            out.spectral = g.value(spectral).item();
            out.spatial = g.value(spatial).item();
            let a = g.scale(spectral, w.lambda_spectral);
            let b = g.scale(spatial, w.eta_spatial);
            let ab_sum = g.add(a, b);
            total = g.add(ab_sum, total);
        }
        Objective::PixelAdversarial => {
            let p = pixel_mse(g, sr, hr);
            let p = g.scale(p, 1.0 / (255.0 * 255.0));
            out.pixel = g.value(p).item();
            let p = g.scale(p, config.pixel_weight);
            total = g.add(p, total);
        }
    }
    if let Some(l) = latent {
        let l = g.scale(l, w.mu_latent);
        total = g.add(total, l);
    }
    out.total = g.value(total).item();
    if !out.total.is_finite() {
        return Err(TrainError::Diverged {
            iter: state.iter + 1,
            what: "generator loss".into(),
        });
    }
    let grads = g.backward(total);
    state.adam_g.step(&mut state.generator, &bound, &grads, &config.adam);
    if let (Some(e), Some(adam), Some(b)) = (state.encoder.as_mut(), state.adam_e.as_mut(), be.as_ref()) {
        adam.step(e, b, &grads, &config.adam);
    }
    Ok(out)
}

/// Runs joint iterations until `until` have completed.
pub fn joint_train_until(state: &mut TrainState, config: &TrainConfig, data: &TrainData, until: usize) -> Result<(), TrainError> {
    let ab = apply_ablation(config)?;
    let gm = game(config, &ab);
    while state.iter < until {
        let mut critic = 0.0;
        let mut last = None;
        for k in 0..config.critic_steps_per_gen {
            let idx = data.sample(&mut state.rng, config.batch_size);
            let batch = data.batch(&idx, false)?;
            let is_last = k + 1 == config.critic_steps_per_gen;
            let gs = generator_graph(state, &batch.lr, is_last)?;
            let fake = gs.graph.value(gs.sr).clone();
            critic = critic_step(state, config, &batch.hr, &fake, gm)?;
            if is_last {
                last = Some((gs, batch));
            }
        }
        let (gs, batch) = last.expect("at least one critic step");
        let loss = generator_step(state, config, &ab, gs, &batch)?;
        let weights_ok =
            state.generator.all_finite() && state.discriminator.all_finite() && state.encoder.as_ref().is_none_or(|e| e.all_finite());
        if !weights_ok {
            return Err(TrainError::Diverged {
                iter: state.iter + 1,
                what: "weights".into(),
            });
        }
        state.iter += 1;
        let (is, fid) = if state.iter % config.eval_period == 0 {
            match diversity(state, config, data)? {
                Some((i, f)) => (Some(i), Some(f)),
                None => (None, None),
            }
        } else {
            (None, None)
        };
        state.curves.push(CurveRow {
            iter: state.iter,
            loss,
            critic,
            is,
            fid,
        });
    }
    Ok(())
}

/// Critic updates alone, `steps` of them; the generator and the encoder
/// are left untouched and no iteration is logged. Returns the last
/// critic objective.
pub fn train_critic(state: &mut TrainState, config: &TrainConfig, data: &TrainData, steps: usize) -> Result<f64, TrainError> {
    let ab = apply_ablation(config)?;
    let gm = game(config, &ab);
    let mut critic = f64::NAN;
    for _ in 0..steps {
        let idx = data.sample(&mut state.rng, config.batch_size);
        let batch = data.batch(&idx, false)?;
        let fake = super_resolve_tensor(&state.generator, &batch.lr)?;
        critic = critic_step(state, config, &batch.hr, &fake, gm)?;
    }
    Ok(critic)
}

/// Pretrained state in, state after `config.joint_iters` iterations out.
pub fn joint_train(mut state: TrainState, config: &TrainConfig, data: &TrainData) -> Result<TrainState, TrainError> {
    joint_train_until(&mut state, config, data, config.joint_iters)?;
    Ok(state)
}

/// Generator output for every test pair, in chunks.
pub fn super_resolve_tensor(gw: &NetworkWeights, lr: &Tensor) -> Result<Tensor, TrainError> {
    let n = lr.shape()[0];
    let mut parts = Vec::new();
    for start in (0..n).step_by(16) {
        let len = 16.min(n - start);
        let chunk = lr.slice_outer(start, len);
        let mut g = Graph::new();
        let b = gw.bind(&mut g, false);
        let x = g.constant(chunk);
        let y = generator_forward(&mut g, gw, &b, x)?;
        parts.push(g.value(y).clone());
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Ok(Tensor::concat_outer(&refs)?)
}

/// Channel means of the last block's activations: one feature vector per
/// sample.
pub fn critic_features(d: &NetworkWeights, x: &Tensor) -> Result<Vec<Vec<f64>>, TrainError> {
    let mut out = Vec::new();
    let n = x.shape()[0];
    for start in (0..n).step_by(16) {
        let len = 16.min(n - start);
        let mut g = Graph::new();
        let b = d.bind(&mut g, false);
        let v = g.constant(x.slice_outer(start, len));
        let t = discriminator_forward(&mut g, d, &b, v, DiscMode::Eval)?.taps;
        let s = g.shape(t.feat_phi).to_vec();
        let (c, hw) = (s[1], s[2] * s[3] * s[4]);
        for row in g.value(t.penultimate).data().chunks(c * hw) {
            out.push(row.chunks(hw).map(|ch| ch.iter().sum::<f64>() / hw as f64).collect());
        }
    }
    Ok(out)
}

/// IS and FID of generated test patches against the real ones, in the
/// current critic's feature space. `None` with fewer than two test pairs.
pub fn diversity(state: &TrainState, config: &TrainConfig, data: &TrainData) -> Result<Option<(f64, f64)>, TrainError> {
    if data.test.len() < 2 {
        return Ok(None);
    }
    let idx: Vec<usize> = (0..data.test.len()).collect();
    let batch = data.batch(&idx, true)?;
    let sr = super_resolve_tensor(&state.generator, &batch.lr)?;
    let real = critic_features(&state.discriminator, &batch.hr)?;
    let fake = critic_features(&state.discriminator, &sr)?;
    let k = config.is_classes.min(real.len());
    let clf = KMeansClassifier::fit(&real, k, config.seed ^ state.iter as u64)?;
    let is = inception_score(&clf, &fake)?;
    let f = fid(&real, &fake)?;
    Ok(Some((is, f.value)))
}
