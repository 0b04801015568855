//! Run checkpoints: one weight archive per network, the optimiser moments
//! in the same format, a `state.cfg` with counters and the random stream
//! position, and the curves logged so far.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{apply_ablation, Adam, CurveRow, TrainConfig, TrainError, TrainState};
use crate::kv::KeyValues;
use crate::losses::LossBreakdown;
use crate::models::{load_weights, save_weights, NetConfig, NetworkWeights};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const CURVE_HEADER: &str = "iter,spectral,spatial,adversarial,latent,total,is,fid,pixel,critic";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Curves as comma-separated text; values round-trip exactly.
pub fn curves_to_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in rows {
        let l = &r.loss;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            l.spectral,
            l.spatial,
            l.adversarial,
            l.latent,
            l.total,
            opt(r.is),
            opt(r.fid),
            l.pixel,
            r.critic
        ));
    }
    s
}

pub fn curves_from_csv(text: &str) -> Result<Vec<CurveRow>, TrainError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CURVE_HEADER) {
        return Err(TrainError::Checkpoint("curves header does not match".into()));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(TrainError::Checkpoint(format!("curves line {}: {} fields", n + 2, f.len())));
        }
        let bad = || TrainError::Checkpoint(format!("curves line {}: bad number", n + 2));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let maybe = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
        rows.push(CurveRow {
            iter: f[0].trim().parse().map_err(|_| bad())?,
            loss: LossBreakdown {
                spectral: num(f[1])?,
                spatial: num(f[2])?,
                adversarial: num(f[3])?,
                latent: num(f[4])?,
                total: num(f[5])?,
                pixel: num(f[8])?,
            },
            is: maybe(f[6])?,
            fid: maybe(f[7])?,
            critic: num(f[9])?,
        });
    }
    Ok(rows)
}

fn save_adam(a: &Adam, dir: &Path, name: &str) -> Result<(), TrainError> {
    save_weights(&a.m, &dir.join(format!("{name}.adam-m.ckpt")))?;
    save_weights(&a.v, &dir.join(format!("{name}.adam-v.ckpt")))?;
    Ok(())
}

fn load_adam(dir: &Path, name: &str, config: &NetConfig, t: u64) -> Result<Adam, TrainError> {
    Ok(Adam {
        m: load_weights(&dir.join(format!("{name}.adam-m.ckpt")), Some(config))?,
        v: load_weights(&dir.join(format!("{name}.adam-v.ckpt")), Some(config))?,
        t,
    })
}

/// Writes the complete state into `dir` (created if needed).
pub fn checkpoint(state: &TrainState, dir: &Path) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    save_weights(&state.generator, &dir.join("generator.ckpt"))?;
    save_weights(&state.discriminator, &dir.join("discriminator.ckpt"))?;
    save_adam(&state.adam_g, dir, "generator")?;
    save_adam(&state.adam_d, dir, "discriminator")?;
    if let (Some(e), Some(a)) = (&state.encoder, &state.adam_e) {
        save_weights(e, &dir.join("encoder.ckpt"))?;
        save_adam(a, dir, "encoder")?;
    }
    let mut kv = KeyValues::new();
    kv.set("iter", state.iter);
    kv.set("pretrain_iter", state.pretrain_iter);
    kv.set("rng_seed", state.rng_seed);
    kv.set("rng_word_pos", state.rng.get_word_pos());
    kv.set("adam_generator_t", state.adam_g.t);
    kv.set("adam_discriminator_t", state.adam_d.t);
    kv.set("encoder", state.encoder.is_some());
    if let Some(a) = &state.adam_e {
        kv.set("adam_encoder_t", a.t);
    }
    let p = dir.join("state.cfg");
    fs::write(&p, kv.to_text()).map_err(io(&p))?;
    let p = dir.join("curves.csv");
    fs::write(&p, curves_to_csv(&state.curves)).map_err(io(&p))?;
    let margins: String = state.pretrain_margin.iter().map(|m| format!("{m}\n")).collect();
    let p = dir.join("pretrain_margin.txt");
    fs::write(&p, margins).map_err(io(&p))?;
    Ok(())
}

/// Reads a checkpoint written by [`checkpoint`]; the stored architectures
/// must be the ones `config` describes.
pub fn restore(dir: &Path, config: &TrainConfig) -> Result<TrainState, TrainError> {
    let ab = apply_ablation(config)?;
    let p = dir.join("state.cfg");
    let text = fs::read_to_string(&p).map_err(io(&p))?;
    let kv = KeyValues::parse(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let get = |k: &str| -> Result<u128, TrainError> { kv.require_parsed::<u128>(k).map_err(|e| TrainError::Checkpoint(e.to_string())) };
    let has_encoder: bool = kv.require_parsed("encoder").map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    if has_encoder != ab.encoder.is_some() {
        return Err(TrainError::Model(crate::models::ModelError::Architecture(format!(
            "checkpoint {} an encoder, configuration {}",
            if has_encoder { "has" } else { "lacks" },
            if ab.encoder.is_some() { "needs one" } else { "has none" }
        ))));
    }
    let gc = NetConfig::Generator(ab.generator.clone());
    let dc = NetConfig::Discriminator(ab.discriminator.clone());
    let load =
        |name: &str, c: &NetConfig| -> Result<NetworkWeights, TrainError> { Ok(load_weights(&dir.join(format!("{name}.ckpt")), Some(c))?) };
    let generator = load("generator", &gc)?;
    let discriminator = load("discriminator", &dc)?;
    let (encoder, adam_e) = match &ab.encoder {
        Some(e) => {
            let ec = NetConfig::Encoder(e.clone());
            (
                Some(load("encoder", &ec)?),
                Some(load_adam(dir, "encoder", &ec, get("adam_encoder_t")? as u64)?),
            )
        }
        None => (None, None),
    };
    let rng_seed = get("rng_seed")? as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_word_pos(get("rng_word_pos")?);
    let p = dir.join("curves.csv");
    let curves = curves_from_csv(&fs::read_to_string(&p).map_err(io(&p))?)?;
    let p = dir.join("pretrain_margin.txt");
    let pretrain_margin = fs::read_to_string(&p)
        .map_err(io(&p))?
        .lines()
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| TrainError::Checkpoint("bad pretrain margin".into()))
        })
        .collect::<Result<_, _>>()?;
    let state = TrainState {
        iter: get("iter")? as usize,
        pretrain_iter: get("pretrain_iter")? as usize,
        adam_g: load_adam(dir, "generator", &gc, get("adam_generator_t")? as u64)?,
        adam_d: load_adam(dir, "discriminator", &dc, get("adam_discriminator_t")? as u64)?,
        generator,
        discriminator,
        encoder,
        adam_e,
        curves,
        pretrain_margin,
        rng_seed,
        rng,
    };
    if state.curves.len() != state.iter {
        return Err(TrainError::Checkpoint(format!(
            "{} curve rows for {} iterations",
            state.curves.len(),
            state.iter
        )));
    }
    Ok(state)
}
