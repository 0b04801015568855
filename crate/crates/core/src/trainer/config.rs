use crate::kv::{KeyValues, KvError};
use crate::losses::{ContextualVariant, LossWeights};
use crate::models::{ConvKind, DiscriminatorConfig, EncoderConfig, GeneratorConfig, NetConfig, UpscaleMode};

use super::TrainError;

/// Adversarial game played between the generator and the critic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossVariant {
    /// Wasserstein critic, latent regulariser, contextual and texture terms.
    Ssrp,
    /// As `Ssrp` without the latent term; optional gradient penalty.
    WassersteinPlain,
    /// Saturating cross-entropy game in place of the Wasserstein terms.
    Js,
}

impl LossVariant {
    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Ssrp => "ssrp",
            LossVariant::WassersteinPlain => "wasserstein_plain",
            LossVariant::Js => "js",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ssrp" => Some(LossVariant::Ssrp),
            "wasserstein_plain" | "wgan" => Some(LossVariant::WassersteinPlain),
            "js" => Some(LossVariant::Js),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Synthetic training scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub scene_size: usize,
    pub n_scenes: usize,
    pub n_endmembers: usize,
    pub smoothness: f64,
    pub stride: usize,
    pub train_ratio: f64,
    /// `inf` for noiseless low-resolution inputs.
    pub snr_db: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scene_size: 128,
            n_scenes: 3,
            n_endmembers: 5,
            smoothness: 2.0,
            stride: 16,
            train_ratio: 0.7,
            snr_db: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss_weights: LossWeights,
    /// Weight of the pixel MSE (on `[0, 1]` values) used by Models 1-4.
    pub pixel_weight: f64,
    /// Gradient-penalty coefficient; 0 disables it.
    pub gp_weight: f64,
    pub scale: usize,
    pub bands: usize,
    pub hr_patch: usize,
    pub adam: AdamConfig,
    pub pretrain_iters: usize,
    pub joint_iters: usize,
    pub batch_size: usize,
    pub critic_steps_per_gen: usize,
    pub loss_variant: LossVariant,
    pub contextual: ContextualVariant,
    pub ablation_model: u8,
    pub seed: u64,
    pub eval_period: usize,
    /// Checkpoint interval in joint iterations; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub is_classes: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub encoder: EncoderConfig,
    pub data: DataConfig,
}

impl TrainConfig {
    /// Desk-scale defaults: 16 bands, 64x64 HR patches, x2, 2 ResBlocks,
    /// 3 Maxpool blocks, batch 8, 500 joint iterations.
    pub fn desk() -> Self {
        Self::small(16, 2, 64)
    }

    /// The desk setup on 32x32 HR patches with a narrower generator, sized
    /// for several complete runs inside a test suite.
    pub fn desk_fast() -> Self {
        let mut c = Self::small(16, 2, 32);
        c.generator.feature_width = 8;
        c
    }

    fn small(bands: usize, scale: usize, hr_patch: usize) -> Self {
        let patch = (hr_patch, hr_patch);
        Self {
            loss_weights: LossWeights::default(),
            pixel_weight: 1.0,
            gp_weight: 10.0,
            scale,
            bands,
            hr_patch,
            adam: AdamConfig::default(),
            pretrain_iters: 200,
            joint_iters: 500,
            batch_size: 8,
            critic_steps_per_gen: 1,
            loss_variant: LossVariant::Ssrp,
            contextual: ContextualVariant::Template,
            ablation_model: 5,
            seed: 0,
            eval_period: 50,
            checkpoint_every: 0,
            is_classes: 10,
            generator: GeneratorConfig {
                bands,
                n_resblocks: 2,
                feature_width: 16,
                first_kernel: 3,
                residual_scale: 0.1,
                scale,
                conv: ConvKind::Spectral3d,
                upscale: UpscaleMode::Cascade,
                global_skip: true,
            },
            discriminator: DiscriminatorConfig {
                bands,
                n_maxpool_blocks: 3,
                base_channels: 16,
                dense_width: 64,
                patch,
                first_stride: 2,
                sigmoid: false,
            },
            encoder: EncoderConfig {
                bands,
                channel_schedule: vec![8, 8, 16, 16, 32, 32, 64, 64],
                latent_dim: 64,
                dense_width: 64,
                patch,
                first_stride: 1,
            },
            data: DataConfig::default(),
        }
    }

    /// Full-size networks and schedule.
    pub fn full(bands: usize, scale: usize, hr_patch: usize) -> Self {
        let patch = (hr_patch, hr_patch);
        Self {
            generator: GeneratorConfig::full(bands, scale),
            discriminator: DiscriminatorConfig::full(bands, patch),
            encoder: EncoderConfig::full(bands, patch),
            pretrain_iters: 5000,
            joint_iters: 10000,
            batch_size: 16,
            data: DataConfig {
                scene_size: hr_patch * 4,
                stride: hr_patch,
                ..DataConfig::default()
            },
            ..Self::small(bands, scale, hr_patch)
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        self.loss_weights.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        if self.joint_iters == 0 {
            return bad("joint_iters must be positive".into());
        }
        if self.batch_size == 0 || self.critic_steps_per_gen == 0 || self.eval_period == 0 {
            return bad("batch_size, critic_steps_per_gen and eval_period must be positive".into());
        }
        if !(1..=5).contains(&self.ablation_model) {
            return Err(TrainError::Ablation(self.ablation_model));
        }
        let a = self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam constants out of range".into());
        }
        if !(self.pixel_weight >= 0.0 && self.gp_weight >= 0.0) {
            return bad("pixel_weight and gp_weight must be non-negative".into());
        }
        if self.hr_patch % self.scale != 0 {
            return bad(format!("hr_patch {} not divisible by scale {}", self.hr_patch, self.scale));
        }
        let patch = (self.hr_patch, self.hr_patch);
        let g = &self.generator;
        if g.bands != self.bands || g.scale != self.scale {
            return bad("generator bands/scale disagree with the run".into());
        }
        if self.discriminator.bands != self.bands || self.discriminator.patch != patch {
            return bad("discriminator bands/patch disagree with the run".into());
        }
        if self.encoder.bands != self.bands || self.encoder.patch != patch {
            return bad("encoder bands/patch disagree with the run".into());
        }
        for n in [
            NetConfig::Generator(g.clone()),
            NetConfig::Discriminator(self.discriminator.clone()),
            NetConfig::Encoder(self.encoder.clone()),
        ] {
            n.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        }
        let d = &self.data;
        if d.scene_size < self.hr_patch || d.n_scenes == 0 || d.stride == 0 || !(d.train_ratio > 0.0 && d.train_ratio < 1.0) {
            return bad("data settings cannot produce a train/test split".into());
        }
        Ok(())
    }

    /// Line-oriented `key = value` text with `[section]` headers.
    pub fn to_text(&self) -> String {
        let mut top = KeyValues::default();
        let w = &self.loss_weights;
        top.set("seed", self.seed);
        top.set("scale", self.scale);
        top.set("bands", self.bands);
        top.set("hr_patch", self.hr_patch);
        top.set("pretrain_iters", self.pretrain_iters);
        top.set("joint_iters", self.joint_iters);
        top.set("batch_size", self.batch_size);
        top.set("critic_steps_per_gen", self.critic_steps_per_gen);
        top.set("loss_variant", self.loss_variant.name());
        top.set(
            "contextual",
            match self.contextual {
                ContextualVariant::Template => "template",
                ContextualVariant::Positional => "positional",
            },
        );
        top.set("ablation_model", self.ablation_model);
        top.set("eval_period", self.eval_period);
        top.set("checkpoint_every", self.checkpoint_every);
        top.set("is_classes", self.is_classes);
        top.set("lambda_spectral", w.lambda_spectral);
        top.set("eta_spatial", w.eta_spatial);
        top.set("sigma_adversarial", w.sigma_adversarial);
        top.set("mu_latent", w.mu_latent);
        top.set("pixel_weight", self.pixel_weight);
        top.set("gp_weight", self.gp_weight);
        let mut out = top.to_text();
        let mut adam = KeyValues::default();
        adam.set("lr", self.adam.lr);
        adam.set("beta1", self.adam.beta1);
        adam.set("beta2", self.adam.beta2);
        adam.set("eps", self.adam.eps);
        section(&mut out, "adam", &adam);
        let mut data = KeyValues::default();
        data.set("scene_size", self.data.scene_size);
        data.set("n_scenes", self.data.n_scenes);
        data.set("n_endmembers", self.data.n_endmembers);
        data.set("smoothness", self.data.smoothness);
        data.set("stride", self.data.stride);
        data.set("train_ratio", self.data.train_ratio);
        data.set("snr_db", self.data.snr_db);
        section(&mut out, "data", &data);
        for (name, net) in [
            ("generator", NetConfig::Generator(self.generator.clone())),
            ("discriminator", NetConfig::Discriminator(self.discriminator.clone())),
            ("encoder", NetConfig::Encoder(self.encoder.clone())),
        ] {
            let mut kv = KeyValues::default();
            net.write_kv(&mut kv);
            section(&mut out, name, &kv);
        }
        out
    }

    /// Parses [`TrainConfig::to_text`] output. Missing keys keep the values
    /// of `base`; network sections, when present, must be complete.
    pub fn from_text(text: &str, base: &TrainConfig) -> Result<TrainConfig, TrainError> {
        let kv = KeyValues::parse(text).map_err(|e| TrainError::Config(e.to_string()))?;
        let mut c = base.clone();
        let err = |e: KvError| TrainError::Config(e.to_string());
        macro_rules! opt {
            ($key:expr, $field:expr) => {
                if let Some(v) = kv.parsed($key).map_err(err)? {
                    $field = v;
                }
            };
        }
        opt!("seed", c.seed);
        opt!("scale", c.scale);
        opt!("bands", c.bands);
        opt!("hr_patch", c.hr_patch);
        opt!("pretrain_iters", c.pretrain_iters);
        opt!("joint_iters", c.joint_iters);
        opt!("batch_size", c.batch_size);
        opt!("critic_steps_per_gen", c.critic_steps_per_gen);
        opt!("ablation_model", c.ablation_model);
        opt!("eval_period", c.eval_period);
        opt!("checkpoint_every", c.checkpoint_every);
        opt!("is_classes", c.is_classes);
        opt!("lambda_spectral", c.loss_weights.lambda_spectral);
        opt!("eta_spatial", c.loss_weights.eta_spatial);
        opt!("sigma_adversarial", c.loss_weights.sigma_adversarial);
        opt!("mu_latent", c.loss_weights.mu_latent);
        opt!("pixel_weight", c.pixel_weight);
        opt!("gp_weight", c.gp_weight);
        opt!("adam.lr", c.adam.lr);
        opt!("adam.beta1", c.adam.beta1);
        opt!("adam.beta2", c.adam.beta2);
        opt!("adam.eps", c.adam.eps);
        opt!("data.scene_size", c.data.scene_size);
        opt!("data.n_scenes", c.data.n_scenes);
        opt!("data.n_endmembers", c.data.n_endmembers);
        opt!("data.smoothness", c.data.smoothness);
        opt!("data.stride", c.data.stride);
        opt!("data.train_ratio", c.data.train_ratio);
        opt!("data.snr_db", c.data.snr_db);
        if let Some(v) = kv.get("loss_variant") {
            c.loss_variant = LossVariant::parse(v).ok_or_else(|| TrainError::Config(format!("unknown loss_variant {v}")))?;
        }
        if let Some(v) = kv.get("contextual") {
            c.contextual = match v {
                "template" => ContextualVariant::Template,
                "positional" | "literal" => ContextualVariant::Positional,
                o => return Err(TrainError::Config(format!("unknown contextual mode {o}"))),
            };
        }
        // omitted network sections follow the top-level shape keys
        let patch = (c.hr_patch, c.hr_patch);
        c.generator.bands = c.bands;
        c.generator.scale = c.scale;
        c.discriminator.bands = c.bands;
        c.discriminator.patch = patch;
        c.encoder.bands = c.bands;
        c.encoder.patch = patch;
        for name in ["generator", "discriminator", "encoder"] {
            let sub = kv.section(name);
            if sub.keys().next().is_none() {
                continue;
            }
            match NetConfig::read_kv(&sub).map_err(|e| TrainError::Config(format!("[{name}] {e}")))? {
                NetConfig::Generator(g) if name == "generator" => c.generator = g,
                NetConfig::Discriminator(d) if name == "discriminator" => c.discriminator = d,
                NetConfig::Encoder(e) if name == "encoder" => c.encoder = e,
                other => return Err(TrainError::Config(format!("[{name}] holds a {} description", other.kind()))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Applies the `HSISR_SEED` environment override, if set.
    pub fn with_env_seed(mut self) -> Result<Self, TrainError> {
        if let Ok(v) = std::env::var("HSISR_SEED") {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| TrainError::Config(format!("HSISR_SEED={v} is not an integer")))?;
        }
        Ok(self)
    }
}

fn section(out: &mut String, name: &str, kv: &KeyValues) {
    out.push_str(&format!("\n[{name}]\n"));
    out.push_str(&kv.to_text());
}

/// What the generator is optimised for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Weighted spectral, spatial, adversarial and latent terms.
    Ssrp,
    /// Pixel MSE plus the adversarial term (and the latent term when an
    /// encoder is present).
    PixelAdversarial,
}

/// Effective architecture and objective of one ablation model.
#[derive(Clone, Debug, PartialEq)]
pub struct Ablation {
    pub model: u8,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub encoder: Option<EncoderConfig>,
    pub objective: Objective,
}

impl Ablation {
    /// Short descriptor of the switches, one `key = value` per line.
    pub fn describe(&self) -> String {
        format!(
            "model = {}\nconv = {}\nupscale = {}\nsigmoid = {}\nencoder = {}\nobjective = {}\n",
            self.model,
            match self.generator.conv {
                ConvKind::Spectral3d => "spectral3d",
                ConvKind::PerBand2d => "perband2d",
            },
            match self.generator.upscale {
                UpscaleMode::Cascade => "cascade",
                UpscaleMode::SingleStage => "single",
                UpscaleMode::ProgressiveResize => "resize",
            },
            self.discriminator.sigmoid,
            self.encoder.is_some(),
            match self.objective {
                Objective::Ssrp => "ssrp",
                Objective::PixelAdversarial => "pixel_adversarial",
            }
        )
    }
}

/// Model 1 keeps the spectral 3-D generator and uses the traditional
/// substitutes everywhere else; each later model swaps one back in:
/// 2 the sub-pixel upscaling, 3 the unbounded critic, 4 the encoder,
/// 5 the full objective.
pub fn apply_ablation(config: &TrainConfig) -> Result<Ablation, TrainError> {
    let m = config.ablation_model;
    if !(1..=5).contains(&m) {
        return Err(TrainError::Ablation(m));
    }
    let mut generator = config.generator.clone();
    let mut discriminator = config.discriminator.clone();
    if m < 2 {
        generator.upscale = UpscaleMode::ProgressiveResize;
    }
    if m < 3 {
        discriminator.sigmoid = true;
    }
    let uses_encoder = m >= 4 && config.loss_variant != LossVariant::WassersteinPlain;
    Ok(Ablation {
        model: m,
        generator,
        discriminator,
        encoder: uses_encoder.then(|| config.encoder.clone()),
        objective: if m == 5 { Objective::Ssrp } else { Objective::PixelAdversarial },
    })
}
