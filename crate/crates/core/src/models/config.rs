use crate::kv::{format_list, parse_list, KeyValues, KvError};

use super::ModelError;

/// How feature maps are convolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    /// Kernels span neighbouring bands (3-D spectral-spatial convolution).
    Spectral3d,
    /// Kernels have depth one: every band is filtered independently.
    PerBand2d,
}

/// Path from low to high resolution inside the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpscaleMode {
    /// `log2(k)` stages of conv + x2 sub-pixel shuffle.
    Cascade,
    /// One conv to `k*k` times the channels, one x`k` shuffle.
    SingleStage,
    /// Nearest-neighbour x2 resize followed by a conv, repeated.
    ProgressiveResize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub bands: usize,
    pub n_resblocks: usize,
    pub feature_width: usize,
    /// Spatial extent of the first kernel; its depth covers all bands.
    pub first_kernel: usize,
    pub residual_scale: f64,
    pub scale: usize,
    pub conv: ConvKind,
    pub upscale: UpscaleMode,
    /// Add the bicubic enlargement of the input to the output, so the
    /// network body predicts a residual.
    pub global_skip: bool,
}

impl GeneratorConfig {
    /// Full-size architecture for `bands` bands at factor `scale`.
    pub fn full(bands: usize, scale: usize) -> Self {
        Self {
            bands,
            n_resblocks: 34,
            feature_width: 32,
            first_kernel: 16,
            residual_scale: 0.1,
            scale,
            conv: ConvKind::Spectral3d,
            upscale: UpscaleMode::Cascade,
            global_skip: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.bands == 0 || self.feature_width == 0 || self.first_kernel == 0 {
            return bad("bands, feature_width and first_kernel must be positive");
        }
        if self.n_resblocks < 1 {
            return bad("n_resblocks must be at least 1");
        }
        if !matches!(self.scale, 2 | 4 | 8) {
            return bad("scale must be 2, 4 or 8");
        }
        if !(self.residual_scale > 0.0 && self.residual_scale <= 1.0) {
            return bad("residual_scale must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub bands: usize,
    pub n_maxpool_blocks: usize,
    pub base_channels: usize,
    pub dense_width: usize,
    /// Spatial size `(height, width)` of the patches it scores.
    pub patch: (usize, usize),
    /// Stride of the first convolution.
    pub first_stride: usize,
    /// Squash the score through a sigmoid (classic discriminator).
    pub sigmoid: bool,
}

impl DiscriminatorConfig {
    pub fn full(bands: usize, patch: (usize, usize)) -> Self {
        Self {
            bands,
            n_maxpool_blocks: 8,
            base_channels: 64,
            dense_width: 1024,
            patch,
            first_stride: 1,
            sigmoid: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_maxpool_blocks < 1 {
            return Err(ModelError::Config("n_maxpool_blocks must be at least 1".into()));
        }
        if self.bands == 0 || self.base_channels == 0 || self.dense_width == 0 || self.first_stride == 0 {
            return Err(ModelError::Config("discriminator sizes must be positive".into()));
        }
        let (h, w) = super::discriminator::phi_extent(self);
        if h == 0 || w == 0 {
            return Err(ModelError::Config(format!("patch {:?} too small for the block stack", self.patch)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub bands: usize,
    /// Output channels of the eight convolutions. A layer that doubles
    /// the channel count also halves the spatial extent.
    pub channel_schedule: Vec<usize>,
    pub latent_dim: usize,
    pub dense_width: usize,
    pub patch: (usize, usize),
    pub first_stride: usize,
}

impl EncoderConfig {
    pub fn full(bands: usize, patch: (usize, usize)) -> Self {
        Self {
            bands,
            channel_schedule: vec![64, 64, 128, 128, 256, 256, 512, 512],
            latent_dim: 1024,
            dense_width: 1024,
            patch,
            first_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let s = &self.channel_schedule;
        if s.len() != 8 {
            return Err(ModelError::Config("encoder needs exactly 8 convolutions".into()));
        }
        if s[0] == 0 || s.windows(2).any(|w| w[1] != w[0] && w[1] != 2 * w[0]) {
            return Err(ModelError::Config("channel schedule must stay level or double".into()));
        }
        if self.latent_dim == 0 || self.dense_width == 0 || self.first_stride == 0 {
            return Err(ModelError::Config("encoder sizes must be positive".into()));
        }
        let (h, w) = super::encoder::final_extent(self);
        if h == 0 || w == 0 {
            return Err(ModelError::Config(format!("patch {:?} too small for the encoder", self.patch)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NetConfig {
    Generator(GeneratorConfig),
    Discriminator(DiscriminatorConfig),
    Encoder(EncoderConfig),
}

impl NetConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            NetConfig::Generator(_) => "generator",
            NetConfig::Discriminator(_) => "discriminator",
            NetConfig::Encoder(_) => "encoder",
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            NetConfig::Generator(c) => c.validate(),
            NetConfig::Discriminator(c) => c.validate(),
            NetConfig::Encoder(c) => c.validate(),
        }
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("network", self.kind());
        match self {
            NetConfig::Generator(c) => {
                kv.set("bands", c.bands);
                kv.set("n_resblocks", c.n_resblocks);
                kv.set("feature_width", c.feature_width);
                kv.set("first_kernel", c.first_kernel);
                kv.set("residual_scale", c.residual_scale);
                kv.set("scale", c.scale);
                kv.set(
                    "conv",
                    match c.conv {
                        ConvKind::Spectral3d => "spectral3d",
                        ConvKind::PerBand2d => "perband2d",
                    },
                );
                kv.set(
                    "upscale",
                    match c.upscale {
                        UpscaleMode::Cascade => "cascade",
                        UpscaleMode::SingleStage => "single",
                        UpscaleMode::ProgressiveResize => "resize",
                    },
                );
                kv.set("global_skip", c.global_skip);
            }
            NetConfig::Discriminator(c) => {
                kv.set("bands", c.bands);
                kv.set("n_maxpool_blocks", c.n_maxpool_blocks);
                kv.set("base_channels", c.base_channels);
                kv.set("dense_width", c.dense_width);
                kv.set("patch", format_list(&[c.patch.0, c.patch.1]));
                kv.set("first_stride", c.first_stride);
                kv.set("sigmoid", c.sigmoid);
            }
            NetConfig::Encoder(c) => {
                kv.set("bands", c.bands);
                kv.set("channel_schedule", format_list(&c.channel_schedule));
                kv.set("latent_dim", c.latent_dim);
                kv.set("dense_width", c.dense_width);
                kv.set("patch", format_list(&[c.patch.0, c.patch.1]));
                kv.set("first_stride", c.first_stride);
            }
        }
    }

    pub fn read_kv(kv: &KeyValues) -> Result<NetConfig, ModelError> {
        let err = |e: KvError| ModelError::Config(e.to_string());
        let num = |k: &str| kv.require_parsed::<usize>(k).map_err(err);
        let pair = |k: &str| -> Result<(usize, usize), ModelError> {
            let v: Vec<usize> = parse_list(kv.require(k).map_err(err)?).ok_or_else(|| ModelError::Config(format!("bad {k}")))?;
            match v.as_slice() {
                [h, w] => Ok((*h, *w)),
                _ => Err(ModelError::Config(format!("{k} needs two entries"))),
            }
        };
        let cfg = match kv.require("network").map_err(err)? {
            "generator" => NetConfig::Generator(GeneratorConfig {
                bands: num("bands")?,
                n_resblocks: num("n_resblocks")?,
                feature_width: num("feature_width")?,
                first_kernel: num("first_kernel")?,
                residual_scale: kv.require_parsed("residual_scale").map_err(err)?,
                scale: num("scale")?,
                conv: match kv.require("conv").map_err(err)? {
                    "spectral3d" => ConvKind::Spectral3d,
                    "perband2d" => ConvKind::PerBand2d,
                    o => return Err(ModelError::Config(format!("unknown conv kind {o}"))),
                },
                upscale: match kv.require("upscale").map_err(err)? {
                    "cascade" => UpscaleMode::Cascade,
                    "single" => UpscaleMode::SingleStage,
                    "resize" => UpscaleMode::ProgressiveResize,
                    o => return Err(ModelError::Config(format!("unknown upscale mode {o}"))),
                },
                global_skip: kv.parsed("global_skip").map_err(err)?.unwrap_or(false),
            }),
            "discriminator" => NetConfig::Discriminator(DiscriminatorConfig {
                bands: num("bands")?,
                n_maxpool_blocks: num("n_maxpool_blocks")?,
                base_channels: num("base_channels")?,
                dense_width: num("dense_width")?,
                patch: pair("patch")?,
                first_stride: num("first_stride")?,
                sigmoid: kv.require_parsed("sigmoid").map_err(err)?,
            }),
            "encoder" => NetConfig::Encoder(EncoderConfig {
                bands: num("bands")?,
                channel_schedule: parse_list(kv.require("channel_schedule").map_err(err)?)
                    .ok_or_else(|| ModelError::Config("bad channel_schedule".into()))?,
                latent_dim: num("latent_dim")?,
                dense_width: num("dense_width")?,
                patch: pair("patch")?,
                first_stride: num("first_stride")?,
            }),
            other => return Err(ModelError::Config(format!("unknown network {other}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
