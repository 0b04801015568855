//! The generator, the critic and the latent encoder as forward functions
//! over explicit weight containers.
//!
//! Batches are `(N, 1, bands, H, W)` tensors in radiance units (`[0, 255]`).
//! Each network normalises its own input.

mod checkpoint;
mod config;
pub mod discriminator;
pub mod encoder;
pub mod generator;

use hsisr_tensor::{ConvGeom, Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::hsi_data::HsiCube;

pub use checkpoint::{load_weights, read_weights, save_weights, write_weights};
pub use config::{ConvKind, DiscriminatorConfig, EncoderConfig, GeneratorConfig, NetConfig, UpscaleMode};
pub use discriminator::{
    discriminator_forward, discriminator_taps, update_running_stats, DiscMode, DiscTaps, DiscriminatorOutputs, TapValues,
};
pub use encoder::{encode, encoder_forward};
pub use generator::{generator_forward, resblock_forward, super_resolve, upscale_shuffle, upscale_unshuffle};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input {got:?} does not match the network ({expected})")]
    Input { expected: String, got: Vec<usize> },
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o on {path}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Shape(#[from] hsisr_tensor::ShapeError),
}

/// How a parameter is initialised.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// Gaussian with standard deviation `sqrt(2 / fan_in)`.
    FanIn(usize),
    Const(f64),
}

pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    pub trainable: bool,
}

impl ParamSpec {
    pub fn weight(name: impl Into<String>, shape: &[usize]) -> Self {
        let fan_in = shape[1..].iter().product::<usize>().max(1);
        Self::with(name, shape, Init::FanIn(fan_in), true)
    }

    /// Dense weight stored `(in, out)`.
    pub fn dense(name: impl Into<String>, fan_in: usize, out: usize) -> Self {
        Self::with(name, &[fan_in, out], Init::FanIn(fan_in), true)
    }

    pub fn constant(name: impl Into<String>, shape: &[usize], value: f64, trainable: bool) -> Self {
        Self::with(name, shape, Init::Const(value), trainable)
    }

    fn with(name: impl Into<String>, shape: &[usize], init: Init, trainable: bool) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
            trainable,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    /// Non-trainable entries (running statistics, scaling constants) are
    /// never touched by the optimiser.
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    pub config: NetConfig,
    pub params: Vec<Param>,
    pub init_seed: u64,
}

pub(crate) fn layout(config: &NetConfig) -> Vec<ParamSpec> {
    match config {
        NetConfig::Generator(c) => generator::layout(c),
        NetConfig::Discriminator(c) => discriminator::layout(c),
        NetConfig::Encoder(c) => encoder::layout(c),
    }
}

/// Deterministic fan-in scaled Gaussian initialisation.
pub fn init_weights(config: &NetConfig, seed: u64) -> Result<NetworkWeights, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = layout(config)
        .into_iter()
        .map(|s| {
            let n: usize = s.shape.iter().product();
            let data = match s.init {
                Init::FanIn(fan_in) => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    (0..n).map(|_| normal.sample(&mut rng)).collect()
                }
                Init::Const(v) => vec![v; n],
            };
            Param {
                name: s.name,
                tensor: Tensor::new(&s.shape, data).expect("layout shape"),
                trainable: s.trainable,
            }
        })
        .collect();
    Ok(NetworkWeights {
        config: config.clone(),
        params,
        init_seed: seed,
    })
}

impl NetworkWeights {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.params[i].tensor)
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, t: Tensor) -> Result<(), ModelError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| ModelError::Architecture(format!("no parameter {name}")))?;
        if self.params[i].tensor.shape() != t.shape() {
            return Err(ModelError::Architecture(format!(
                "{name}: shape {:?} vs {:?}",
                t.shape(),
                self.params[i].tensor.shape()
            )));
        }
        self.params[i].tensor = t;
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.tensor.all_finite())
    }

    /// Records every parameter on `g`. Trainable parameters become
    /// variables when `differentiable` is set; everything else is constant.
    pub fn bind(&self, g: &mut Graph, differentiable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if differentiable && p.trainable {
                    g.variable(p.tensor.clone())
                } else {
                    g.constant(p.tensor.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Checks that the layout matches `config` exactly.
    pub(crate) fn check_layout(&self) -> Result<(), ModelError> {
        let want = layout(&self.config);
        if want.len() != self.params.len() {
            return Err(ModelError::Architecture(format!(
                "{} parameters stored, layout has {}",
                self.params.len(),
                want.len()
            )));
        }
        for (s, p) in want.iter().zip(&self.params) {
            if s.name != p.name || s.shape != p.tensor.shape() {
                return Err(ModelError::Architecture(format!(
                    "{} {:?} stored where layout has {} {:?}",
                    p.name,
                    p.tensor.shape(),
                    s.name,
                    s.shape
                )));
            }
        }
        Ok(())
    }
}

/// Graph handles for one [`NetworkWeights`], in parameter order.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, w: &NetworkWeights, name: &str) -> Var {
        let i = w.index_of(name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.vars[i]
    }
}

/// Stacks equally sized cubes into an `(N, 1, bands, H, W)` tensor.
pub fn cubes_to_tensor(cubes: &[&HsiCube]) -> Result<Tensor, ModelError> {
    let first = cubes.first().ok_or_else(|| ModelError::Input {
        expected: "a non-empty batch".into(),
        got: vec![0],
    })?;
    let (b, h, w) = (first.bands(), first.height(), first.width());
    let mut data = Vec::with_capacity(cubes.len() * b * h * w);
    for c in cubes {
        if (c.bands(), c.height(), c.width()) != (b, h, w) {
            return Err(ModelError::Input {
                expected: format!("{b}x{h}x{w} cubes"),
                got: vec![c.bands(), c.height(), c.width()],
            });
        }
        data.extend(c.data().iter().map(|v| *v as f64));
    }
    Ok(Tensor::new(&[cubes.len(), 1, b, h, w], data)?)
}

/// Splits an `(N, 1, bands, H, W)` tensor into cubes (values rounded to f32).
pub fn tensor_to_cubes(t: &Tensor, wavelengths: &[f64]) -> Result<Vec<HsiCube>, ModelError> {
    let s = t.shape();
    if s.len() != 5 || s[1] != 1 || s[2] != wavelengths.len() {
        return Err(ModelError::Input {
            expected: format!("(N, 1, {}, H, W)", wavelengths.len()),
            got: s.to_vec(),
        });
    }
    let per = s[2] * s[3] * s[4];
    t.data()
        .chunks(per)
        .map(|chunk| {
            let data = chunk.iter().map(|v| *v as f32).collect();
            HsiCube::new(s[3], s[4], s[2], data, wavelengths.to_vec()).map_err(|e| ModelError::Config(e.to_string()))
        })
        .collect()
}

pub(crate) fn conv_bias(g: &mut Graph, x: Var, w: Var, b: Var, geom: ConvGeom) -> Var {
    let y = g.conv3d(x, w, geom);
    g.add_bias(y, b)
}

/// Fully connected layer on an `(N, in)` input with weight `(in, out)`.
pub(crate) fn dense(g: &mut Graph, x: Var, w: Var, b: Var) -> Var {
    let y = g.matmul(x, w);
    g.add_bias(y, b)
}

/// `(N, 1, bands, H, W)` in radiance units to `(N, bands, 1, H, W)` in
/// `[-1, 1]`, the input convention of the critic and the encoder.
pub(crate) fn bands_as_channels(g: &mut Graph, x: Var) -> Var {
    let s = g.shape(x).to_vec();
    let y = g.reshape(x, &[s[0], s[2], 1, s[3], s[4]]);
    let y = g.scale(y, 1.0 / 127.5);
    g.add_scalar(y, -1.0)
}

/// Output extent of a 3x3, pad-1 convolution with the given stride.
pub(crate) fn strided_extent(n: usize, stride: usize) -> usize {
    if n == 0 {
        0
    } else {
        (n - 1) / stride + 1
    }
}

pub(crate) fn conv2d_geom(stride: usize) -> ConvGeom {
    ConvGeom::new([1, stride, stride], [0, 1, 1], [0, 1, 1])
}
