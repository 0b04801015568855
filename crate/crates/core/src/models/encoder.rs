//! Latent encoder: eight convolutions (stride 2 wherever the channel count
//! doubles) followed by two dense layers.

use hsisr_tensor::{Graph, Tensor, Var};

use super::{
    bands_as_channels, conv2d_geom, conv_bias, cubes_to_tensor, dense, strided_extent, Bound, EncoderConfig, ModelError, NetConfig,
    NetworkWeights, ParamSpec,
};
use crate::hsi_data::HsiCube;

const LEAK: f64 = 0.2;

fn strides(c: &EncoderConfig) -> Vec<usize> {
    let s = &c.channel_schedule;
    (0..s.len())
        .map(|i| {
            if i == 0 {
                c.first_stride
            } else if s[i] == 2 * s[i - 1] {
                2
            } else {
                1
            }
        })
        .collect()
}

pub(crate) fn final_extent(c: &EncoderConfig) -> (usize, usize) {
    strides(c)
        .iter()
        .fold(c.patch, |(h, w), s| (strided_extent(h, *s), strided_extent(w, *s)))
}

fn flat_len(c: &EncoderConfig) -> usize {
    let (h, w) = final_extent(c);
    c.channel_schedule.last().copied().unwrap_or(0) * h * w
}

pub(crate) fn layout(c: &EncoderConfig) -> Vec<ParamSpec> {
    let mut p = Vec::new();
    let mut prev = c.bands;
    for (i, &ch) in c.channel_schedule.iter().enumerate() {
        p.push(ParamSpec::weight(format!("conv{i}.w"), &[ch, prev, 1, 3, 3]));
        p.push(ParamSpec::constant(format!("conv{i}.b"), &[ch], 0.0, true));
        prev = ch;
    }
    p.push(ParamSpec::dense("fc1.w", flat_len(c), c.dense_width));
    p.push(ParamSpec::constant("fc1.b", &[c.dense_width], 0.0, true));
    p.push(ParamSpec::dense("fc2.w", c.dense_width, c.latent_dim));
    p.push(ParamSpec::constant("fc2.b", &[c.latent_dim], 0.0, true));
    p
}

pub(crate) fn config(w: &NetworkWeights) -> &EncoderConfig {
    match &w.config {
        NetConfig::Encoder(c) => c,
        other => panic!("expected encoder weights, got {}", other.kind()),
    }
}

/// `(N, 1, bands, H, W)` patches to `(N, latent_dim)` codes.
pub fn encoder_forward(g: &mut Graph, w: &NetworkWeights, b: &Bound, patch: Var) -> Result<Var, ModelError> {
    let c = config(w);
    let s = g.shape(patch).to_vec();
    if s.len() != 5 || s[1] != 1 || s[2] != c.bands || (s[3], s[4]) != c.patch {
        return Err(ModelError::Input {
            expected: format!("(N, 1, {}, {}, {})", c.bands, c.patch.0, c.patch.1),
            got: s,
        });
    }
    let mut h = bands_as_channels(g, patch);
    for (i, st) in strides(c).into_iter().enumerate() {
        h = conv_bias(
            g,
            h,
            b.var(w, &format!("conv{i}.w")),
            b.var(w, &format!("conv{i}.b")),
            conv2d_geom(st),
        );
        h = g.leaky_relu(h, LEAK);
    }
    let flat = g.reshape(h, &[s[0], flat_len(c)]);
    let d = dense(g, flat, b.var(w, "fc1.w"), b.var(w, "fc1.b"));
    let d = g.leaky_relu(d, LEAK);
    Ok(dense(g, d, b.var(w, "fc2.w"), b.var(w, "fc2.b")))
}

/// Latent codes of whole cubes, `(N, latent_dim)`.
pub fn encode(w: &NetworkWeights, patches: &[&HsiCube]) -> Result<Tensor, ModelError> {
    let t = cubes_to_tensor(patches)?;
    let mut g = Graph::new();
    let bound = w.bind(&mut g, false);
    let x = g.constant(t);
    let z = encoder_forward(&mut g, w, &bound, x)?;
    Ok(g.value(z).clone())
}
