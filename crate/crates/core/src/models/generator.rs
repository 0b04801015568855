//! First spectral-spatial convolution, residual trunk, sub-pixel upscaling
//! and a 1x1x1 channel decoder.

use hsisr_tensor::{pixel_shuffle, pixel_unshuffle, ConvGeom, Graph, Tensor, Var};

use super::{conv_bias, Bound, ConvKind, GeneratorConfig, ModelError, NetConfig, NetworkWeights, ParamSpec, UpscaleMode};
use crate::hsi_data::{bicubic_upsample_planes, HsiCube};

fn body_kernel(c: &GeneratorConfig) -> [usize; 3] {
    match c.conv {
        ConvKind::Spectral3d => [3, 3, 3],
        ConvKind::PerBand2d => [1, 3, 3],
    }
}

fn first_kernel(c: &GeneratorConfig) -> [usize; 3] {
    let depth = match c.conv {
        ConvKind::Spectral3d => c.bands,
        ConvKind::PerBand2d => 1,
    };
    [depth, c.first_kernel, c.first_kernel]
}

fn stages(c: &GeneratorConfig) -> usize {
    c.scale.trailing_zeros() as usize
}

pub(crate) fn layout(c: &GeneratorConfig) -> Vec<ParamSpec> {
    let f = c.feature_width;
    let k = body_kernel(c);
    let fk = first_kernel(c);
    let mut p = vec![
        ParamSpec::weight("first.w", &[f, 1, fk[0], fk[1], fk[2]]),
        ParamSpec::constant("first.b", &[f], 0.0, true),
    ];
    for i in 0..c.n_resblocks {
        for conv in ["conv1", "conv2"] {
            p.push(ParamSpec::weight(format!("res{i}.{conv}.w"), &[f, f, k[0], k[1], k[2]]));
            p.push(ParamSpec::constant(format!("res{i}.{conv}.b"), &[f], 0.0, true));
        }
        p.push(ParamSpec::constant(format!("res{i}.scale"), &[1], c.residual_scale, false));
    }
    let up_out = |stage_factor: usize| f * stage_factor * stage_factor;
    match c.upscale {
        UpscaleMode::Cascade => {
            for s in 0..stages(c) {
                p.push(ParamSpec::weight(format!("up{s}.w"), &[up_out(2), f, k[0], k[1], k[2]]));
                p.push(ParamSpec::constant(format!("up{s}.b"), &[up_out(2)], 0.0, true));
            }
        }
        UpscaleMode::SingleStage => {
            p.push(ParamSpec::weight("up0.w", &[up_out(c.scale), f, k[0], k[1], k[2]]));
            p.push(ParamSpec::constant("up0.b", &[up_out(c.scale)], 0.0, true));
        }
        UpscaleMode::ProgressiveResize => {
            for s in 0..stages(c) {
                p.push(ParamSpec::weight(format!("up{s}.w"), &[f, f, k[0], k[1], k[2]]));
                p.push(ParamSpec::constant(format!("up{s}.b"), &[f], 0.0, true));
            }
        }
    }
    if c.global_skip {
        // start from the bicubic estimate exactly
        p.push(ParamSpec::constant("dec.w", &[1, f, 1, 1, 1], 0.0, true));
    } else {
        p.push(ParamSpec::weight("dec.w", &[1, f, 1, 1, 1]));
    }
    p.push(ParamSpec::constant("dec.b", &[1], 0.0, true));
    p
}

pub(crate) fn config(w: &NetworkWeights) -> &GeneratorConfig {
    match &w.config {
        NetConfig::Generator(c) => c,
        other => panic!("expected generator weights, got {}", other.kind()),
    }
}

/// `x + scale * conv2(relu(conv1(x)))` for residual block `i`.
pub fn resblock_forward(g: &mut Graph, w: &NetworkWeights, b: &Bound, i: usize, x: Var) -> Var {
    let c = config(w);
    let geom = ConvGeom::same(body_kernel(c));
    let h = conv_bias(
        g,
        x,
        b.var(w, &format!("res{i}.conv1.w")),
        b.var(w, &format!("res{i}.conv1.b")),
        geom,
    );
    let h = g.relu(h);
    let h = conv_bias(
        g,
        h,
        b.var(w, &format!("res{i}.conv2.w")),
        b.var(w, &format!("res{i}.conv2.b")),
        geom,
    );
    let scale = w.get(&format!("res{i}.scale")).expect("scale constant").item();
    let h = g.scale(h, scale);
    g.add(x, h)
}

/// Super-resolves an `(N, 1, bands, h, w)` batch to `(N, 1, bands, h*k, w*k)`.
pub fn generator_forward(g: &mut Graph, w: &NetworkWeights, b: &Bound, lr: Var) -> Result<Var, ModelError> {
    let c = config(w);
    let s = g.shape(lr).to_vec();
    if s.len() != 5 || s[1] != 1 || s[2] != c.bands {
        return Err(ModelError::Input {
            expected: format!("(N, 1, {}, H, W)", c.bands),
            got: s,
        });
    }
    let x = g.scale(lr, 1.0 / 255.0);
    let mut h = conv_bias(g, x, b.var(w, "first.w"), b.var(w, "first.b"), ConvGeom::same(first_kernel(c)));
    for i in 0..c.n_resblocks {
        h = resblock_forward(g, w, b, i, h);
    }
    let geom = ConvGeom::same(body_kernel(c));
    match c.upscale {
        UpscaleMode::Cascade => {
            for st in 0..stages(c) {
                h = conv_bias(g, h, b.var(w, &format!("up{st}.w")), b.var(w, &format!("up{st}.b")), geom);
                h = g.pixel_shuffle(h, 2);
            }
        }
        UpscaleMode::SingleStage => {
            h = conv_bias(g, h, b.var(w, "up0.w"), b.var(w, "up0.b"), geom);
            h = g.pixel_shuffle(h, c.scale);
        }
        UpscaleMode::ProgressiveResize => {
            for st in 0..stages(c) {
                h = g.upsample_nearest(h, 2);
                h = conv_bias(g, h, b.var(w, &format!("up{st}.w")), b.var(w, &format!("up{st}.b")), geom);
            }
        }
    }
    let y = conv_bias(g, h, b.var(w, "dec.w"), b.var(w, "dec.b"), ConvGeom::same([1, 1, 1]));
    let y = g.scale(y, 255.0);
    if !c.global_skip {
        return Ok(y);
    }
    // the skip is a fixed function of the data and carries no gradient to `lr`
    let up = bicubic_upsample_planes(g.value(lr).data(), s[0] * s[2], s[3], s[4], c.scale);
    let up = g.constant(Tensor::new(&[s[0], 1, s[2], s[3] * c.scale, s[4] * c.scale], up)?);
    Ok(g.add(y, up))
}

/// Inference on whole cubes.
pub fn super_resolve(w: &NetworkWeights, lr: &[&HsiCube]) -> Result<Vec<HsiCube>, ModelError> {
    let t = super::cubes_to_tensor(lr)?;
    let mut g = Graph::new();
    let bound = w.bind(&mut g, false);
    let x = g.constant(t);
    let y = generator_forward(&mut g, w, &bound, x)?;
    super::tensor_to_cubes(g.value(y), lr[0].wavelengths())
}

/// `(N, C*k*k, D, H/k, W/k) -> (N, C, D, H, W)`; pure rearrangement.
pub fn upscale_shuffle(features: &Tensor, k: usize) -> Result<Tensor, ModelError> {
    Ok(pixel_shuffle(features, k)?)
}

pub fn upscale_unshuffle(features: &Tensor, k: usize) -> Result<Tensor, ModelError> {
    Ok(pixel_unshuffle(features, k)?)
}
