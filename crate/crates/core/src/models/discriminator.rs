//! Critic: one convolution, a stack of conv + batch-norm + ReLU blocks
//! and two dense layers. Bands are treated as input channels.

use hsisr_tensor::{BatchStats, Graph, NormMode, Tensor, Var};

use super::{
    bands_as_channels, conv2d_geom, conv_bias, cubes_to_tensor, dense, strided_extent, Bound, DiscriminatorConfig, ModelError, NetConfig,
    NetworkWeights, ParamSpec,
};
use crate::hsi_data::HsiCube;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;
const LEAK: f64 = 0.2;

fn block_channels(c: &DiscriminatorConfig, i: usize) -> usize {
    // 1-indexed block i
    c.base_channels << (i / 2)
}

fn block_stride(i: usize) -> usize {
    if i % 2 == 0 {
        2
    } else {
        1
    }
}

/// Spatial extent of the last block's output.
pub(crate) fn phi_extent(c: &DiscriminatorConfig) -> (usize, usize) {
    let (mut h, mut w) = (strided_extent(c.patch.0, c.first_stride), strided_extent(c.patch.1, c.first_stride));
    for i in 1..=c.n_maxpool_blocks {
        h = strided_extent(h, block_stride(i));
        w = strided_extent(w, block_stride(i));
    }
    (h, w)
}

fn flat_len(c: &DiscriminatorConfig) -> usize {
    let (h, w) = phi_extent(c);
    block_channels(c, c.n_maxpool_blocks) * h * w
}

pub(crate) fn layout(c: &DiscriminatorConfig) -> Vec<ParamSpec> {
    let mut p = vec![
        ParamSpec::weight("first.w", &[c.base_channels, c.bands, 1, 3, 3]),
        ParamSpec::constant("first.b", &[c.base_channels], 0.0, true),
    ];
    let mut prev = c.base_channels;
    for i in 1..=c.n_maxpool_blocks {
        let ch = block_channels(c, i);
        p.push(ParamSpec::weight(format!("mp{i}.w"), &[ch, prev, 1, 3, 3]));
        p.push(ParamSpec::constant(format!("mp{i}.gamma"), &[ch], 1.0, true));
        p.push(ParamSpec::constant(format!("mp{i}.beta"), &[ch], 0.0, true));
        p.push(ParamSpec::constant(format!("mp{i}.running_mean"), &[ch], 0.0, false));
        p.push(ParamSpec::constant(format!("mp{i}.running_var"), &[ch], 1.0, false));
        prev = ch;
    }
    p.push(ParamSpec::dense("fc1.w", flat_len(c), c.dense_width));
    p.push(ParamSpec::constant("fc1.b", &[c.dense_width], 0.0, true));
    p.push(ParamSpec::dense("fc2.w", c.dense_width, 1));
    p.push(ParamSpec::constant("fc2.b", &[1], 0.0, true));
    p
}

pub(crate) fn config(w: &NetworkWeights) -> &DiscriminatorConfig {
    match &w.config {
        NetConfig::Discriminator(c) => c,
        other => panic!("expected discriminator weights, got {}", other.kind()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscMode {
    /// Batch statistics; the caller may fold them into the running ones.
    Train,
    /// Running statistics; the output of a sample does not depend on the
    /// rest of the batch.
    Eval,
}

/// The four signals read off one pass.
#[derive(Clone, Copy, Debug)]
pub struct DiscTaps {
    /// `(N,)` critic output; unbounded unless the config asks for a sigmoid.
    pub score: Var,
    /// `(N,)` score before the optional sigmoid.
    pub logit: Var,
    /// Pre-activation output of the first convolution, `(N, C, 1, h, w)`.
    pub feat_mu: Var,
    /// Pre-activation (batch-normalised) output of the last block.
    pub feat_phi: Var,
    /// `(N, flat)` activations of the last block.
    pub penultimate: Var,
}

pub struct DiscriminatorOutputs {
    pub taps: DiscTaps,
    /// `(block, statistics)` for every block when run in [`DiscMode::Train`].
    pub batch_stats: Vec<(usize, BatchStats)>,
}

pub fn discriminator_forward(
    g: &mut Graph,
    w: &NetworkWeights,
    b: &Bound,
    patch: Var,
    mode: DiscMode,
) -> Result<DiscriminatorOutputs, ModelError> {
    let c = config(w);
    let s = g.shape(patch).to_vec();
    if s.len() != 5 || s[1] != 1 || s[2] != c.bands || (s[3], s[4]) != c.patch {
        return Err(ModelError::Input {
            expected: format!("(N, 1, {}, {}, {})", c.bands, c.patch.0, c.patch.1),
            got: s,
        });
    }
    let n = s[0];
    let x = bands_as_channels(g, patch);
    let feat_mu = conv_bias(g, x, b.var(w, "first.w"), b.var(w, "first.b"), conv2d_geom(c.first_stride));
    let mut h = g.leaky_relu(feat_mu, LEAK);
    let mut feat_phi = feat_mu;
    let mut batch_stats = Vec::new();
    for i in 1..=c.n_maxpool_blocks {
        let y = g.conv3d(h, b.var(w, &format!("mp{i}.w")), conv2d_geom(block_stride(i)));
        let norm = match mode {
            DiscMode::Train => NormMode::Batch,
            DiscMode::Eval => NormMode::Fixed {
                mean: w.get(&format!("mp{i}.running_mean")).expect("running mean").data().to_vec(),
                var: w.get(&format!("mp{i}.running_var")).expect("running var").data().to_vec(),
            },
        };
        let y = g.batch_norm(y, b.var(w, &format!("mp{i}.gamma")), b.var(w, &format!("mp{i}.beta")), norm, BN_EPS);
        if let Some(st) = g.batch_stats(y) {
            batch_stats.push((i, st.clone()));
        }
        feat_phi = y;
        h = g.relu(y);
    }
    let penultimate = g.reshape(h, &[n, flat_len(c)]);
    let d1 = dense(g, penultimate, b.var(w, "fc1.w"), b.var(w, "fc1.b"));
    let d1 = g.leaky_relu(d1, LEAK);
    let d2 = dense(g, d1, b.var(w, "fc2.w"), b.var(w, "fc2.b"));
    let logit = g.reshape(d2, &[n]);
    let score = if c.sigmoid { g.sigmoid(logit) } else { logit };
    Ok(DiscriminatorOutputs {
        taps: DiscTaps {
            score,
            logit,
            feat_mu,
            feat_phi,
            penultimate,
        },
        batch_stats,
    })
}

/// Folds batch statistics into the running estimates:
/// `running = m * running + (1 - m) * batch`, unbiased variance.
pub fn update_running_stats(w: &mut NetworkWeights, stats: &[(usize, BatchStats)]) -> Result<(), ModelError> {
    for (i, st) in stats {
        for (key, batch) in [("running_mean", st.mean.clone()), ("running_var", st.unbiased_var())] {
            let name = format!("mp{i}.{key}");
            let old = w
                .get(&name)
                .ok_or_else(|| ModelError::Architecture(format!("no parameter {name}")))?;
            let data = old
                .data()
                .iter()
                .zip(&batch)
                .map(|(r, b)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * b)
                .collect();
            let t = Tensor::new(old.shape(), data)?;
            w.set(&name, t)?;
        }
    }
    Ok(())
}

/// Evaluation-mode taps as plain values.
#[derive(Clone, Debug)]
pub struct TapValues {
    pub score: Vec<f64>,
    pub feat_mu: Tensor,
    pub feat_phi: Tensor,
    pub penultimate: Tensor,
}

pub fn discriminator_taps(w: &NetworkWeights, patches: &[&HsiCube]) -> Result<TapValues, ModelError> {
    let t = cubes_to_tensor(patches)?;
    let mut g = Graph::new();
    let bound = w.bind(&mut g, false);
    let x = g.constant(t);
    let out = discriminator_forward(&mut g, w, &bound, x, DiscMode::Eval)?;
    Ok(TapValues {
        score: g.value(out.taps.score).data().to_vec(),
        feat_mu: g.value(out.taps.feat_mu).clone(),
        feat_phi: g.value(out.taps.feat_phi).clone(),
        penultimate: g.value(out.taps.penultimate).clone(),
    })
}
