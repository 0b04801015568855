//! Generator and critic objectives.
//!
//! Graph-level builders (taking [`Var`]s) are used by the trainer; the
//! value-level functions below them evaluate the same formulas on plain
//! tensors and validate their inputs.

mod spectrum;

use hsisr_tensor::{ContextualMode, Graph, Tensor, Var};

pub use spectrum::{svd_mode_spectrum, ModeSpectrum};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: Vec<usize>, right: Vec<usize> },
    #[error("empty batch")]
    Empty,
    #[error("position-wise mode needs the upsampled low-resolution features")]
    MissingReference,
    #[error("invalid loss weights: {0}")]
    Weights(String),
}

/// Weights of the four generator terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_spectral: f64,
    pub eta_spatial: f64,
    pub sigma_adversarial: f64,
    pub mu_latent: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_spectral: 12.5,
            eta_spatial: 12.5,
            sigma_adversarial: 0.0063,
            mu_latent: 0.015,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let w = [self.lambda_spectral, self.eta_spatial, self.sigma_adversarial, self.mu_latent];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LossError::Weights("weights must be finite and non-negative".into()));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(LossError::Weights("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

/// Unweighted loss terms of one generator step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub spectral: f64,
    pub spatial: f64,
    pub adversarial: f64,
    pub latent: f64,
}

/// Logged terms and their weighted total.
///
/// `pixel` is the mean squared error term used only by the reduced
/// ablation models; it is zero for the full objective, where
/// `total = λ·spectral + η·spatial + σ·adversarial + μ·latent`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub spectral: f64,
    pub spatial: f64,
    pub adversarial: f64,
    pub latent: f64,
    pub pixel: f64,
    pub total: f64,
}

/// Weighted sum of the four terms.
pub fn ssrp_loss(c: LossComponents, w: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        spectral: c.spectral,
        spatial: c.spatial,
        adversarial: c.adversarial,
        latent: c.latent,
        pixel: 0.0,
        total: w.lambda_spectral * c.spectral + w.eta_spatial * c.spatial + w.sigma_adversarial * c.adversarial + w.mu_latent * c.latent,
    }
}

/// How the spectral similarity `c_ij` is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContextualVariant {
    /// Cosine between every generated position `i` and target position `j`.
    Template,
    /// Per-position cosine between the feature difference (generated minus
    /// target) and the difference of upsampled-LR and target features, with
    /// `i` and `j` the two spatial axes of the map.
    Positional,
}

// ---------------------------------------------------------------- graph level

/// Contextual loss on `(N, C, 1, h, w)` maps, averaged over the batch.
/// `lr_up_feat` must be given in positional mode.
pub fn spectral_contextual(
    g: &mut Graph,
    feat_sr: Var,
    feat_hr: Var,
    variant: ContextualVariant,
    lr_up_feat: Option<&Tensor>,
    bands: usize,
) -> Var {
    match variant {
        ContextualVariant::Template => g.contextual_loss(feat_sr, feat_hr, ContextualMode::Template, None, bands as f64),
        ContextualVariant::Positional => {
            let lr_up = lr_up_feat.expect("positional mode needs lr_up features").clone();
            let target = g.value(feat_hr).clone();
            g.contextual_loss(feat_sr, feat_hr, ContextualMode::Positional, Some((lr_up, target)), bands as f64)
        }
    }
}

/// Mean over batch and grid of the per-position L2 norm of the difference.
pub fn spatial_texture(g: &mut Graph, phi_sr: Var, phi_hr: Var) -> Var {
    let d = g.sub(phi_sr, phi_hr);
    let n = g.norm_axis(d, 1);
    g.mean(n)
}

/// `mean(fake) - mean(real)`; minimising it maximises the critic gap.
pub fn critic_objective(g: &mut Graph, real: Var, fake: Var) -> Var {
    let r = g.mean(real);
    let f = g.mean(fake);
    g.sub(f, r)
}

pub fn generator_adversarial(g: &mut Graph, fake: Var) -> Var {
    let m = g.mean(fake);
    g.scale(m, -1.0)
}

/// Batch mean of `|z_hr - z_sr|_2` over `(N, L)` codes.
pub fn latent_reg(g: &mut Graph, z_hr: Var, z_sr: Var) -> Var {
    let d = g.sub(z_hr, z_sr);
    let n = g.norm_axis(d, 1);
    g.mean(n)
}

/// Cross-entropy pair on raw scores: the critic side
/// `mean softplus(-real) + mean softplus(fake)` and the generator side
/// `mean softplus(-fake)`.
pub fn js_objectives(g: &mut Graph, real: Var, fake: Var) -> (Var, Var) {
    let nr = g.scale(real, -1.0);
    let a = g.softplus(nr);
    let a = g.mean(a);
    let b = g.softplus(fake);
    let b = g.mean(b);
    let d = g.add(a, b);
    let nf = g.scale(fake, -1.0);
    let gl = g.softplus(nf);
    let gl = g.mean(gl);
    (d, gl)
}

/// Mean squared error, used by the reduced ablation models.
pub fn pixel_mse(g: &mut Graph, sr: Var, hr: Var) -> Var {
    let d = g.sub(sr, hr);
    let s = g.square(d);
    g.mean(s)
}

// ---------------------------------------------------------------- value level

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), LossError> {
    if a.shape() != b.shape() {
        return Err(LossError::Shape {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    if a.is_empty() {
        return Err(LossError::Empty);
    }
    Ok(())
}

fn eval(inputs: &[&Tensor], f: impl FnOnce(&mut Graph, &[Var]) -> Var) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant((*t).clone())).collect();
    let out = f(&mut g, &vars);
    g.value(out).item()
}

pub fn spectral_contextual_loss(
    feat_sr: &Tensor,
    feat_hr: &Tensor,
    variant: ContextualVariant,
    lr_up_feat: Option<&Tensor>,
    bands: usize,
) -> Result<f64, LossError> {
    same_shape(feat_sr, feat_hr)?;
    if feat_sr.shape().len() < 3 {
        return Err(LossError::Shape {
            left: feat_sr.shape().to_vec(),
            right: vec![],
        });
    }
    if variant == ContextualVariant::Positional {
        let r = lr_up_feat.ok_or(LossError::MissingReference)?;
        same_shape(feat_sr, r)?;
    }
    Ok(eval(&[feat_sr, feat_hr], |g, v| {
        spectral_contextual(g, v[0], v[1], variant, lr_up_feat, bands)
    }))
}

pub fn spatial_texture_loss(phi_sr: &Tensor, phi_hr: &Tensor) -> Result<f64, LossError> {
    same_shape(phi_sr, phi_hr)?;
    Ok(eval(&[phi_sr, phi_hr], |g, v| spatial_texture(g, v[0], v[1])))
}

fn mean(v: &[f64]) -> Result<f64, LossError> {
    if v.is_empty() {
        return Err(LossError::Empty);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

pub fn critic_loss(scores_real: &[f64], scores_fake: &[f64]) -> Result<f64, LossError> {
    Ok(-(mean(scores_real)? - mean(scores_fake)?))
}

pub fn generator_adversarial_loss(scores_fake: &[f64]) -> Result<f64, LossError> {
    Ok(-mean(scores_fake)?)
}

pub fn latent_reg_loss(latent_hr: &Tensor, latent_sr: &Tensor) -> Result<f64, LossError> {
    same_shape(latent_hr, latent_sr)?;
    if latent_hr.shape().len() != 2 {
        return Err(LossError::Shape {
            left: latent_hr.shape().to_vec(),
            right: vec![],
        });
    }
    Ok(eval(&[latent_hr, latent_sr], |g, v| latent_reg(g, v[0], v[1])))
}

/// `(d_loss, g_loss)` of the cross-entropy game on raw scores.
pub fn js_gan_losses(scores_real: &[f64], scores_fake: &[f64]) -> Result<(f64, f64), LossError> {
    if scores_real.is_empty() || scores_fake.is_empty() {
        return Err(LossError::Empty);
    }
    let sp = hsisr_tensor::softplus;
    let d = mean(&scores_real.iter().map(|s| sp(-s)).collect::<Vec<_>>())? + mean(&scores_fake.iter().map(|s| sp(*s)).collect::<Vec<_>>())?;
    let g = mean(&scores_fake.iter().map(|s| sp(-s)).collect::<Vec<_>>())?;
    Ok((d, g))
}
