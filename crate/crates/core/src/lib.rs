//! Latent-encoder-coupled GAN for single hyperspectral image
//! super-resolution: data pipeline, networks, losses, metrics and training.

pub mod hsi_data;
pub mod kv;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod trainer;
