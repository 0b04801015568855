use super::{joint_train, pretrain, test_reports, TrainConfig, TrainData, TrainError};
use crate::losses::LossWeights;

/// Candidate values per loss weight; the search visits the full product.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightGrid {
    pub lambda_spectral: Vec<f64>,
    pub eta_spatial: Vec<f64>,
    pub sigma_adversarial: Vec<f64>,
    pub mu_latent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub weights: LossWeights,
    pub psnr: f64,
    pub sam: f64,
    pub final_total: f64,
}

impl WeightGrid {
    pub fn points(&self) -> Vec<LossWeights> {
        let mut out = Vec::new();
        for &l in &self.lambda_spectral {
            for &e in &self.eta_spatial {
                for &s in &self.sigma_adversarial {
                    for &m in &self.mu_latent {
                        out.push(LossWeights {
                            lambda_spectral: l,
                            eta_spatial: e,
                            sigma_adversarial: s,
                            mu_latent: m,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Trains one run per weight combination and scores it on the test split.
/// Points whose weights fail validation are skipped.
pub fn grid_search(base: &TrainConfig, grid: &WeightGrid, data: &TrainData) -> Result<Vec<GridPoint>, TrainError> {
    let mut out = Vec::new();
    for w in grid.points() {
        if w.validate().is_err() {
            continue;
        }
        let config = TrainConfig {
            loss_weights: w,
            ..base.clone()
        };
        let state = joint_train(pretrain(&config, data)?, &config, data)?;
        let (report, _) = test_reports(&state, data)?;
        out.push(GridPoint {
            weights: w,
            psnr: report.psnr,
            sam: report.sam,
            final_total: state.curves.last().map(|r| r.loss.total).unwrap_or(f64::NAN),
        });
    }
    Ok(out)
}
