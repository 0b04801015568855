use std::fmt::Write as _;

use super::{pi, psnr_per_band, sam_detailed, sre_per_band, ssim, MaScorer, MetricError, NiqeModel};
use crate::hsi_data::HsiCube;

#[derive(Clone, Debug, PartialEq)]
pub struct PerBand {
    pub psnr: Vec<f64>,
    pub sre: Vec<f64>,
}

/// Fidelity metrics averaged over the evaluated patch pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// `+inf` when every pair is reproduced exactly.
    pub psnr: f64,
    pub ssim: f64,
    /// `None` without a fitted NIQE model.
    pub pi: Option<f64>,
    pub sam: f64,
    pub sre: f64,
    /// Pixels skipped by SAM (zero-norm spectra) and pixels seen.
    pub sam_skipped: usize,
    pub sam_pixels: usize,
    pub n_pairs: usize,
    pub per_band: Option<PerBand>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityReport {
    pub is_score: f64,
    pub fid: f64,
    pub n_samples: usize,
    pub feature_layer: String,
}

fn mse_to_psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Evaluates `(hr, sr)` pairs. PSNR is taken over the pooled MSE of all
/// pairs; SSIM, SAM and PI are pair means; SRE pools per-band MSEs.
pub fn evaluate(
    pairs: &[(&HsiCube, &HsiCube)],
    perceptual: Option<(&dyn MaScorer, &NiqeModel)>,
    per_band: bool,
) -> Result<MetricReport, MetricError> {
    let Some((first, _)) = pairs.first() else {
        return Err(MetricError::Empty);
    };
    let bands = first.bands();
    let mut band_mse = vec![0.0; bands];
    let (mut ssim_sum, mut pi_sum, mut sam_sum) = (0.0, 0.0, 0.0);
    let (mut skipped, mut pixels, mut sam_pairs) = (0, 0, 0usize);
    for (hr, sr) in pairs {
        let rmse = sre_per_band(hr, sr)?;
        if rmse.len() != bands {
            return Err(MetricError::Dimension(bands, rmse.len()));
        }
        for (acc, e) in band_mse.iter_mut().zip(&rmse) {
            *acc += e * e / pairs.len() as f64;
        }
        ssim_sum += ssim(hr, sr)?;
        let s = sam_detailed(hr, sr)?;
        if s.skipped < s.pixels {
            sam_sum += s.degrees;
            sam_pairs += 1;
        }
        skipped += s.skipped;
        pixels += s.pixels;
        if let Some((ma, model)) = perceptual {
            pi_sum += pi(sr, ma, model)?;
        }
    }
    let n = pairs.len() as f64;
    let total_mse = band_mse.iter().sum::<f64>() / bands as f64;
    let per = per_band.then(|| PerBand {
        psnr: band_mse.iter().map(|m| mse_to_psnr(*m)).collect(),
        sre: band_mse.iter().map(|m| m.sqrt()).collect(),
    });
    Ok(MetricReport {
        psnr: mse_to_psnr(total_mse),
        ssim: ssim_sum / n,
        pi: perceptual.map(|_| pi_sum / n),
        sam: if sam_pairs == 0 { 0.0 } else { sam_sum / sam_pairs as f64 },
        sre: total_mse.sqrt(),
        sam_skipped: skipped,
        sam_pixels: pixels,
        n_pairs: pairs.len(),
        per_band: per,
    })
}

/// Single-pair PSNR per band, exposed for callers that need the raw list.
pub fn per_band_of(hr: &HsiCube, sr: &HsiCube) -> Result<PerBand, MetricError> {
    Ok(PerBand {
        psnr: psnr_per_band(hr, sr)?,
        sre: sre_per_band(hr, sr)?,
    })
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.6}")
    }
}

impl MetricReport {
    /// `metric = value` lines, then a `[per_band]` section when present.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pairs = {}", self.n_pairs);
        let _ = writeln!(s, "psnr = {}", num(self.psnr));
        let _ = writeln!(s, "psnr_infinite = {}", self.psnr.is_infinite());
        let _ = writeln!(s, "ssim = {}", num(self.ssim));
        match self.pi {
            Some(v) => {
                let _ = writeln!(s, "pi = {}", num(v));
            }
            None => {
                let _ = writeln!(s, "pi = nan");
            }
        }
        let _ = writeln!(s, "sam = {}", num(self.sam));
        let _ = writeln!(s, "sam_skipped = {}", self.sam_skipped);
        let _ = writeln!(s, "sre = {}", num(self.sre));
        if let Some(p) = &self.per_band {
            let _ = writeln!(s, "[per_band]");
            for (b, (ps, e)) in p.psnr.iter().zip(&p.sre).enumerate() {
                let _ = writeln!(s, "band{b}.psnr = {}", num(*ps));
                let _ = writeln!(s, "band{b}.sre = {}", num(*e));
            }
        }
        if self.sam_skipped * 100 > self.sam_pixels {
            let _ = writeln!(s, "# warning: more than 1% of pixels skipped by sam");
        }
        s
    }

    /// `band,psnr,sre` rows; `None` without per-band data.
    pub fn per_band_csv(&self) -> Option<String> {
        let p = self.per_band.as_ref()?;
        let mut s = String::from("band,psnr,sre\n");
        for (b, (ps, e)) in p.psnr.iter().zip(&p.sre).enumerate() {
            let _ = writeln!(s, "{b},{},{}", num(*ps), num(*e));
        }
        Some(s)
    }
}

impl DiversityReport {
    pub fn to_text(&self) -> String {
        format!(
            "is = {}\nfid = {}\nsamples = {}\nfeature_layer = {}\n",
            num(self.is_score),
            num(self.fid),
            self.n_samples,
            self.feature_layer
        )
    }
}
