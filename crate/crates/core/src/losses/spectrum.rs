use nalgebra::DMatrix;

use super::LossError;

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpectrum {
    /// Singular values, descending.
    pub values: Vec<f64>,
    /// Set when the input was all zeros.
    pub degenerate: bool,
}

impl ModeSpectrum {
    /// Share of the spectrum's energy held by the leading value.
    pub fn leading_share(&self) -> f64 {
        let total: f64 = self.values.iter().map(|v| v * v).sum();
        if total == 0.0 {
            0.0
        } else {
            self.values[0] * self.values[0] / total
        }
    }
}

/// Singular values of a row-major `rows x cols` feature matrix
/// (positions by channels).
pub fn svd_mode_spectrum(data: &[f64], rows: usize, cols: usize) -> Result<ModeSpectrum, LossError> {
    if data.len() != rows * cols {
        return Err(LossError::Shape {
            left: vec![data.len()],
            right: vec![rows, cols],
        });
    }
    if data.is_empty() {
        return Err(LossError::Empty);
    }
    let k = rows.min(cols);
    if data.iter().all(|v| *v == 0.0) {
        return Ok(ModeSpectrum {
            values: vec![0.0; k],
            degenerate: true,
        });
    }
    let m = DMatrix::from_row_slice(rows, cols, data);
    let mut values: Vec<f64> = m.singular_values().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(ModeSpectrum { values, degenerate: false })
}
