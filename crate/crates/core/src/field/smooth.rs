use super::{FieldError, ScalarField, SegmentMask};
use rayon::prelude::*;

/// Discrete Gaussian truncated at `ceil(4σ)` and renormalized to unit sum.
///
/// The separable product of two of these kernels is the normalized 2D
/// Gaussian `exp(-(x² + y²) / 2σ²) / 2πσ²` up to the truncated tail.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= sum);
    kernel
}

/// Convolves a row-major grid with the 2D Gaussian, zero padded, same size out.
pub fn smooth_grid(
    width: usize,
    height: usize,
    data: &[f64],
    sigma: f64,
) -> Result<Vec<f64>, FieldError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(FieldError::InvalidSigma(sigma));
    }
    if data.len() != width * height {
        return Err(FieldError::SizeMismatch {
            width,
            height,
            expected: width * height,
            actual: data.len(),
        });
    }
    let kernel = gaussian_kernel_1d(sigma);
    let radius = (kernel.len() / 2) as i64;

    let mut rows = vec![0.0; data.len()];
    rows.par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(y, out)| {
            let src = &data[y * width..(y + 1) * width];
            for (x, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let sx = x as i64 + k as i64 - radius;
                    if sx >= 0 && (sx as usize) < width {
                        acc += w * src[sx as usize];
                    }
                }
                *o = acc;
            }
        });

    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let sy = y as i64 + k as i64 - radius;
                    if sy >= 0 && (sy as usize) < height {
                        acc += w * rows[sy as usize * width + x];
                    }
                }
                *o = acc;
            }
        });
    Ok(out)
}

/// Gaussian-smooths a mask and max-normalizes the result to `[0, 1]`.
pub fn smooth(mask: &SegmentMask, sigma: f64) -> Result<ScalarField, FieldError> {
    let data: Vec<f64> = mask
        .data()
        .iter()
        .map(|&v| if v { 1.0 } else { 0.0 })
        .collect();
    let mut values = smooth_grid(mask.width(), mask.height(), &data, sigma)?;
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v = (*v / peak).clamp(0.0, 1.0));
    }
    let mut field = ScalarField::from_values(
        mask.id.clone(),
        mask.width(),
        mask.height(),
        values,
        sigma,
    )?;
    field.peak = if peak > 0.0 { peak } else { 1.0 };
    field.frame = mask.frame;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn all_zero_grid_stays_zero() {
        let out = smooth_grid(9, 7, &vec![0.0; 63], 2.0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonpositive_sigma_is_an_error() {
        assert!(matches!(
            smooth_grid(3, 3, &[0.0; 9], 0.0),
            Err(FieldError::InvalidSigma(_))
        ));
        assert!(smooth_grid(3, 3, &[0.0; 9], -1.0).is_err());
    }

    #[test]
    fn impulse_peak_matches_gaussian_normalization() {
        let sigma = 2.0;
        let n = 41;
        let c = 20;
        let mut data = vec![0.0; n * n];
        data[c * n + c] = 1.0;
        let out = smooth_grid(n, n, &data, sigma).unwrap();
        let expected = 1.0 / (2.0 * PI * sigma * sigma);
        let peak = out[c * n + c];
        assert!(((peak - expected) / expected).abs() < 2e-4, "{peak} vs {expected}");
        assert!(out.iter().all(|&v| v <= peak));
    }

    #[test]
    fn kernel_sums_to_one() {
        for sigma in [0.5, 1.0, 3.0, 7.3] {
            let s: f64 = gaussian_kernel_1d(sigma).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
