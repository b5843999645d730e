//! Speckle intensity correlation versus wavelength or angle offset.
//!
//! `C(Δ) = ⟨I(a)·I(a+Δ)⟩ / (⟨I(a)⟩·⟨I(a+Δ)⟩) − 1`, averaged over pixels and
//! over every available pair `(a, a+Δ)` on the sampling grid, then divided by
//! `C(0)`. Inputs should hold only illuminated pixels: a dark mask around the
//! speckle adds a constant offset that never decorrelates.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
    pub fwhm: f64,
}

pub fn spectral_correlation(
    wavelengths_nm: &[f64],
    patches: &[Vec<f64>],
) -> Result<CorrelationCurve> {
    correlation_curve(wavelengths_nm, patches)
}

pub fn angle_correlation(angles_deg: &[f64], patches: &[Vec<f64>]) -> Result<CorrelationCurve> {
    correlation_curve(angles_deg, patches)
}

fn correlation_curve(axis: &[f64], patches: &[Vec<f64>]) -> Result<CorrelationCurve> {
    if axis.len() != patches.len() {
        return Err(Error::invalid(format!(
            "{} axis samples but {} patches",
            axis.len(),
            patches.len()
        )));
    }
    if axis.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 samples"));
    }
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    if !(step > 0.0)
        || axis
            .windows(2)
            .any(|w| ((w[1] - w[0]) - step).abs() > 1e-6 * step)
    {
        return Err(Error::invalid(
            "correlation axis must be uniformly spaced and increasing",
        ));
    }
    let npx = patches[0].len();
    if npx == 0 || patches.iter().any(|p| p.len() != npx) {
        return Err(Error::invalid(
            "patches must be non-empty and equally sized",
        ));
    }

    let means: Vec<f64> = patches
        .iter()
        .map(|p| p.iter().sum::<f64>() / npx as f64)
        .collect();
    let n = patches.len();
    let mut raw = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = 0.0;
        let mut pairs = 0usize;
        for a in 0..n - k {
            let denom = means[a] * means[a + k];
            if denom <= 0.0 {
                continue;
            }
            let cross: f64 = patches[a]
                .iter()
                .zip(&patches[a + k])
                .map(|(u, v)| u * v)
                .sum::<f64>()
                / npx as f64;
            acc += cross / denom - 1.0;
            pairs += 1;
        }
        raw.push(if pairs > 0 { acc / pairs as f64 } else { 0.0 });
    }
    let c0 = raw[0];
    if !(c0 > 1e-12) {
        return Err(Error::UndefinedCorrelation(
            "patches have no intensity fluctuation".into(),
        ));
    }
    let values: Vec<f64> = raw.iter().map(|v| v / c0).collect();
    let offsets: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();

    let fwhm = match values.iter().position(|&v| v < 0.5) {
        Some(k) => {
            let (v0, v1) = (values[k - 1], values[k]);
            let half = offsets[k - 1] + (v0 - 0.5) / (v0 - v1) * step;
            2.0 * half
        }
        None => {
            return Err(Error::UndefinedCorrelation(
                "correlation never falls below half maximum on this grid".into(),
            ))
        }
    };
    Ok(CorrelationCurve {
        offsets,
        values,
        fwhm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_patches_have_no_fwhm() {
        let p = vec![1.0, 3.0, 0.5, 2.0];
        let r = spectral_correlation(&[1.0, 2.0, 3.0], &[p.clone(), p.clone(), p]);
        assert!(matches!(r, Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn constant_patches_are_undefined() {
        let p = vec![2.0; 5];
        let r = angle_correlation(&[0.0, 0.1, 0.2], &[p.clone(), p.clone(), p]);
        assert!(matches!(r, Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn needs_uniform_axis() {
        let p = vec![1.0, 2.0];
        assert!(
            spectral_correlation(&[1.0, 2.0, 4.0], &[p.clone(), p.clone(), p.clone()]).is_err()
        );
        assert!(spectral_correlation(&[1.0, 2.0], &[p.clone(), p]).is_err());
    }

    #[test]
    fn linear_decay_interpolates_half_point() {
        // Mix a fixed speckle with an independent one so that the normalized
        // correlation at offset k is known exactly: patches share weight on
        // a common component that fades linearly.
        let base: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 97) as f64).collect();
        let other: Vec<Vec<f64>> = (0..6)
            .map(|s| {
                (0..4000)
                    .map(|i| ((i * (31 + 8 * s) + 13 * s) % 89) as f64)
                    .collect()
            })
            .collect();
        let patches: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                base.iter()
                    .zip(&other[k])
                    .map(|(b, o)| if k == 0 { *b } else { *o })
                    .collect()
            })
            .collect();
        let axis: Vec<f64> = (0..6).map(|k| k as f64 * 0.5).collect();
        let c = spectral_correlation(&axis, &patches).unwrap();
        assert!((c.values[0] - 1.0).abs() < 1e-12);
        assert!(c.fwhm > 0.0 && c.fwhm <= 1.0 + 1e-9, "{}", c.fwhm);
    }
}
