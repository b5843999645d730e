//! Seeded studies of the full pipeline against simulated ground truth.

mod instrument;
mod letters;
mod sweeps;

pub use instrument::{Bench, Instrument, InstrumentConfig, EXPOSURE_FILL, MATCH_RADIUS_PX};
pub use letters::{
    assemble_image, glyph_bitmap, rasterize_letter, run_composite, run_single_letter,
    write_map_pgm, CompositeResult, LetterAssignment, SingleLetterResult, SpatialMap, GLYPH_COLS,
    GLYPH_ROWS, SOLID_GLYPH,
};
pub use sweeps::{
    evaluate_scene, sparse_scene, sweep_noise, sweep_results_to_csv, sweep_sampling,
    sweep_sparsity, SweepPoint, SweepResult,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stm::{PixelVector, Spectrum};

/// Sample Pearson correlation.
///
/// A constant input against a varying one gives 0; two constant inputs
/// have no defined correlation.
pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "pearson needs equal lengths, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.len() < 2 {
        return Err(Error::invalid("pearson needs at least two samples"));
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    match (suu > 0.0, svv > 0.0) {
        (false, false) => Err(Error::UndefinedCorrelation(
            "both inputs are constant".into(),
        )),
        (true, true) => Ok((suv / (suu.sqrt() * svv.sqrt())).clamp(-1.0, 1.0)),
        _ => Ok(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    IidUniform,
}

/// Additive noise applied to measured pixel vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Upper bound of the noise as a fraction of the vector's mean.
    pub relative_strength: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn iid_uniform(relative_strength: f64, seed: u64) -> Result<Self> {
        let m = NoiseModel {
            kind: NoiseKind::IidUniform,
            relative_strength,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.relative_strength) {
            return Err(Error::invalid(format!(
                "noise strength must lie in [0, 1], got {}",
                self.relative_strength
            )));
        }
        Ok(())
    }
}

/// Adds i.i.d. `Uniform[0, s·mean]` to every entry.
pub fn add_noise(vector: &PixelVector, noise: &NoiseModel) -> PixelVector {
    let bound = noise.relative_strength * vector.mean();
    if !(bound > 0.0) {
        return vector.clone();
    }
    let mut rng = stream_rng(noise.seed, 0x0015e);
    PixelVector {
        values: vector
            .values
            .iter()
            .map(|&v| v + rng.random_range(0.0..bound))
            .collect(),
    }
}

/// Ground-truth spectra, one per true core, over the instrument grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub label: String,
    pub spectra: Vec<Spectrum>,
}

impl Scene {
    pub fn new(label: impl Into<String>, spectra: Vec<Spectrum>) -> Result<Self> {
        if let Some(first) = spectra.first() {
            if spectra.iter().any(|s| s.len() != first.len()) {
                return Err(Error::invalid("scene spectra must share one grid"));
            }
        }
        Ok(Scene {
            label: label.into(),
            spectra,
        })
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.spectra.iter().map(|s| s.values.clone()).collect()
    }
}
