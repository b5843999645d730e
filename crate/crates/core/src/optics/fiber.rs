use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angle of incidence above which neighbouring cores couple evanescently.
pub const MAX_INCIDENCE_DEG: f64 = 4.5;

/// Physical parameters of the multicore fiber bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub length_m: f64,
    pub core_diameter_m: f64,
    pub numerical_aperture: f64,
    pub core_count: usize,
    pub pitch_m: f64,
    #[serde(default = "default_core_index")]
    pub core_index: f64,
}

fn default_core_index() -> f64 {
    1.5
}

impl Default for FiberSpec {
    fn default() -> Self {
        FiberSpec {
            length_m: 0.3085,
            core_diameter_m: 50e-6,
            numerical_aperture: 0.06,
            core_count: 200,
            pitch_m: 60e-6,
            core_index: 1.5,
        }
    }
}

impl FiberSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.length_m,
            self.core_diameter_m,
            self.numerical_aperture,
            self.pitch_m,
            self.core_index,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("fiber parameters must be finite"));
        }
        if self.length_m <= 0.0 {
            return Err(Error::invalid("fiber.length_m must be > 0"));
        }
        if self.core_diameter_m <= 0.0 {
            return Err(Error::invalid("fiber.core_diameter_m must be > 0"));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < self.core_index) {
            return Err(Error::invalid(
                "fiber.numerical_aperture must satisfy 0 < NA < core_index",
            ));
        }
        if self.pitch_m < self.core_diameter_m {
            return Err(Error::invalid("fiber.pitch_m must be >= core_diameter_m"));
        }
        if self.core_count == 0 {
            return Err(Error::invalid("fiber.core_count must be >= 1"));
        }
        Ok(())
    }

    /// Spread of modal effective indices, `NA² / (2 n)`.
    pub fn index_spread(&self) -> f64 {
        self.numerical_aperture.powi(2) / (2.0 * self.core_index)
    }
}

/// Number of guided modes of a step-index core, `(4/π²)·V²` with
/// `V = π·D·NA/λ`, rounded and floored at one.
pub fn mode_count(spec: &FiberSpec, wavelength_nm: f64) -> Result<usize> {
    if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
        return Err(Error::invalid(format!(
            "wavelength must be positive, got {wavelength_nm}"
        )));
    }
    let v = PI * spec.core_diameter_m * spec.numerical_aperture / (wavelength_nm * 1e-9);
    let n = (4.0 / (PI * PI) * v * v).round();
    Ok((n as usize).max(1))
}

/// Calibrated wavelengths, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    values_nm: Vec<f64>,
    step_nm: f64,
}

impl WavelengthGrid {
    pub fn new(values_nm: Vec<f64>) -> Result<Self> {
        if values_nm.is_empty() {
            return Err(Error::invalid("wavelength grid must not be empty"));
        }
        if values_nm.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("wavelengths must be positive and finite"));
        }
        if values_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "wavelength grid must be strictly increasing",
            ));
        }
        let step_nm = if values_nm.len() > 1 {
            (values_nm[values_nm.len() - 1] - values_nm[0]) / (values_nm.len() - 1) as f64
        } else {
            0.0
        };
        Ok(WavelengthGrid { values_nm, step_nm })
    }

    pub fn uniform(start_nm: f64, step_nm: f64, count: usize) -> Result<Self> {
        if !(step_nm > 0.0) && count > 1 {
            return Err(Error::invalid("grid step must be positive"));
        }
        Self::new((0..count).map(|i| start_nm + step_nm * i as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values_nm
    }

    pub fn len(&self) -> usize {
        self.values_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_nm.is_empty()
    }

    /// Nominal spacing; zero for a single-entry grid.
    pub fn step_nm(&self) -> f64 {
        self.step_nm
    }

    pub fn center_nm(&self) -> f64 {
        0.5 * (self.values_nm[0] + self.values_nm[self.values_nm.len() - 1])
    }

    /// True when consecutive spacings agree with the nominal step to 1e-6.
    pub fn is_uniform(&self) -> bool {
        self.values_nm
            .windows(2)
            .all(|w| ((w[1] - w[0]) - self.step_nm).abs() <= 1e-6 * self.step_nm.max(1e-12))
    }
}

/// Illumination delivered to the bundle facet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    pub center_nm: f64,
    #[serde(default)]
    pub linewidth_nm: f64,
    #[serde(default = "default_incidence")]
    pub incidence_deg: f64,
}

fn default_incidence() -> f64 {
    3.5
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel {
            center_nm: 670.0,
            linewidth_nm: 0.0,
            incidence_deg: 3.5,
        }
    }
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_nm > 0.0) || !self.center_nm.is_finite() {
            return Err(Error::invalid("source.center_nm must be positive"));
        }
        if !(self.linewidth_nm >= 0.0) || !self.linewidth_nm.is_finite() {
            return Err(Error::invalid("source.linewidth_nm must be >= 0"));
        }
        validate_incidence(self.incidence_deg)
    }
}

pub(crate) fn validate_incidence(theta_deg: f64) -> Result<()> {
    if !(0.0..MAX_INCIDENCE_DEG).contains(&theta_deg) {
        return Err(Error::invalid(format!(
            "incidence angle {theta_deg} deg outside [0, {MAX_INCIDENCE_DEG}) deg; \
             cores couple evanescently above {MAX_INCIDENCE_DEG} deg"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_count_reference_fiber() {
        let spec = FiberSpec::default();
        // 4 * (50e-6 * 0.06 / 670e-9)^2 = 80.2
        assert_eq!(mode_count(&spec, 670.0).unwrap(), 80);
    }

    #[test]
    fn mode_count_single_mode_floor() {
        let spec = FiberSpec {
            numerical_aperture: 1e-6,
            ..FiberSpec::default()
        };
        assert_eq!(mode_count(&spec, 670.0).unwrap(), 1);
    }

    #[test]
    fn mode_count_rejects_bad_wavelength() {
        let spec = FiberSpec::default();
        assert!(mode_count(&spec, 0.0).is_err());
        assert!(mode_count(&spec, -5.0).is_err());
        assert!(mode_count(&spec, f64::NAN).is_err());
    }

    #[test]
    fn mode_count_quadratic_in_diameter() {
        let spec = FiberSpec::default();
        let doubled = FiberSpec {
            core_diameter_m: 100e-6,
            pitch_m: 120e-6,
            ..spec
        };
        let a = mode_count(&spec, 700.0).unwrap() as i64;
        let b = mode_count(&doubled, 700.0).unwrap() as i64;
        assert!((b - 4 * a).abs() <= 2, "{b} vs 4*{a}");
    }

    #[test]
    fn spec_validation() {
        assert!(FiberSpec::default().validate().is_ok());
        let bad = FiberSpec {
            pitch_m: 10e-6,
            ..FiberSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = FiberSpec {
            numerical_aperture: 2.0,
            ..FiberSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn incidence_limit() {
        let s = SourceModel {
            incidence_deg: 4.5,
            ..SourceModel::default()
        };
        let msg = s.validate().unwrap_err().to_string();
        assert!(msg.contains("4.5"), "{msg}");
        assert!(SourceModel::default().validate().is_ok());
    }

    #[test]
    fn grid_checks() {
        assert!(WavelengthGrid::new(vec![]).is_err());
        assert!(WavelengthGrid::new(vec![600.0, 600.0]).is_err());
        let g = WavelengthGrid::uniform(654.0, 0.4, 111).unwrap();
        assert_eq!(g.len(), 111);
        assert!((g.step_nm() - 0.4).abs() < 1e-12);
        assert!(g.is_uniform());
        assert!(!WavelengthGrid::new(vec![1.0, 2.0, 4.0])
            .unwrap()
            .is_uniform());
    }
}
