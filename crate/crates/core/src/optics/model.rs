//! Per-core modal interference model.
//!
//! Each core carries `N_m` guided modes with effective indices spread over
//! `[n − Δn, n]`. A mode contributes a fixed, spatially smooth complex field
//! on the camera patch for each of two polarization channels; its phase
//! advances as `2π·n_m·L/λ`. The input angle selects which modes are
//! excited through a Gaussian window over mode order and tilts the coupling
//! phase of each mode, which sets the angular memory of the speckle.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::fiber::{mode_count, validate_incidence, FiberSpec, SourceModel};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Gaussian blur applied to white mode fields; gives speckle grains of about
/// 2×2 camera pixels.
pub const GRAIN_SIGMA_PX: f64 = 0.85;
const BLUR_RADIUS: usize = 3;

/// Excitation window width (in mode orders) at normal incidence.
const WINDOW_MIN_MODES: f64 = 0.3;
/// Incidence at which the window excites about half of the guided modes.
pub const REFERENCE_INCIDENCE_DEG: f64 = 3.5;
/// Coupling-phase slope of the highest-order mode, in cycles per degree.
const TILT_CYCLES_PER_DEG: f64 = 0.56;

/// Which polarization channels reach the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// No polarizer: both channels add incoherently.
    Both,
    /// A single channel (index 0 or 1).
    Single(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreModel {
    mode_count: usize,
    mode_indices: Vec<f64>,
    tilt_rates: Vec<f64>,
    patch_size_px: usize,
    seed: u64,
    /// Patch-linear index (row-major) of every pixel inside the core disk.
    pixels: Vec<u32>,
    /// Mode fields, `pixels × modes`, real and imaginary parts per channel.
    fields_re: [DMatrix<f32>; 2],
    fields_im: [DMatrix<f32>; 2],
}

/// Real-valued intensity on a square patch, zero outside the core disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub values: Vec<f64>,
}

impl Patch {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.size + x]
    }

    pub fn scaled(&self, alpha: f64) -> Patch {
        Patch {
            size: self.size,
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }
}

/// Row-major indices of the patch pixels whose centers fall inside the
/// inscribed disk.
pub fn disk_pixels(patch_size: usize) -> Vec<u32> {
    let c = (patch_size as f64 - 1.0) / 2.0;
    let r2 = (patch_size as f64 / 2.0).powi(2);
    let mut out = Vec::new();
    for y in 0..patch_size {
        for x in 0..patch_size {
            let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
            if d2 <= r2 {
                out.push((y * patch_size + x) as u32);
            }
        }
    }
    out
}

pub fn build_core_model(
    spec: &FiberSpec,
    source: &SourceModel,
    patch_size_px: usize,
    seed: u64,
) -> Result<CoreModel> {
    spec.validate()?;
    source.validate()?;
    if patch_size_px < 4 {
        return Err(Error::invalid(format!(
            "patch size must be >= 4 px, got {patch_size_px}"
        )));
    }
    let n_modes = mode_count(spec, source.center_nm)?;
    let mut rng = stream_rng(seed, 0);

    let n_core = spec.core_index;
    let dn = spec.index_spread();
    let mut mode_indices: Vec<f64> = (0..n_modes)
        .map(|_| n_core - dn * rng.random::<f64>())
        .collect();
    // mode order 0 is the fundamental (highest effective index)
    mode_indices.sort_by(|a, b| b.total_cmp(a));

    let tilt_rates: Vec<f64> = (0..n_modes)
        .map(|m| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            TILT_CYCLES_PER_DEG * xi * ((m as f64 + 0.5) / n_modes as f64).sqrt()
        })
        .collect();

    let pixels = disk_pixels(patch_size_px);
    let kernel = gaussian_kernel(GRAIN_SIGMA_PX, BLUR_RADIUS);
    let mut fields_re = [
        DMatrix::<f32>::zeros(pixels.len(), n_modes),
        DMatrix::<f32>::zeros(pixels.len(), n_modes),
    ];
    let mut fields_im = fields_re.clone();
    for pol in 0..2 {
        let mut field_rng = stream_rng(seed, 1 + pol as u64);
        for m in 0..n_modes {
            let (re, im) = smooth_field(&mut field_rng, patch_size_px, &kernel);
            let power: f64 = pixels
                .iter()
                .map(|&p| re[p as usize].powi(2) + im[p as usize].powi(2))
                .sum::<f64>()
                / pixels.len() as f64;
            let norm = 1.0 / power.sqrt();
            for (row, &p) in pixels.iter().enumerate() {
                fields_re[pol][(row, m)] = (re[p as usize] * norm) as f32;
                fields_im[pol][(row, m)] = (im[p as usize] * norm) as f32;
            }
        }
    }

    Ok(CoreModel {
        mode_count: n_modes,
        mode_indices,
        tilt_rates,
        patch_size_px,
        seed,
        pixels,
        fields_re,
        fields_im,
    })
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// White complex Gaussian noise blurred by a separable kernel and cropped to
/// `size × size`.
fn smooth_field(rng: &mut impl Rng, size: usize, kernel: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let r = kernel.len() / 2;
    let padded = size + 2 * r;
    let mut out = (vec![0.0; size * size], vec![0.0; size * size]);
    for part in [&mut out.0, &mut out.1] {
        let white: Vec<f64> = (0..padded * padded)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        // horizontal pass: padded rows × size columns
        let mut tmp = vec![0.0; padded * size];
        for y in 0..padded {
            for x in 0..size {
                tmp[y * size + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * white[y * padded + x + k])
                    .sum();
            }
        }
        for y in 0..size {
            for x in 0..size {
                part[y * size + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * tmp[(y + k) * size + x])
                    .sum();
            }
        }
    }
    out
}

impl CoreModel {
    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn mode_indices(&self) -> &[f64] {
        &self.mode_indices
    }

    pub fn patch_size_px(&self) -> usize {
        self.patch_size_px
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major patch indices of the pixels inside the core disk.
    pub fn disk_pixels(&self) -> &[u32] {
        &self.pixels
    }

    fn window_width(&self, theta_deg: f64) -> f64 {
        // half-Gaussian power weights of width s have participation ≈ s·√(π/2)
        let at_reference = self.mode_count as f64 / (2.0 * (PI / 2.0).sqrt());
        let slope = (at_reference - WINDOW_MIN_MODES).max(0.0) / REFERENCE_INCIDENCE_DEG;
        WINDOW_MIN_MODES + slope * theta_deg
    }

    /// Complex coupling coefficient of every mode at incidence `theta_deg`,
    /// normalized to unit total power.
    pub fn excitation(&self, theta_deg: f64) -> Vec<Complex64> {
        let s = self.window_width(theta_deg);
        let amps: Vec<f64> = (0..self.mode_count)
            .map(|m| (-((m * m) as f64) / (2.0 * s * s)).exp())
            .collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        amps.iter()
            .zip(&self.tilt_rates)
            .map(|(a, tau)| Complex64::from_polar(a / norm, 2.0 * PI * tau * theta_deg))
            .collect()
    }

    /// Effective number of excited modes, `(Σp)²/Σp²` over modal powers.
    pub fn participation_ratio(&self, theta_deg: f64) -> f64 {
        let p: Vec<f64> = self
            .excitation(theta_deg)
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        let s: f64 = p.iter().sum();
        s * s / p.iter().map(|v| v * v).sum::<f64>()
    }

    /// Disk-pixel intensities for a batch of wavelengths: `pixels × λ`.
    pub fn disk_intensities(
        &self,
        spec: &FiberSpec,
        wavelengths_nm: &[f64],
        theta_deg: f64,
        polarization: Polarization,
    ) -> Result<DMatrix<f32>> {
        validate_incidence(theta_deg)?;
        if let Some(bad) = wavelengths_nm
            .iter()
            .find(|l| !(**l > 0.0) || !l.is_finite())
        {
            return Err(Error::invalid(format!(
                "wavelength must be positive, got {bad}"
            )));
        }
        let channels: &[usize] = match polarization {
            Polarization::Both => &[0, 1],
            Polarization::Single(0) => &[0],
            Polarization::Single(1) => &[1],
            Polarization::Single(p) => {
                return Err(Error::invalid(format!(
                    "polarization channel {p} not in {{0, 1}}"
                )))
            }
        };

        let coupling = self.excitation(theta_deg);
        let n_l = wavelengths_nm.len();
        let mut k_re = DMatrix::<f32>::zeros(self.mode_count, n_l);
        let mut k_im = DMatrix::<f32>::zeros(self.mode_count, n_l);
        for (j, &lambda) in wavelengths_nm.iter().enumerate() {
            let lambda_m = lambda * 1e-9;
            for (m, c) in coupling.iter().enumerate() {
                let cycles = (self.mode_indices[m] * spec.length_m / lambda_m).fract();
                let k = c * Complex64::from_polar(FRAC_1_SQRT_2, 2.0 * PI * cycles);
                k_re[(m, j)] = k.re as f32;
                k_im[(m, j)] = k.im as f32;
            }
        }

        let mut out = DMatrix::<f32>::zeros(self.pixels.len(), n_l);
        for &pol in channels {
            let fr = &self.fields_re[pol];
            let fi = &self.fields_im[pol];
            let e_re = fr * &k_re - fi * &k_im;
            let e_im = fr * &k_im + fi * &k_re;
            out.zip_zip_apply(&e_re, &e_im, |o, r, i| *o += r * r + i * i);
        }
        Ok(out)
    }

    fn to_patch(&self, column: impl Iterator<Item = f32>) -> Patch {
        let mut values = vec![0.0; self.patch_size_px * self.patch_size_px];
        for (&p, v) in self.pixels.iter().zip(column) {
            values[p as usize] = v as f64;
        }
        Patch {
            size: self.patch_size_px,
            values,
        }
    }
}

/// Monochromatic speckle intensity on the core's patch, both polarization
/// channels summed.
pub fn synthesize_patch(
    model: &CoreModel,
    spec: &FiberSpec,
    wavelength_nm: f64,
    theta_deg: f64,
) -> Result<Patch> {
    synthesize_polarized(model, spec, wavelength_nm, theta_deg, Polarization::Both)
}

pub fn synthesize_polarized(
    model: &CoreModel,
    spec: &FiberSpec,
    wavelength_nm: f64,
    theta_deg: f64,
    polarization: Polarization,
) -> Result<Patch> {
    let m = model.disk_intensities(spec, &[wavelength_nm], theta_deg, polarization)?;
    Ok(model.to_patch(m.column(0).iter().copied()))
}

/// Five-point Gauss-Legendre nodes and weights on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Quadrature nodes (wavelength, weight) covering a top-hat line of width
/// `linewidth_nm`; weights sum to one. A zero linewidth yields the center
/// wavelength alone.
pub fn band_nodes(center_nm: f64, linewidth_nm: f64) -> Vec<(f64, f64)> {
    if linewidth_nm <= 0.0 {
        return vec![(center_nm, 1.0)];
    }
    GL5.iter()
        .map(|&(x, w)| (center_nm + 0.5 * linewidth_nm * x, 0.5 * w))
        .collect()
}

/// Band-averaged disk intensities for several line centers sharing one
/// linewidth: `pixels × centers`.
pub fn band_disk_intensities(
    model: &CoreModel,
    spec: &FiberSpec,
    centers_nm: &[f64],
    linewidth_nm: f64,
    theta_deg: f64,
) -> Result<DMatrix<f32>> {
    let per_line = band_nodes(0.0, linewidth_nm);
    let q = per_line.len();
    let lambdas: Vec<f64> = centers_nm
        .iter()
        .flat_map(|&c| per_line.iter().map(move |&(d, _)| c + d))
        .collect();
    let raw = model.disk_intensities(spec, &lambdas, theta_deg, Polarization::Both)?;
    if q == 1 {
        return Ok(raw);
    }
    let mut out = DMatrix::<f32>::zeros(raw.nrows(), centers_nm.len());
    for j in 0..centers_nm.len() {
        for (k, &(_, w)) in per_line.iter().enumerate() {
            let w = w as f32;
            out.column_mut(j)
                .zip_apply(&raw.column(j * q + k), |o, v| *o += w * v);
        }
    }
    Ok(out)
}

/// Speckle intensity under a finite-linewidth source, averaged with
/// five-point Gauss-Legendre quadrature across the line.
pub fn synthesize_band(model: &CoreModel, spec: &FiberSpec, source: &SourceModel) -> Result<Patch> {
    source.validate()?;
    let m = band_disk_intensities(
        model,
        spec,
        &[source.center_nm],
        source.linewidth_nm,
        source.incidence_deg,
    )?;
    Ok(model.to_patch(m.column(0).iter().copied()))
}

/// Expands a disk-intensity column into a full patch.
pub fn patch_from_disk(model: &CoreModel, column: &[f32]) -> Patch {
    model.to_patch(column.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(theta: f64, seed: u64) -> (FiberSpec, CoreModel) {
        let spec = FiberSpec::default();
        let src = SourceModel {
            incidence_deg: theta,
            ..SourceModel::default()
        };
        let m = build_core_model(&spec, &src, 20, seed).unwrap();
        (spec, m)
    }

    #[test]
    fn deterministic_in_seed() {
        let (_, a) = model(3.5, 11);
        let (_, b) = model(3.5, 11);
        let (_, c) = model(3.5, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn indices_inside_band() {
        let (spec, m) = model(3.5, 1);
        let dn = spec.index_spread();
        assert_eq!(m.mode_count(), 80);
        assert!(m
            .mode_indices()
            .iter()
            .all(|&n| n <= spec.core_index && n >= spec.core_index - dn));
    }

    #[test]
    fn rejects_small_patch() {
        let spec = FiberSpec::default();
        assert!(build_core_model(&spec, &SourceModel::default(), 3, 0).is_err());
    }

    #[test]
    fn participation_grows_with_angle() {
        let (_, m) = model(3.5, 5);
        let pr0 = m.participation_ratio(0.0);
        let pr2 = m.participation_ratio(2.0);
        let pr35 = m.participation_ratio(3.5);
        let pr4 = m.participation_ratio(4.0);
        assert!(pr0 <= 2.0, "{pr0}");
        assert!(pr0 < pr2 && pr2 < pr35 && pr35 < pr4);
        assert!((pr35 - 40.0).abs() < 6.0, "{pr35}");
    }

    #[test]
    fn patch_is_nonnegative_and_deterministic() {
        let (spec, m) = model(3.5, 9);
        let a = synthesize_patch(&m, &spec, 650.0, 3.5).unwrap();
        let b = synthesize_patch(&m, &spec, 650.0, 3.5).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&v| v >= 0.0));
        let mean: f64 = m
            .disk_pixels()
            .iter()
            .map(|&p| a.values[p as usize])
            .sum::<f64>()
            / m.disk_pixels().len() as f64;
        assert!(mean > 0.3 && mean < 3.0, "{mean}");
        // corners are outside the core disk
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn band_nodes_sum_to_one() {
        let nodes = band_nodes(670.0, 0.5);
        assert_eq!(nodes.len(), 5);
        let s: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
        let mean: f64 = nodes.iter().map(|n| n.0 * n.1).sum();
        assert!((mean - 670.0).abs() < 1e-9);
        assert!(nodes.iter().all(|n| (n.0 - 670.0).abs() <= 0.25));
    }

    #[test]
    fn zero_linewidth_band_matches_monochromatic() {
        let (spec, m) = model(3.5, 3);
        let src = SourceModel {
            center_nm: 660.0,
            linewidth_nm: 0.0,
            incidence_deg: 3.5,
        };
        assert_eq!(
            synthesize_band(&m, &spec, &src).unwrap(),
            synthesize_patch(&m, &spec, 660.0, 3.5).unwrap()
        );
    }

    #[test]
    fn invalid_wavelength_or_angle() {
        let (spec, m) = model(3.5, 3);
        assert!(synthesize_patch(&m, &spec, 0.0, 3.5).is_err());
        assert!(synthesize_patch(&m, &spec, 600.0, 5.0).is_err());
        assert!(synthesize_polarized(&m, &spec, 600.0, 1.0, Polarization::Single(2)).is_err());
    }
}
