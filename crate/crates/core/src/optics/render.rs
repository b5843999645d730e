//! Compositing per-core speckle patches into camera frames.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fiber::{FiberSpec, SourceModel};
use super::model::{band_disk_intensities, CoreModel};
use crate::error::{Error, Result};
use crate::frame::{SpeckleFrame, MAX_COUNT};
use crate::rng::stream_rng;

/// Counts per unit of simulated intensity; a unit-weight core averages
/// about 700 counts, leaving headroom for bright speckle grains.
pub const DEFAULT_GAIN: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub gain: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera { gain: DEFAULT_GAIN }
    }
}

impl Camera {
    /// Quantizes a linear frame to 12-bit counts with saturation.
    pub fn expose(&self, frame: &LinearFrame) -> SpeckleFrame {
        let values = frame
            .values
            .iter()
            .map(|&v| (v * self.gain).round().clamp(0.0, MAX_COUNT as f64) as u16)
            .collect();
        SpeckleFrame::new(frame.width, frame.height, values)
            .expect("quantized frame is within range by construction")
    }

    /// A camera whose gain maps the brightest pixel of `frame` to `fill`
    /// of full scale (never exceeding `cap`).
    pub fn auto_exposed(frame: &LinearFrame, fill: f64, cap: f64) -> Camera {
        let peak = frame.values.iter().cloned().fold(0.0, f64::max);
        let gain = if peak > 0.0 {
            (fill * MAX_COUNT as f64 / peak).min(cap)
        } else {
            cap
        };
        Camera { gain }
    }
}

/// Pre-quantization intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl LinearFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        LinearFrame {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }
}

/// Positions of every core's patch on the camera.
///
/// `centers` are the intensity centers of each patch, i.e. the patch origin
/// plus `(patch − 1)/2` in both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleLayout {
    pub width: usize,
    pub height: usize,
    pub patch_size_px: usize,
    pub centers: Vec<[f64; 2]>,
}

impl BundleLayout {
    /// Cores on a hexagonal lattice, the `core_count` sites closest to the
    /// bundle axis, each displaced by up to `jitter_px` (snapped to whole
    /// pixels). A dark margin of half a pitch surrounds the bundle.
    pub fn hexagonal(
        core_count: usize,
        patch_size_px: usize,
        pitch_px: f64,
        jitter_px: f64,
        seed: u64,
    ) -> Result<Self> {
        if core_count == 0 {
            return Err(Error::invalid("core_count must be >= 1"));
        }
        if pitch_px < patch_size_px as f64 {
            return Err(Error::Layout(format!(
                "pitch {pitch_px} px smaller than patch {patch_size_px} px"
            )));
        }
        let rings = ((core_count as f64).sqrt() as i64) + 2;
        let row_h = pitch_px * 3f64.sqrt() / 2.0;
        let mut sites: Vec<(f64, f64)> = Vec::new();
        for r in -rings..=rings {
            for q in -2 * rings..=2 * rings {
                let x = (q as f64 + 0.5 * r.rem_euclid(2) as f64) * pitch_px;
                let y = r as f64 * row_h;
                sites.push((x, y));
            }
        }
        sites.sort_by(|a, b| {
            let da = a.0 * a.0 + a.1 * a.1;
            let db = b.0 * b.0 + b.1 * b.1;
            da.total_cmp(&db)
                .then(a.1.total_cmp(&b.1))
                .then(a.0.total_cmp(&b.0))
        });
        sites.truncate(core_count);

        let mut rng = stream_rng(seed, 0x1a70);
        let half = (patch_size_px as f64 - 1.0) / 2.0;
        let mut origins: Vec<(i64, i64)> = sites
            .iter()
            .map(|&(x, y)| {
                let jx = jitter_px * (2.0 * rng.random::<f64>() - 1.0);
                let jy = jitter_px * (2.0 * rng.random::<f64>() - 1.0);
                (
                    (x + jx - half).round() as i64,
                    (y + jy - half).round() as i64,
                )
            })
            .collect();

        let margin = (pitch_px / 2.0).ceil() as i64;
        let min_x = origins.iter().map(|o| o.0).min().unwrap();
        let min_y = origins.iter().map(|o| o.1).min().unwrap();
        for o in origins.iter_mut() {
            o.0 += margin - min_x;
            o.1 += margin - min_y;
        }
        let p = patch_size_px as i64;
        let width = (origins.iter().map(|o| o.0).max().unwrap() + p + margin) as usize;
        let height = (origins.iter().map(|o| o.1).max().unwrap() + p + margin) as usize;
        let centers = origins
            .iter()
            .map(|&(x, y)| [x as f64 + half, y as f64 + half])
            .collect();
        Ok(BundleLayout {
            width,
            height,
            patch_size_px,
            centers,
        })
    }

    pub fn core_count(&self) -> usize {
        self.centers.len()
    }

    /// Top-left pixel of a core's patch; errors if the patch leaves the frame.
    pub fn origin(&self, core: usize) -> Result<(usize, usize)> {
        let half = (self.patch_size_px as f64 - 1.0) / 2.0;
        let [cx, cy] = self.centers[core];
        let ox = (cx - half).round();
        let oy = (cy - half).round();
        let p = self.patch_size_px as f64;
        if ox < 0.0 || oy < 0.0 || ox + p > self.width as f64 || oy + p > self.height as f64 {
            return Err(Error::Layout(format!(
                "core {core} centered at ({cx:.1}, {cy:.1}) does not fit a {} px patch in a {}x{} frame",
                self.patch_size_px, self.width, self.height
            )));
        }
        Ok((ox as usize, oy as usize))
    }

    /// Adds `weight × column` at the core's disk pixels.
    pub fn splat(
        &self,
        frame: &mut LinearFrame,
        core: usize,
        disk_pixels: &[u32],
        column: impl IntoIterator<Item = f64>,
    ) -> Result<()> {
        let (ox, oy) = self.origin(core)?;
        let p = self.patch_size_px;
        for (&idx, v) in disk_pixels.iter().zip(column) {
            let (px, py) = (idx as usize % p, idx as usize / p);
            frame.values[(oy + py) * frame.width + ox + px] += v;
        }
        Ok(())
    }
}

/// Renders the bundle without quantization.
///
/// Finite source linewidths are averaged with five-point Gauss-Legendre
/// quadrature.
pub fn render_bundle_linear(
    spec: &FiberSpec,
    models: &[CoreModel],
    layout: &BundleLayout,
    source: &SourceModel,
    scene_weights: &[f64],
) -> Result<LinearFrame> {
    source.validate()?;
    let n = layout.core_count();
    if models.len() != n || scene_weights.len() != n {
        return Err(Error::Layout(format!(
            "{} cores in layout but {} models and {} scene weights",
            n,
            models.len(),
            scene_weights.len()
        )));
    }
    if let Some(w) = scene_weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::invalid(format!("scene weight {w} outside [0, 1]")));
    }
    for (core, model) in models.iter().enumerate() {
        layout.origin(core)?;
        if model.patch_size_px() != layout.patch_size_px {
            return Err(Error::Layout(format!(
                "core {core} model patch {} px differs from layout patch {} px",
                model.patch_size_px(),
                layout.patch_size_px
            )));
        }
    }

    let mut frame = LinearFrame::zeros(layout.width, layout.height);
    for (core, model) in models.iter().enumerate() {
        let w = scene_weights[core];
        if w == 0.0 {
            continue;
        }
        let disk = band_disk_intensities(
            model,
            spec,
            &[source.center_nm],
            source.linewidth_nm,
            source.incidence_deg,
        )?;
        layout.splat(
            &mut frame,
            core,
            model.disk_pixels(),
            disk.column(0).iter().map(|&v| w * v as f64),
        )?;
    }
    Ok(frame)
}

/// Renders and quantizes the bundle to a 12-bit frame.
pub fn render_bundle(
    spec: &FiberSpec,
    models: &[CoreModel],
    layout: &BundleLayout,
    source: &SourceModel,
    scene_weights: &[f64],
    camera: &Camera,
) -> Result<SpeckleFrame> {
    let linear = render_bundle_linear(spec, models, layout, source, scene_weights)?;
    Ok(camera.expose(&linear))
}
