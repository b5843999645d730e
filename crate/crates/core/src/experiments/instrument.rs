//! A simulated bundle, camera and calibration run.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::clustering::{centered_aoi, extract_core_map, CoreMap, CoreSite, DbscanParams};
use crate::error::{Error, Result};
use crate::frame::{SpeckleFrame, MAX_COUNT};
use crate::optics::{
    band_disk_intensities, build_core_model, disk_pixels, BundleLayout, Camera, FiberSpec,
    LinearFrame, SourceModel, WavelengthGrid,
};
use crate::rng::derive_seed;
use crate::stm::{calibrate, Stm};

/// Fraction of full scale the brightest pixel reaches under auto exposure.
pub const EXPOSURE_FILL: f64 = 0.9;
/// Largest detected-to-true centroid distance accepted when matching sites.
pub const MATCH_RADIUS_PX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentConfig {
    pub fiber: FiberSpec,
    pub grid: WavelengthGrid,
    pub incidence_deg: f64,
    /// Linewidth of the tunable source used for calibration frames.
    pub calibration_linewidth_nm: f64,
    pub patch_size_px: usize,
    pub pitch_px: f64,
    pub jitter_px: f64,
    pub aoi_size_px: usize,
    pub pixels_per_core: usize,
    pub dbscan: DbscanParams,
    pub seed: u64,
}

impl InstrumentConfig {
    /// Bench geometry derived from the grid: `Y = 4·X` calibrated pixels
    /// per core, the smallest even patch (at least 20 px) whose disk holds
    /// 1.5·Y pixels, an AOI equal to the patch and a pixel pitch that keeps
    /// the fiber's pitch-to-diameter ratio plus one pixel of clearance.
    pub fn for_grid(fiber: FiberSpec, grid: WavelengthGrid, seed: u64) -> Self {
        let pixels_per_core = 4 * grid.len();
        let mut patch = 20;
        while std::f64::consts::FRAC_PI_4 * ((patch * patch) as f64) < 1.5 * pixels_per_core as f64
        {
            patch += 2;
        }
        let pitch_px = (patch as f64 * fiber.pitch_m / fiber.core_diameter_m).ceil() + 1.0;
        InstrumentConfig {
            fiber,
            grid,
            incidence_deg: 3.5,
            calibration_linewidth_nm: 0.0,
            patch_size_px: patch,
            pitch_px,
            jitter_px: 0.5,
            aoi_size_px: patch,
            pixels_per_core,
            dbscan: DbscanParams::default(),
            seed,
        }
    }

    /// 200 cores, 43 channels over 609–694 nm.
    pub fn sweeps(seed: u64) -> Self {
        let grid = WavelengthGrid::uniform(609.0, 85.0 / 42.0, 43).expect("valid grid");
        Self::for_grid(FiberSpec::default(), grid, seed)
    }

    /// 200 cores, 111 channels from 654 nm at 0.4 nm, calibrated with a
    /// 0.5 nm line.
    pub fn letters(seed: u64) -> Self {
        let grid = WavelengthGrid::uniform(654.0, 0.4, 111).expect("valid grid");
        InstrumentConfig {
            calibration_linewidth_nm: 0.5,
            ..Self::for_grid(FiberSpec::default(), grid, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        self.dbscan.validate()?;
        self.source().validate()?;
        if self.calibration_linewidth_nm < 0.0 {
            return Err(Error::invalid("calibration linewidth must be >= 0"));
        }
        if self.aoi_size_px > self.patch_size_px + 2 {
            return Err(Error::invalid(
                "AOI must not be much larger than the core patch",
            ));
        }
        if self.pixels_per_core > self.aoi_size_px * self.aoi_size_px {
            return Err(Error::invalid("pixels_per_core exceeds the AOI area"));
        }
        Ok(())
    }

    pub fn source(&self) -> SourceModel {
        SourceModel {
            center_nm: self.grid.center_nm(),
            linewidth_nm: self.calibration_linewidth_nm,
            incidence_deg: self.incidence_deg,
        }
    }
}

/// Forward model of the bundle and camera: true core geometry plus each
/// core's spectral response (`disk pixels × X`, before quantization).
#[derive(Debug, Clone)]
pub struct Bench {
    grid: WavelengthGrid,
    layout: BundleLayout,
    disk: Vec<u32>,
    cube: Vec<DMatrix<f32>>,
    calibration_gain: f64,
}

impl Bench {
    pub fn build(config: &InstrumentConfig) -> Result<Self> {
        config.validate()?;
        let n = config.fiber.core_count;
        let layout = BundleLayout::hexagonal(
            n,
            config.patch_size_px,
            config.pitch_px,
            config.jitter_px,
            derive_seed(config.seed, &[1]),
        )?;
        let source = config.source();
        let cube = (0..n)
            .into_par_iter()
            .map(|core| {
                let model = build_core_model(
                    &config.fiber,
                    &source,
                    config.patch_size_px,
                    derive_seed(config.seed, &[2, core as u64]),
                )?;
                band_disk_intensities(
                    &model,
                    &config.fiber,
                    config.grid.values(),
                    config.calibration_linewidth_nm,
                    config.incidence_deg,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let peak = cube.iter().map(|m| m.max()).fold(0f32, f32::max) as f64;
        Ok(Bench {
            grid: config.grid.clone(),
            disk: disk_pixels(config.patch_size_px),
            layout,
            cube,
            calibration_gain: EXPOSURE_FILL * MAX_COUNT as f64 / peak.max(f64::MIN_POSITIVE),
        })
    }

    pub fn layout(&self) -> &BundleLayout {
        &self.layout
    }

    pub fn core_count(&self) -> usize {
        self.layout.core_count()
    }

    /// Spectral response of one core, `disk pixels × X`.
    pub fn response(&self, core: usize) -> &DMatrix<f32> {
        &self.cube[core]
    }

    /// Linear frame for per-core spectra over the grid (one nonnegative
    /// vector of length X per true core).
    pub fn render_linear(&self, spectra: &[Vec<f64>]) -> Result<LinearFrame> {
        let x = self.grid.len();
        if spectra.len() != self.core_count() {
            return Err(Error::invalid(format!(
                "{} spectra for {} cores",
                spectra.len(),
                self.core_count()
            )));
        }
        if let Some(s) = spectra.iter().find(|s| s.len() != x) {
            return Err(Error::invalid(format!(
                "spectrum has {} entries, grid has {x}",
                s.len()
            )));
        }
        if spectra
            .iter()
            .flatten()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(
                "scene spectra must be finite and nonnegative",
            ));
        }
        let columns: Vec<Option<DVector<f32>>> = spectra
            .par_iter()
            .zip(self.cube.par_iter())
            .map(|(s, m)| {
                if s.iter().all(|&v| v == 0.0) {
                    return None;
                }
                Some(m * DVector::from_iterator(x, s.iter().map(|&v| v as f32)))
            })
            .collect();
        let mut frame = LinearFrame::zeros(self.layout.width, self.layout.height);
        for (core, col) in columns.iter().enumerate() {
            if let Some(col) = col {
                self.layout
                    .splat(&mut frame, core, &self.disk, col.iter().map(|&v| v as f64))?;
            }
        }
        Ok(frame)
    }

    /// Scene frame with automatic exposure.
    pub fn render_scene(&self, spectra: &[Vec<f64>]) -> Result<SpeckleFrame> {
        let linear = self.render_linear(spectra)?;
        Ok(Camera::auto_exposed(&linear, EXPOSURE_FILL, f64::MAX).expose(&linear))
    }

    /// Every core lit by a single grid wavelength, at one gain shared by all
    /// calibration frames.
    pub fn calibration_frame(&self, channel: usize) -> Result<SpeckleFrame> {
        let x = self.grid.len();
        if channel >= x {
            return Err(Error::invalid(format!(
                "channel {channel} outside grid of {x}"
            )));
        }
        let mut frame = LinearFrame::zeros(self.layout.width, self.layout.height);
        for (core, m) in self.cube.iter().enumerate() {
            self.layout.splat(
                &mut frame,
                core,
                &self.disk,
                m.column(channel).iter().map(|&v| v as f64),
            )?;
        }
        Ok(Camera {
            gain: self.calibration_gain,
        }
        .expose(&frame))
    }

    pub fn calibration_frames(&self) -> Result<Vec<SpeckleFrame>> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|j| self.calibration_frame(j))
            .collect()
    }

    /// Broadband illumination of every core (flat spectrum over the grid).
    pub fn white_light_frame(&self) -> Result<SpeckleFrame> {
        let x = self.grid.len();
        self.render_scene(&vec![vec![1.0 / x as f64; x]; self.core_count()])
    }

    /// Core map built from the true centers, with AOIs as detection would
    /// place them.
    pub fn true_core_map(&self, aoi_size_px: usize) -> CoreMap {
        let (w, h) = (self.layout.width, self.layout.height);
        CoreMap {
            frame_width: w,
            frame_height: h,
            sites: self
                .layout
                .centers
                .iter()
                .enumerate()
                .map(|(i, c)| CoreSite {
                    id: i as u32,
                    cx: c[0],
                    cy: c[1],
                    aoi: centered_aoi(c[0], c[1], aoi_size_px, w, h),
                })
                .collect(),
        }
    }

    /// Nearest true core within [`MATCH_RADIUS_PX`] of each detected site.
    pub fn match_sites(&self, map: &CoreMap) -> Vec<Option<usize>> {
        map.sites
            .iter()
            .map(|s| {
                self.layout
                    .centers
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, (c[0] - s.cx).hypot(c[1] - s.cy)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .filter(|&(_, d)| d <= MATCH_RADIUS_PX)
                    .map(|(i, _)| i)
            })
            .collect()
    }
}

/// A bench after core detection and calibration.
#[derive(Debug, Clone)]
pub struct Instrument {
    config: InstrumentConfig,
    bench: Bench,
    core_map: CoreMap,
    site_truth: Vec<Option<usize>>,
    stm: Stm,
    skipped: Vec<u32>,
}

impl Instrument {
    pub fn build(config: InstrumentConfig) -> Result<Self> {
        let bench = Bench::build(&config)?;
        let white = bench.white_light_frame()?;
        let core_map = extract_core_map(&white, &config.dbscan, config.aoi_size_px)?;
        let site_truth = bench.match_sites(&core_map);
        let frames = bench.calibration_frames()?;
        let cal = calibrate(&frames, &config.grid, &core_map, config.pixels_per_core)?;
        Ok(Instrument {
            config,
            bench,
            core_map,
            site_truth,
            stm: cal.stm,
            skipped: cal.skipped,
        })
    }

    pub fn config(&self) -> &InstrumentConfig {
        &self.config
    }

    pub fn bench(&self) -> &Bench {
        &self.bench
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.config.grid
    }

    pub fn core_count(&self) -> usize {
        self.bench.core_count()
    }

    pub fn core_map(&self) -> &CoreMap {
        &self.core_map
    }

    pub fn stm(&self) -> &Stm {
        &self.stm
    }

    /// Sites the calibration had to leave out.
    pub fn skipped(&self) -> &[u32] {
        &self.skipped
    }

    /// True core index of every detected site, `None` for spurious sites.
    pub fn site_truth(&self) -> &[Option<usize>] {
        &self.site_truth
    }

    /// `(site id, true core)` for every STM core that matches a true core.
    pub fn matched_cores(&self) -> Vec<(u32, usize)> {
        self.stm
            .cores()
            .iter()
            .filter_map(|c| {
                self.site_truth
                    .get(c.id as usize)
                    .copied()
                    .flatten()
                    .map(|t| (c.id, t))
            })
            .collect()
    }

    pub fn render_scene(&self, spectra: &[Vec<f64>]) -> Result<SpeckleFrame> {
        self.bench.render_scene(spectra)
    }
}
