//! Spectral intensity transmission matrix.
//!
//! For every detected core the STM holds a `Y × X` matrix whose column `j`
//! is the core's speckle pattern, unwrapped over `Y` selected camera pixels,
//! under illumination at grid wavelength `j`. Entries are camera counts
//! divided by the global 12-bit maximum, stored as `f32`.
//!
//! On disk the STM is a little-endian container:
//!
//! ```text
//! "STM1" | u32 version=1 | u32 core_count | u32 X | f64 × X grid (nm)
//! per core: u32 id | f64 cx | f64 cy | u32 Y | u32 × 2Y pixel (x, y) | f32 × Y·X matrix, row-major
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::clustering::CoreMap;
use crate::error::{Error, Result};
use crate::frame::{normalize_count, SpeckleFrame};
use crate::optics::WavelengthGrid;
use crate::rng::stream_rng;

pub const STM_MAGIC: &[u8; 4] = b"STM1";
pub const STM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StmCore {
    pub id: u32,
    pub cx: f64,
    pub cy: f64,
    /// Camera pixel `(x, y)` of every row.
    pub pixels: Vec<(u32, u32)>,
    /// `Y × X`, row-major.
    pub matrix: Vec<f32>,
}

impl StmCore {
    pub fn rows(&self) -> usize {
        self.pixels.len()
    }

    pub fn row(&self, r: usize, columns: usize) -> &[f32] {
        &self.matrix[r * columns..(r + 1) * columns]
    }

    pub fn column(&self, j: usize, columns: usize) -> Vec<f32> {
        (0..self.rows())
            .map(|r| self.matrix[r * columns + j])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stm {
    grid: WavelengthGrid,
    cores: Vec<StmCore>,
}

/// Result of [`calibrate`]: the matrix plus the sites that had to be left out.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub stm: Stm,
    pub skipped: Vec<u32>,
}

/// Camera pixels read for one core, length `Y`, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelVector {
    pub values: Vec<f64>,
}

impl PixelVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Nonnegative intensities over a calibrated wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
}

/// Entries above this fraction of the spectrum's maximum count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "spectrum entries must be finite and nonnegative",
            ));
        }
        Ok(Spectrum { values })
    }

    pub fn zeros(len: usize) -> Self {
        Spectrum {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices with value above `SUPPORT_THRESHOLD × max`.
    pub fn support(&self) -> Vec<usize> {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > SUPPORT_THRESHOLD * max)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of wavelengths in the support, N_λ.
    pub fn sparsity(&self) -> usize {
        self.support().len()
    }

    pub fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }
}

/// AOI pixels ordered as growing centered squares: by Chebyshev distance
/// from the centroid, then Euclidean distance, then raster order. Taking a
/// prefix of this list selects the most central block of the AOI.
pub fn centered_pixel_order(site: &crate::clustering::CoreSite) -> Vec<(u32, u32)> {
    let aoi = site.aoi;
    let mut px: Vec<(u32, u32)> = (aoi.y0..aoi.y0 + aoi.height)
        .flat_map(|y| (aoi.x0..aoi.x0 + aoi.width).map(move |x| (x as u32, y as u32)))
        .collect();
    px.sort_by(|&a, &b| centered_cmp(site.cx, site.cy, a, b));
    px
}

fn centered_cmp(cx: f64, cy: f64, a: (u32, u32), b: (u32, u32)) -> std::cmp::Ordering {
    let key = |(x, y): (u32, u32)| {
        let dx = (x as f64 - cx).abs();
        let dy = (y as f64 - cy).abs();
        (dx.max(dy), dx.hypot(dy))
    };
    let (ca, ea) = key(a);
    let (cb, eb) = key(b);
    ca.total_cmp(&cb)
        .then(ea.total_cmp(&eb))
        .then(a.1.cmp(&b.1))
        .then(a.0.cmp(&b.0))
}

/// Builds the STM from one frame per grid wavelength.
///
/// Each site keeps the `pixels_per_core` most central pixels of its AOI,
/// stored in raster order. Sites whose clipped AOI holds fewer pixels are
/// skipped and listed in [`Calibration::skipped`].
pub fn calibrate(
    frames: &[SpeckleFrame],
    grid: &WavelengthGrid,
    core_map: &CoreMap,
    pixels_per_core: usize,
) -> Result<Calibration> {
    if frames.len() != grid.len() {
        return Err(Error::Calibration(format!(
            "{} frames for a {}-wavelength grid",
            frames.len(),
            grid.len()
        )));
    }
    if pixels_per_core == 0 {
        return Err(Error::Calibration("pixels_per_core must be >= 1".into()));
    }
    let (w, h) = (core_map.frame_width, core_map.frame_height);
    if let Some(f) = frames.iter().find(|f| f.width() != w || f.height() != h) {
        return Err(Error::Calibration(format!(
            "frame is {}x{} but core map expects {w}x{h}",
            f.width(),
            f.height()
        )));
    }
    if let Some(s) = core_map.sites.iter().max_by_key(|s| s.aoi.area()) {
        if pixels_per_core > s.aoi.area() {
            return Err(Error::Calibration(format!(
                "pixels_per_core {pixels_per_core} exceeds AOI area {}",
                s.aoi.area()
            )));
        }
    }

    let x = grid.len();
    let mut cores = Vec::with_capacity(core_map.len());
    let mut skipped = Vec::new();
    for site in &core_map.sites {
        let order = centered_pixel_order(site);
        if order.len() < pixels_per_core {
            skipped.push(site.id);
            continue;
        }
        let mut pixels = order[..pixels_per_core].to_vec();
        pixels.sort_by_key(|&(px, py)| (py, px));
        let mut matrix = vec![0f32; pixels_per_core * x];
        for (j, frame) in frames.iter().enumerate() {
            for (r, &(px, py)) in pixels.iter().enumerate() {
                matrix[r * x + j] = normalize_count(frame.get(px as usize, py as usize));
            }
        }
        cores.push(StmCore {
            id: site.id,
            cx: site.cx,
            cy: site.cy,
            pixels,
            matrix,
        });
    }
    Ok(Calibration {
        stm: Stm {
            grid: grid.clone(),
            cores,
        },
        skipped,
    })
}

impl Stm {
    pub fn from_parts(grid: WavelengthGrid, cores: Vec<StmCore>) -> Result<Self> {
        let stm = Stm { grid, cores };
        stm.validate()?;
        Ok(stm)
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn cores(&self) -> &[StmCore] {
        &self.cores
    }

    pub fn columns(&self) -> usize {
        self.grid.len()
    }

    pub fn core(&self, id: u32) -> Result<&StmCore> {
        // ids are usually dense, so try the direct slot first
        if let Some(c) = self.cores.get(id as usize).filter(|c| c.id == id) {
            return Ok(c);
        }
        self.cores
            .iter()
            .find(|c| c.id == id)
            .ok_or(Error::UnknownCore(id))
    }

    fn validate(&self) -> Result<()> {
        let x = self.grid.len();
        let mut ids: Vec<u32> = self.cores.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate core id in STM"));
        }
        for c in &self.cores {
            if c.pixels.is_empty() {
                return Err(Error::invalid(format!("core {} has no pixels", c.id)));
            }
            if c.matrix.len() != c.pixels.len() * x {
                return Err(Error::invalid(format!(
                    "core {} matrix has {} entries, expected {}x{}",
                    c.id,
                    c.matrix.len(),
                    c.pixels.len(),
                    x
                )));
            }
            let mut px = c.pixels.clone();
            px.sort_unstable();
            if px.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("core {} repeats a pixel", c.id)));
            }
            if c.matrix.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "core {} entries outside [0, 1]",
                    c.id
                )));
            }
        }
        Ok(())
    }

    /// Reads one core's calibrated pixels from `frame`, in calibration order
    /// and with calibration normalization.
    pub fn extract_pixel_vector(&self, frame: &SpeckleFrame, core_id: u32) -> Result<PixelVector> {
        let core = self.core(core_id)?;
        let values = core
            .pixels
            .iter()
            .map(|&(x, y)| {
                if x as usize >= frame.width() || y as usize >= frame.height() {
                    return Err(Error::invalid(format!(
                        "pixel ({x}, {y}) of core {core_id} outside {}x{} frame",
                        frame.width(),
                        frame.height()
                    )));
                }
                Ok(normalize_count(frame.get(x as usize, y as usize)) as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(PixelVector { values })
    }

    /// Keeps `round(ratio·X)` rows per core, drawn uniformly without
    /// replacement. Each core's rows come from a fixed seeded permutation, so
    /// a smaller ratio keeps a subset of the rows kept by a larger one.
    pub fn subsample(&self, ratio: f64, seed: u64) -> Result<Stm> {
        self.keep_rows(ratio, |c, keep| {
            let mut perm: Vec<usize> = (0..c.rows()).collect();
            perm.shuffle(&mut stream_rng(seed, c.id as u64));
            perm.truncate(keep);
            perm
        })
    }

    /// Keeps the `round(ratio·X)` rows nearest each core's centroid, in the
    /// centered-square order used at calibration. Smaller ratios select
    /// nested central blocks.
    pub fn subsample_centered(&self, ratio: f64) -> Result<Stm> {
        self.keep_rows(ratio, |c, keep| {
            let mut rows: Vec<usize> = (0..c.rows()).collect();
            rows.sort_by(|&a, &b| centered_cmp(c.cx, c.cy, c.pixels[a], c.pixels[b]));
            rows.truncate(keep);
            rows
        })
    }

    fn keep_rows(&self, ratio: f64, pick: impl Fn(&StmCore, usize) -> Vec<usize>) -> Result<Stm> {
        let x = self.grid.len();
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(Error::invalid(format!(
                "sampling ratio must be positive, got {ratio}"
            )));
        }
        let keep = (ratio * x as f64).round() as usize;
        if keep == 0 {
            return Err(Error::invalid(format!(
                "ratio {ratio} keeps no rows of a {x}-channel STM"
            )));
        }
        let mut cores = Vec::with_capacity(self.cores.len());
        for c in &self.cores {
            let y = c.rows();
            if keep > y {
                return Err(Error::invalid(format!(
                    "ratio {ratio} needs {keep} rows but core {} has {y}",
                    c.id
                )));
            }
            let mut rows = pick(c, keep);
            rows.sort_unstable();
            let mut matrix = Vec::with_capacity(keep * x);
            for &r in &rows {
                matrix.extend_from_slice(c.row(r, x));
            }
            cores.push(StmCore {
                id: c.id,
                cx: c.cx,
                cy: c.cy,
                pixels: rows.iter().map(|&r| c.pixels[r]).collect(),
                matrix,
            });
        }
        Ok(Stm {
            grid: self.grid.clone(),
            cores,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STM_MAGIC);
        out.extend_from_slice(&STM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.cores.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.len() as u32).to_le_bytes());
        for v in self.grid.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.cores {
            out.extend_from_slice(&c.id.to_le_bytes());
            out.extend_from_slice(&c.cx.to_le_bytes());
            out.extend_from_slice(&c.cy.to_le_bytes());
            out.extend_from_slice(&(c.pixels.len() as u32).to_le_bytes());
            for &(x, y) in &c.pixels {
                out.extend_from_slice(&x.to_le_bytes());
                out.extend_from_slice(&y.to_le_bytes());
            }
            for v in &c.matrix {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Stm> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != STM_MAGIC {
            return Err(Error::format(0, "bad magic: expected \"STM1\""));
        }
        let version = r.u32()?;
        if version != STM_VERSION {
            return Err(Error::format(
                4,
                format!("unsupported STM version {version}"),
            ));
        }
        let core_count = r.u32()? as usize;
        let x = r.u32()? as usize;
        if x == 0 {
            return Err(Error::format(12, "STM grid is empty"));
        }
        let grid_at = r.pos;
        let grid: Vec<f64> = (0..x).map(|_| r.f64()).collect::<Result<_>>()?;
        let grid =
            WavelengthGrid::new(grid).map_err(|e| Error::format(grid_at as u64, e.to_string()))?;
        let mut cores = Vec::with_capacity(core_count.min(1 << 16));
        for _ in 0..core_count {
            let id = r.u32()?;
            let cx = r.f64()?;
            let cy = r.f64()?;
            let y = r.u32()? as usize;
            // reject lengths the remaining bytes cannot possibly hold
            let need = y
                .saturating_mul(8)
                .saturating_add(y.saturating_mul(x).saturating_mul(4));
            if need > r.remaining() {
                return Err(Error::format(
                    bytes.len() as u64,
                    format!(
                        "truncated: core {id} needs {need} bytes, {} remain",
                        r.remaining()
                    ),
                ));
            }
            let pixels = (0..y)
                .map(|_| Ok((r.u32()?, r.u32()?)))
                .collect::<Result<Vec<_>>>()?;
            let matrix = (0..y * x).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            cores.push(StmCore {
                id,
                cx,
                cy,
                pixels,
                matrix,
            });
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                r.pos as u64,
                "trailing bytes after last core",
            ));
        }
        let stm = Stm { grid, cores };
        stm.validate()
            .map_err(|e| Error::format(r.pos as u64, e.to_string()))?;
        Ok(stm)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Stm> {
        let bytes = fs::read(path)?;
        Stm::from_bytes(&bytes)
    }
}

pub fn save_stm(stm: &Stm, path: impl AsRef<Path>) -> Result<()> {
    stm.save(path)
}

pub fn load_stm(path: impl AsRef<Path>) -> Result<Stm> {
    Stm::load(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated: need {n} bytes, {} remain", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{Aoi, CoreSite};
    use proptest::prelude::*;

    fn toy_map() -> CoreMap {
        CoreMap {
            frame_width: 24,
            frame_height: 12,
            sites: vec![
                CoreSite {
                    id: 0,
                    cx: 5.5,
                    cy: 5.5,
                    aoi: Aoi {
                        x0: 2,
                        y0: 2,
                        width: 8,
                        height: 8,
                    },
                },
                CoreSite {
                    id: 1,
                    cx: 17.5,
                    cy: 5.5,
                    aoi: Aoi {
                        x0: 14,
                        y0: 2,
                        width: 8,
                        height: 8,
                    },
                },
            ],
        }
    }

    fn toy_frame(seed: u16) -> SpeckleFrame {
        let v = (0..24 * 12)
            .map(|i| {
                ((i as u32)
                    .wrapping_mul(2654435761u32)
                    .rotate_left(seed as u32 % 31)
                    % 4096) as u16
            })
            .collect();
        SpeckleFrame::new(24, 12, v).unwrap()
    }

    fn toy_stm(x: usize, y: usize) -> Stm {
        let grid = WavelengthGrid::uniform(600.0, 2.0, x).unwrap();
        let frames: Vec<_> = (0..x).map(|j| toy_frame(j as u16)).collect();
        calibrate(&frames, &grid, &toy_map(), y).unwrap().stm
    }

    #[test]
    fn shapes_and_normalization() {
        let stm = toy_stm(5, 16);
        for c in stm.cores() {
            assert_eq!(c.rows(), 16);
            assert_eq!(c.matrix.len(), 16 * 5);
            assert!(c.matrix.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn central_block_selected() {
        let stm = toy_stm(1, 16);
        let c = &stm.cores()[0];
        // 4x4 block centered on (5.5, 5.5)
        for &(x, y) in &c.pixels {
            assert!((4..=7).contains(&x) && (4..=7).contains(&y), "({x},{y})");
        }
    }

    #[test]
    fn single_frame_is_aoi_column() {
        let stm = toy_stm(1, 64);
        let f = toy_frame(0);
        let c = &stm.cores()[1];
        for (r, &(x, y)) in c.pixels.iter().enumerate() {
            assert_eq!(c.matrix[r], normalize_count(f.get(x as usize, y as usize)));
        }
    }

    #[test]
    fn identical_frames_identical_columns() {
        let grid = WavelengthGrid::uniform(600.0, 2.0, 2).unwrap();
        let f = toy_frame(3);
        let stm = calibrate(&[f.clone(), f], &grid, &toy_map(), 20)
            .unwrap()
            .stm;
        for c in stm.cores() {
            assert_eq!(c.column(0, 2), c.column(1, 2));
        }
    }

    #[test]
    fn extraction_reproduces_columns() {
        let x = 4;
        let stm = toy_stm(x, 30);
        for j in 0..x {
            let f = toy_frame(j as u16);
            for c in stm.cores() {
                let v = stm.extract_pixel_vector(&f, c.id).unwrap();
                let col: Vec<f64> = c.column(j, x).iter().map(|&v| v as f64).collect();
                assert_eq!(v.values, col);
            }
        }
        let dark = SpeckleFrame::dark(24, 12);
        assert!(stm
            .extract_pixel_vector(&dark, 0)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
        assert!(matches!(
            stm.extract_pixel_vector(&dark, 9),
            Err(Error::UnknownCore(9))
        ));
    }

    #[test]
    fn calibration_errors() {
        let grid = WavelengthGrid::uniform(600.0, 2.0, 3).unwrap();
        let f = toy_frame(0);
        assert!(matches!(
            calibrate(&[f.clone(), f.clone()], &grid, &toy_map(), 4),
            Err(Error::Calibration(_))
        ));
        assert!(calibrate(&[f.clone(), f.clone(), f.clone()], &grid, &toy_map(), 65).is_err());
    }

    #[test]
    fn clipped_site_skipped() {
        let mut map = toy_map();
        map.sites[1].aoi = Aoi {
            x0: 20,
            y0: 2,
            width: 4,
            height: 8,
        };
        let grid = WavelengthGrid::uniform(600.0, 2.0, 1).unwrap();
        let cal = calibrate(&[toy_frame(0)], &grid, &map, 40).unwrap();
        assert_eq!(cal.skipped, vec![1]);
        assert_eq!(cal.stm.cores().len(), 1);
    }

    #[test]
    fn subsample_keep_all_is_identity() {
        let stm = toy_stm(4, 20);
        assert_eq!(stm.subsample(20.0 / 4.0, 9).unwrap(), stm);
    }

    #[test]
    fn subsample_rounding_and_bounds() {
        let grid = WavelengthGrid::uniform(654.0, 0.4, 111).unwrap();
        let frames = vec![toy_frame(1); 111];
        let stm = calibrate(&frames, &grid, &toy_map(), 64).unwrap().stm;
        let sub = stm.subsample(0.14, 1).unwrap();
        assert!(sub.cores().iter().all(|c| c.rows() == 16));
        assert!(stm.subsample(0.001, 1).is_err());
        assert!(stm.subsample(1.0, 1).is_err());
        assert_eq!(
            stm.subsample(0.3, 5).unwrap(),
            stm.subsample(0.3, 5).unwrap()
        );
    }

    #[test]
    fn truncated_and_bad_magic() {
        let stm = toy_stm(3, 10);
        let bytes = stm.to_bytes();
        for cut in [3, 10, 30, bytes.len() - 1] {
            assert!(matches!(
                Stm::from_bytes(&bytes[..cut]),
                Err(Error::Format { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let msg = Stm::from_bytes(&bad).unwrap_err().to_string();
        assert!(msg.contains("STM1"), "{msg}");
        let mut ver = bytes;
        ver[4] = 2;
        assert!(Stm::from_bytes(&ver).is_err());
    }

    #[test]
    fn spectrum_support() {
        let s = Spectrum::new(vec![0.0, 1.0, 5e-4, 0.3]).unwrap();
        assert_eq!(s.support(), vec![1, 3]);
        assert_eq!(s.sparsity(), 2);
        assert_eq!(s.argmax(), Some(1));
        assert!(Spectrum::new(vec![-1.0]).is_err());
        assert_eq!(Spectrum::zeros(3).sparsity(), 0);
    }

    proptest! {
        #[test]
        fn subsample_nesting(seed in any::<u64>(), small in 1usize..10, extra in 0usize..10) {
            let stm = toy_stm(2, 40);
            let lo = stm.subsample(small as f64 / 2.0, seed).unwrap();
            let hi = stm.subsample((small + extra) as f64 / 2.0, seed).unwrap();
            for (a, b) in lo.cores().iter().zip(hi.cores()) {
                for p in &a.pixels {
                    prop_assert!(b.pixels.contains(p));
                }
            }
        }

        #[test]
        fn serialization_round_trip(x in 1usize..6, y in 1usize..30) {
            let stm = toy_stm(x, y);
            let back = Stm::from_bytes(&stm.to_bytes()).unwrap();
            prop_assert_eq!(&back, &stm);
            prop_assert_eq!(back.to_bytes(), stm.to_bytes());
        }
    }
}
