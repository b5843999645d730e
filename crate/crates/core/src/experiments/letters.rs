use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{pearson, Instrument, Scene};
use crate::clustering::{Aoi, CoreMap};
use crate::error::{Error, Result};
use crate::frame::encode_pgm;
use crate::optics::FiberSpec;
use crate::rng::derive_seed;
use crate::solver::{solve_pixel_vectors, CoreSpectrum, SolverOptions};
use crate::stm::{Spectrum, Stm};

pub const GLYPH_COLS: usize = 5;
pub const GLYPH_ROWS: usize = 7;
/// Fills the whole bundle footprint.
pub const SOLID_GLYPH: char = '█';

const FONT: [[&str; GLYPH_ROWS]; 26] = [
    [
        ".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#",
    ],
    [
        "####.", "#...#", "#...#", "####.", "#...#", "#...#", "####.",
    ],
    [
        ".###.", "#...#", "#....", "#....", "#....", "#...#", ".###.",
    ],
    [
        "####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####.",
    ],
    [
        "#####", "#....", "#....", "####.", "#....", "#....", "#####",
    ],
    [
        "#####", "#....", "#....", "####.", "#....", "#....", "#....",
    ],
    [
        ".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####",
    ],
    [
        "#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#",
    ],
    [
        ".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###.",
    ],
    [
        "..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##..",
    ],
    [
        "#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#",
    ],
    [
        "#....", "#....", "#....", "#....", "#....", "#....", "#####",
    ],
    [
        "#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#",
    ],
    [
        "#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#",
    ],
    [
        ".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###.",
    ],
    [
        "####.", "#...#", "#...#", "####.", "#....", "#....", "#....",
    ],
    [
        ".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#",
    ],
    [
        "####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#",
    ],
    [
        ".####", "#....", "#....", ".###.", "....#", "....#", "####.",
    ],
    [
        "#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#..",
    ],
    [
        "#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###.",
    ],
    [
        "#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#..",
    ],
    [
        "#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#.",
    ],
    [
        "#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#",
    ],
    [
        "#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#..",
    ],
    [
        "#####", "....#", "...#.", "..#..", ".#...", "#....", "#####",
    ],
];

/// Lit cells of a glyph, indexed `[row][col]` with row 0 at the top.
pub fn glyph_bitmap(glyph: char) -> Result<[[bool; GLYPH_COLS]; GLYPH_ROWS]> {
    if glyph == SOLID_GLYPH {
        return Ok([[true; GLYPH_COLS]; GLYPH_ROWS]);
    }
    let upper = glyph.to_ascii_uppercase();
    if !upper.is_ascii_uppercase() {
        return Err(Error::invalid(format!(
            "unsupported glyph {glyph:?}: expected A-Z or {SOLID_GLYPH:?}"
        )));
    }
    let rows = &FONT[(upper as u8 - b'A') as usize];
    let mut out = [[false; GLYPH_COLS]; GLYPH_ROWS];
    for (r, row) in rows.iter().enumerate() {
        for (c, ch) in row.bytes().enumerate() {
            out[r][c] = ch == b'#';
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn overlap(&self, o: &Rect) -> f64 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0.0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0.0);
        w * h
    }

    fn of_aoi(a: &Aoi) -> Rect {
        Rect {
            x0: a.x0 as f64 - 0.5,
            y0: a.y0 as f64 - 0.5,
            x1: (a.x0 + a.width) as f64 - 0.5,
            y1: (a.y0 + a.height) as f64 - 0.5,
        }
    }
}

/// Bounding box of the centroids grown by half the median spacing.
fn footprint(map: &CoreMap) -> Result<Rect> {
    let spacing = map
        .median_spacing()
        .ok_or_else(|| Error::invalid("rasterization needs at least two core sites"))?;
    let h = spacing / 2.0;
    let fold = |f: fn(f64, f64) -> f64, init: f64, key: fn(&crate::clustering::CoreSite) -> f64| {
        map.sites.iter().map(key).fold(init, f)
    };
    Ok(Rect {
        x0: fold(f64::min, f64::INFINITY, |s| s.cx) - h,
        y0: fold(f64::min, f64::INFINITY, |s| s.cy) - h,
        x1: fold(f64::max, f64::NEG_INFINITY, |s| s.cx) + h,
        y1: fold(f64::max, f64::NEG_INFINITY, |s| s.cy) + h,
    })
}

/// Per-site weight in `[0, 1]`: the fraction of the site's AOI covered by
/// lit glyph cells. Letters keep the 5:7 cell aspect, centered in the
/// bundle footprint at full height; the solid glyph covers the footprint.
pub fn rasterize_letter(glyph: char, core_map: &CoreMap) -> Result<Vec<f64>> {
    let bitmap = glyph_bitmap(glyph)?;
    let fp = footprint(core_map)?;
    let (fw, fh) = (fp.x1 - fp.x0, fp.y1 - fp.y0);
    let (cw, ch, ox, oy) = if glyph == SOLID_GLYPH {
        (fw / GLYPH_COLS as f64, fh / GLYPH_ROWS as f64, fp.x0, fp.y0)
    } else {
        let cell = (fw / GLYPH_COLS as f64).min(fh / GLYPH_ROWS as f64);
        let gw = cell * GLYPH_COLS as f64;
        let gh = cell * GLYPH_ROWS as f64;
        (cell, cell, fp.x0 + (fw - gw) / 2.0, fp.y0 + (fh - gh) / 2.0)
    };
    let cells: Vec<Rect> = (0..GLYPH_ROWS)
        .flat_map(|r| (0..GLYPH_COLS).map(move |c| (r, c)))
        .filter(|&(r, c)| bitmap[r][c])
        .map(|(r, c)| Rect {
            x0: ox + c as f64 * cw,
            y0: oy + r as f64 * ch,
            x1: ox + (c + 1) as f64 * cw,
            y1: oy + (r + 1) as f64 * ch,
        })
        .collect();
    Ok(core_map
        .sites
        .iter()
        .map(|s| {
            let aoi = Rect::of_aoi(&s.aoi);
            let area = (aoi.x1 - aoi.x0) * (aoi.y1 - aoi.y0);
            if area <= 0.0 {
                return 0.0;
            }
            let covered: f64 = cells.iter().map(|c| c.overlap(&aoi)).sum();
            (covered / area).clamp(0.0, 1.0)
        })
        .collect())
}

/// Real-valued image on the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SpatialMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// 16-bit PGM scaled so the largest value maps to 65535; negative
    /// values clamp to 0.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let samples: Vec<u16> = self
            .values
            .iter()
            .map(|&v| {
                if max > 0.0 {
                    (v / max * u16::MAX as f64)
                        .round()
                        .clamp(0.0, u16::MAX as f64) as u16
                } else {
                    0
                }
            })
            .collect();
        encode_pgm(self.width, self.height, u16::MAX, &samples)
    }
}

pub fn write_map_pgm(path: impl AsRef<Path>, map: &SpatialMap) -> Result<()> {
    fs::write(path, map.to_pgm_bytes())?;
    Ok(())
}

/// Disk of diameter `D/pitch × median spacing` at each site with a value;
/// sites without a value stay dark.
pub fn assemble_image(
    values: &[Option<f64>],
    core_map: &CoreMap,
    spec: &FiberSpec,
) -> Result<SpatialMap> {
    if values.len() != core_map.len() {
        return Err(Error::invalid(format!(
            "{} values for {} sites",
            values.len(),
            core_map.len()
        )));
    }
    let (w, h) = (core_map.frame_width, core_map.frame_height);
    let mut map = SpatialMap {
        width: w,
        height: h,
        values: vec![0.0; w * h],
    };
    let spacing = core_map
        .median_spacing()
        .unwrap_or(spec.pitch_m / spec.core_diameter_m);
    let r = 0.5 * spacing * spec.core_diameter_m / spec.pitch_m;
    for (site, v) in core_map.sites.iter().zip(values) {
        let Some(v) = *v else { continue };
        let ys = (site.cy - r).ceil().max(0.0) as usize
            ..=((site.cy + r).floor().max(0.0) as usize).min(h.saturating_sub(1));
        for y in ys {
            let xs = (site.cx - r).ceil().max(0.0) as usize
                ..=((site.cx + r).floor().max(0.0) as usize).min(w.saturating_sub(1));
            for x in xs {
                if (x as f64 - site.cx).hypot(y as f64 - site.cy) <= r {
                    map.values[y * w + x] += v;
                }
            }
        }
    }
    Ok(map)
}

/// Pearson correlation over pixels lit in either map.
fn map_correlation(a: &SpatialMap, b: &SpatialMap) -> f64 {
    let (u, v): (Vec<f64>, Vec<f64>) = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| **x != 0.0 || **y != 0.0)
        .map(|(x, y)| (*x, *y))
        .unzip();
    pearson(&u, &v).unwrap_or(0.0)
}

/// A glyph illuminated by a line centered on one grid channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LetterAssignment {
    pub glyph: char,
    pub channel: usize,
}

impl LetterAssignment {
    /// Letters A..P on channels 3, 10, ..., 108.
    pub fn composite_default() -> Vec<LetterAssignment> {
        (0..16)
            .map(|k| LetterAssignment {
                glyph: (b'A' + k as u8) as char,
                channel: 3 + 7 * k,
            })
            .collect()
    }

    /// Channels credited to this letter: the line channel and its two
    /// neighbours.
    pub fn window(&self, channels: usize) -> Vec<usize> {
        (self.channel.saturating_sub(1)..=(self.channel + 1).min(channels - 1)).collect()
    }
}

/// Ground-truth spectrum of a line spanning three channels.
fn line_spectrum(channels: usize, channel: usize) -> Vec<f64> {
    let mut s = vec![0.0; channels];
    s[channel] = 1.0;
    if channel > 0 {
        s[channel - 1] = 0.5;
    }
    if channel + 1 < channels {
        s[channel + 1] = 0.5;
    }
    s
}

fn letter_weights(inst: &Instrument, letters: &[LetterAssignment]) -> Result<Vec<Vec<f64>>> {
    let truth_map = inst.bench().true_core_map(inst.config().aoi_size_px);
    letters
        .iter()
        .map(|l| rasterize_letter(l.glyph, &truth_map))
        .collect()
}

fn letter_scene(
    inst: &Instrument,
    letters: &[LetterAssignment],
    weights: &[Vec<f64>],
    label: &str,
) -> Result<Scene> {
    let x = inst.grid().len();
    for l in letters {
        if l.channel >= x {
            return Err(Error::invalid(format!(
                "channel {} outside a {x}-channel grid",
                l.channel
            )));
        }
    }
    let spectra = (0..inst.core_count())
        .map(|core| {
            let mut s = vec![0.0; x];
            for (l, w) in letters.iter().zip(weights) {
                if w[core] > 0.0 {
                    for (k, v) in line_spectrum(x, l.channel).into_iter().enumerate() {
                        s[k] += w[core] * v;
                    }
                }
            }
            Spectrum { values: s }
        })
        .collect();
    Scene::new(label, spectra)
}

fn reconstruct(
    inst: &Instrument,
    scene: &Scene,
    ratio: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<(Stm, Vec<CoreSpectrum>)> {
    let frame = inst.render_scene(&scene.weights())?;
    let stm = inst.stm().subsample(ratio, derive_seed(seed, &[21]))?;
    let vectors = stm
        .cores()
        .iter()
        .map(|c| Ok((c.id, stm.extract_pixel_vector(&frame, c.id)?)))
        .collect::<Result<Vec<_>>>()?;
    let spectra = solve_pixel_vectors(&stm, &vectors, opts)?;
    Ok((stm, spectra))
}

/// Per-site value of `f(spectrum)` for every solved site.
fn site_values(
    inst: &Instrument,
    spectra: &[CoreSpectrum],
    f: impl Fn(&[f64]) -> f64,
) -> Vec<Option<f64>> {
    let mut out = vec![None; inst.core_map().len()];
    for s in spectra {
        out[s.core_id as usize] = Some(f(&s.spectrum.values));
    }
    out
}

/// Ground-truth weight of each solved, matched site.
fn truth_values(inst: &Instrument, spectra: &[CoreSpectrum], weights: &[f64]) -> Vec<Option<f64>> {
    let truth = inst.site_truth();
    let mut out = vec![None; inst.core_map().len()];
    for s in spectra {
        if let Some(t) = truth[s.core_id as usize] {
            out[s.core_id as usize] = Some(weights[t]);
        }
    }
    out
}

fn window_sum(spec: &[f64], window: &[usize]) -> f64 {
    window.iter().map(|&k| spec[k]).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeResult {
    pub letters: Vec<LetterAssignment>,
    pub ratio: f64,
    pub spectra: Vec<CoreSpectrum>,
    /// Reconstructed map of each letter's channel window.
    pub maps: Vec<SpatialMap>,
    /// Assembled rasterization of each letter.
    pub truth_maps: Vec<SpatialMap>,
    /// Pixel correlation of each map with its truth map.
    pub correlations: Vec<f64>,
    /// `cross_talk[i][j]`: average window-`j` energy in cores covered by
    /// letter `i` but not by letter `j`, relative to the average window-`i`
    /// energy in cores covered by letter `i`. The diagonal is 1.
    pub cross_talk: Vec<Vec<f64>>,
}

impl CompositeResult {
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.cross_talk.len();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.cross_talk[i][j])
            .fold(0.0, f64::max)
    }

    pub fn cross_talk_csv(&self) -> String {
        let mut out = String::from("letter");
        for l in &self.letters {
            write!(out, ",{}", l.glyph).unwrap();
        }
        out.push('\n');
        for (l, row) in self.letters.iter().zip(&self.cross_talk) {
            write!(out, "{}", l.glyph).unwrap();
            for v in row {
                write!(out, ",{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<glyph>_<wavelength>.pgm` per letter plus `crosstalk.csv`.
    pub fn write(&self, dir: impl AsRef<Path>, inst: &Instrument) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (l, m) in self.letters.iter().zip(&self.maps) {
            let wl = inst.grid().values()[l.channel];
            write_map_pgm(dir.join(format!("{}_{wl:.1}.pgm", l.glyph)), m)?;
        }
        fs::write(dir.join("crosstalk.csv"), self.cross_talk_csv())?;
        Ok(())
    }
}

const COVERED: f64 = 0.5;

/// Superposes every letter on its own channel, reconstructs the frame once
/// and splits the per-core spectra into one map per letter.
pub fn run_composite(
    inst: &Instrument,
    letters: &[LetterAssignment],
    ratio: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<CompositeResult> {
    let x = inst.grid().len();
    let mut channels: Vec<usize> = letters.iter().map(|l| l.channel).collect();
    channels.sort_unstable();
    if channels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("letters must use distinct channels"));
    }
    let weights = letter_weights(inst, letters)?;
    let scene = letter_scene(inst, letters, &weights, "composite")?;
    let (_, spectra) = reconstruct(inst, &scene, ratio, seed, opts)?;
    let spec = &inst.config().fiber;
    let windows: Vec<Vec<usize>> = letters.iter().map(|l| l.window(x)).collect();

    let (maps, truth_maps): (Vec<_>, Vec<_>) = letters
        .par_iter()
        .enumerate()
        .map(|(i, _)| {
            let m = assemble_image(
                &site_values(inst, &spectra, |s| window_sum(s, &windows[i])),
                inst.core_map(),
                spec,
            )?;
            let t = assemble_image(
                &truth_values(inst, &spectra, &weights[i]),
                inst.core_map(),
                spec,
            )?;
            Ok((m, t))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let correlations = maps
        .iter()
        .zip(&truth_maps)
        .map(|(m, t)| map_correlation(m, t))
        .collect();

    // (true core, spectrum) for matched sites
    let truth = inst.site_truth();
    let solved: Vec<(usize, &[f64])> = spectra
        .iter()
        .filter_map(|s| truth[s.core_id as usize].map(|t| (t, s.spectrum.values.as_slice())))
        .collect();
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    let n = letters.len();
    let mut cross_talk = vec![vec![0.0; n]; n];
    for i in 0..n {
        let diag = mean(
            &mut solved
                .iter()
                .filter(|(t, _)| weights[i][*t] >= COVERED)
                .map(|(_, s)| window_sum(s, &windows[i])),
        );
        for j in 0..n {
            cross_talk[i][j] = if i == j {
                1.0
            } else if diag > 0.0 {
                mean(
                    &mut solved
                        .iter()
                        .filter(|(t, _)| weights[i][*t] >= COVERED && weights[j][*t] == 0.0)
                        .map(|(_, s)| window_sum(s, &windows[j])),
                ) / diag
            } else {
                0.0
            };
        }
    }
    Ok(CompositeResult {
        letters: letters.to_vec(),
        ratio,
        spectra,
        maps,
        truth_maps,
        correlations,
        cross_talk,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleLetterResult {
    pub letter: LetterAssignment,
    pub ratio: f64,
    /// Pixel correlation of the letter's window map with its rasterization.
    pub on_channel_corr: f64,
    /// Map energy outside the letter's window over the energy inside it.
    pub off_on_energy_ratio: f64,
    /// Channel whose map holds the most energy.
    pub peak_channel: usize,
}

/// One letter on one channel; map energy is the sum of squared per-core
/// values of each channel.
pub fn run_single_letter(
    inst: &Instrument,
    letter: LetterAssignment,
    ratio: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<SingleLetterResult> {
    let x = inst.grid().len();
    let letters = [letter];
    let weights = letter_weights(inst, &letters)?;
    let scene = letter_scene(inst, &letters, &weights, &letter.glyph.to_string())?;
    let (_, spectra) = reconstruct(inst, &scene, ratio, seed, opts)?;
    let window = letter.window(x);
    let spec = &inst.config().fiber;
    let map = assemble_image(
        &site_values(inst, &spectra, |s| window_sum(s, &window)),
        inst.core_map(),
        spec,
    )?;
    let truth = assemble_image(
        &truth_values(inst, &spectra, &weights[0]),
        inst.core_map(),
        spec,
    )?;

    let energy: Vec<f64> = (0..x)
        .map(|k| spectra.iter().map(|s| s.spectrum.values[k].powi(2)).sum())
        .collect();
    let on: f64 = window.iter().map(|&k| energy[k]).sum();
    let off: f64 = energy.iter().sum::<f64>() - on;
    let peak_channel = Spectrum { values: energy }.argmax().unwrap_or(0);
    Ok(SingleLetterResult {
        letter,
        ratio,
        on_channel_corr: map_correlation(&map, &truth),
        off_on_energy_ratio: if on > 0.0 { off / on } else { f64::INFINITY },
        peak_channel,
    })
}
