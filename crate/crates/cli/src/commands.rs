use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mcmmf::clustering::{extract_core_map, CoreMap, DbscanParams};
use mcmmf::experiments::{
    run_composite, sparse_scene, sweep_noise, sweep_sampling, sweep_sparsity, Instrument,
    LetterAssignment, Scene,
};
use mcmmf::frame::SpeckleFrame;
use mcmmf::optics::WavelengthGrid;
use mcmmf::solver::{solve_batch, spectra_to_csv, SolverOptions};
use mcmmf::stm::{calibrate as build_stm, Spectrum, Stm};

use crate::config::RunConfig;
use crate::{CliError, SweepKind};

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn read_frame(path: &Path) -> Result<SpeckleFrame, CliError> {
    SpeckleFrame::read_pgm(path).map_err(CliError::pipeline(path.display().to_string()))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seeds.instrument = s;
        cfg.seeds.experiment = s;
    }
    Ok(cfg)
}

fn output_path(
    out: Option<PathBuf>,
    cfg: &RunConfig,
    default_name: &str,
) -> Result<PathBuf, CliError> {
    match (out, &cfg.paths.output) {
        (Some(p), _) => Ok(p),
        (None, Some(dir)) => Ok(if default_name.is_empty() {
            dir.clone()
        } else {
            dir.join(default_name)
        }),
        (None, None) => Err(CliError::Usage(
            "no output path: pass --out or set paths.output".into(),
        )),
    }
}

/// Effective configuration written beside a file output as
/// `<file>.config.json`, or into a directory output as `config.json`.
fn write_sidecar(out: &Path, cfg: &RunConfig, is_dir: bool) -> Result<(), CliError> {
    let path = if is_dir {
        out.join("config.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".config.json");
        out.with_file_name(name)
    };
    write(&path, cfg.to_json())
}

fn build_instrument(cfg: &RunConfig) -> Result<Instrument, CliError> {
    Instrument::build(cfg.instrument()?).map_err(CliError::pipeline("building instrument"))
}

pub fn frame_file_name(index: usize, wavelength_nm: f64) -> String {
    format!("frame_{index:04}_{wavelength_nm:.3}.pgm")
}

/// Wavelength encoded in a `frame_<index>_<wavelength>.pgm` name.
pub fn parse_frame_name(name: &str) -> Option<f64> {
    let rest = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    let (index, wl) = rest.split_once('_')?;
    if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    wl.parse().ok().filter(|v: &f64| v.is_finite())
}

fn scene_truth_csv(scene: &Scene, grid: &WavelengthGrid) -> String {
    let mut out = String::from("core_id,wavelength_nm,intensity\n");
    for (core, s) in scene.spectra.iter().enumerate() {
        for (wl, v) in grid.values().iter().zip(&s.values) {
            writeln!(out, "{core},{wl},{v}").unwrap();
        }
    }
    out
}

pub fn simulate(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    n_lambda: usize,
    glyph: Option<char>,
    channel: usize,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let out = output_path(out, &cfg, "")?;
    let inst = build_instrument(&cfg)?;
    let grid = inst.grid().clone();
    let bench = inst.bench();

    let scene = match glyph {
        Some(g) => {
            if channel >= grid.len() {
                return Err(CliError::Usage(format!(
                    "--channel {channel} outside a {}-channel grid",
                    grid.len()
                )));
            }
            let weights = mcmmf::experiments::rasterize_letter(
                g,
                &bench.true_core_map(inst.config().aoi_size_px),
            )
            .map_err(CliError::pipeline("--glyph"))?;
            let spectra = weights
                .iter()
                .map(|&w| {
                    let mut s = vec![0.0; grid.len()];
                    s[channel] = w;
                    Spectrum { values: s }
                })
                .collect();
            Scene::new(g.to_string(), spectra).map_err(CliError::pipeline("scene"))?
        }
        None => sparse_scene(
            inst.core_count(),
            grid.len(),
            n_lambda,
            cfg.seeds.experiment,
        )
        .map_err(CliError::pipeline("--n-lambda"))?,
    };

    let cal_dir = out.join("calibration");
    create_dir(&cal_dir)?;
    let frames = bench
        .calibration_frames()
        .map_err(CliError::pipeline("calibration frames"))?;
    for (j, f) in frames.iter().enumerate() {
        write(
            &cal_dir.join(frame_file_name(j, grid.values()[j])),
            f.to_pgm_bytes(),
        )?;
    }
    let white = bench
        .white_light_frame()
        .map_err(CliError::pipeline("white-light frame"))?;
    write(&out.join("white.pgm"), white.to_pgm_bytes())?;
    let frame = inst
        .render_scene(&scene.weights())
        .map_err(CliError::pipeline("scene frame"))?;
    write(&out.join("scene.pgm"), frame.to_pgm_bytes())?;
    write(&out.join("truth.csv"), scene_truth_csv(&scene, &grid))?;
    let mut layout = String::from("core_id,cx,cy\n");
    for (i, c) in bench.layout().centers.iter().enumerate() {
        writeln!(layout, "{i},{},{}", c[0], c[1]).unwrap();
    }
    write(&out.join("layout.csv"), layout)?;
    write_sidecar(&out, &cfg, true)
}

pub fn find_cores(
    frame: &Path,
    eps: f64,
    min_pts: usize,
    threshold: Option<u16>,
    aoi_size: usize,
    out: &Path,
) -> Result<(), CliError> {
    let params = DbscanParams {
        eps,
        min_pts,
        intensity_threshold: threshold,
    };
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let f = read_frame(frame)?;
    let map = extract_core_map(&f, &params, aoi_size).map_err(CliError::pipeline("find-cores"))?;
    eprintln!("found {} cores", map.len());
    write(out, map.to_json())
}

fn read_core_map(path: &Path) -> Result<CoreMap, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    CoreMap::from_json(&text).map_err(CliError::pipeline(path.display().to_string()))
}

/// Frames of a calibration directory ordered by the wavelength in their
/// names.
fn read_calibration_dir(dir: &Path) -> Result<(WavelengthGrid, Vec<SpeckleFrame>), CliError> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(wl) = parse_frame_name(&name) {
            entries.push((wl, entry.path()));
        }
    }
    if entries.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no frame_<index>_<wavelength>.pgm files",
            dir.display()
        )));
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grid = WavelengthGrid::new(entries.iter().map(|e| e.0).collect())
        .map_err(CliError::pipeline(dir.display().to_string()))?;
    let frames = entries
        .iter()
        .map(|(_, p)| read_frame(p))
        .collect::<Result<_, _>>()?;
    Ok((grid, frames))
}

pub fn calibrate(
    frames: &Path,
    cores: &Path,
    pixels_per_core: usize,
    out: &Path,
) -> Result<(), CliError> {
    let map = read_core_map(cores)?;
    let (grid, frames) = read_calibration_dir(frames)?;
    let cal = build_stm(&frames, &grid, &map, pixels_per_core)
        .map_err(CliError::pipeline("calibrate"))?;
    if !cal.skipped.is_empty() {
        eprintln!(
            "skipped {} clipped sites: {:?}",
            cal.skipped.len(),
            cal.skipped
        );
    }
    cal.stm
        .save(out)
        .map_err(CliError::pipeline(out.display().to_string()))
}

pub fn reconstruct(
    stm: &Path,
    frame: &Path,
    ratio: Option<f64>,
    seed: u64,
    opts: SolverOptions,
    out: &Path,
) -> Result<(), CliError> {
    if !stm.exists() {
        return Err(CliError::io(
            stm,
            std::io::Error::new(std::io::ErrorKind::NotFound, "STM file not found"),
        ));
    }
    let stm_data = Stm::load(stm).map_err(CliError::pipeline(stm.display().to_string()))?;
    let stm_data = match ratio {
        Some(r) => stm_data
            .subsample(r, seed)
            .map_err(CliError::pipeline("--ratio"))?,
        None => stm_data,
    };
    let f = read_frame(frame)?;
    let spectra = solve_batch(&stm_data, &f, &opts).map_err(CliError::pipeline("reconstruct"))?;
    let failed = spectra
        .iter()
        .filter(|s| matches!(s.status, mcmmf::solver::CoreStatus::Failed(_)))
        .count();
    if failed > 0 {
        eprintln!("{failed} cores failed to solve; their spectra are zero");
    }
    write(out, spectra_to_csv(&stm_data, &spectra))
}

pub fn sweep(
    kind: SweepKind,
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let name = match kind {
        SweepKind::Sampling => "sweep_sampling.csv",
        SweepKind::Sparsity => "sweep_sparsity.csv",
        SweepKind::Noise => "sweep_noise.csv",
    };
    let out = output_path(out, &cfg, name)?;
    let inst = build_instrument(&cfg)?;
    let opts = cfg.solver_options();
    let s = &cfg.sweep;
    let seed = cfg.seeds.experiment;
    let x = inst.grid().len();
    let result = match kind {
        SweepKind::Sampling => sweep_sampling(&inst, cfg.sweep_n_lambda(x), &s.ratios, seed, &opts),
        SweepKind::Sparsity => sweep_sparsity(&inst, s.ratio, &cfg.sweep_n_lambdas(x), seed, &opts),
        SweepKind::Noise => sweep_noise(&inst, s.ratio, &s.levels, seed, &opts),
    }
    .map_err(CliError::pipeline("sweep"))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(&out, result.to_csv())?;
    write_sidecar(&out, &cfg, false)
}

pub fn composite(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let out = output_path(out, &cfg, "")?;
    let inst = build_instrument(&cfg)?;
    let x = inst.grid().len();
    let letters = LetterAssignment::composite_default();
    if letters.iter().any(|l| l.channel + 1 >= x) {
        return Err(CliError::Config(format!(
            "grid: the composite needs at least 110 channels, config has {x}"
        )));
    }
    let result = run_composite(
        &inst,
        &letters,
        cfg.sweep.composite_ratio,
        cfg.seeds.experiment,
        &cfg.solver_options(),
    )
    .map_err(CliError::pipeline("composite"))?;
    result
        .write(&out, &inst)
        .map_err(CliError::pipeline(out.display().to_string()))?;
    write_sidecar(&out, &cfg, true)
}
