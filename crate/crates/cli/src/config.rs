//! Run configuration: strict JSON with defaults for every optional section.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mcmmf::clustering::DbscanParams;
use mcmmf::experiments::InstrumentConfig;
use mcmmf::optics::{FiberSpec, SourceModel, WavelengthGrid};
use mcmmf::solver::{SolverOptions, DEFAULT_TOLERANCE};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub fiber: FiberConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberConfig {
    pub length_m: f64,
    pub core_diameter_m: f64,
    pub numerical_aperture: f64,
    pub core_count: usize,
    pub pitch_m: f64,
    pub core_index: f64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        let f = FiberSpec::default();
        FiberConfig {
            length_m: f.length_m,
            core_diameter_m: f.core_diameter_m,
            numerical_aperture: f.numerical_aperture,
            core_count: f.core_count,
            pitch_m: f.pitch_m,
            core_index: f.core_index,
        }
    }
}

/// Either an explicit list or `start_nm`, `step_nm` and `count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_nm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Linewidth of the calibration source.
    pub linewidth_nm: f64,
    pub incidence_deg: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        let s = SourceModel::default();
        SourceConfig {
            linewidth_nm: s.linewidth_nm,
            incidence_deg: s.incidence_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub eps: f64,
    pub min_pts: usize,
    pub intensity_threshold: Option<u16>,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let d = DbscanParams::default();
        ClusteringConfig {
            eps: d.eps,
            min_pts: d.min_pts,
            intensity_threshold: d.intensity_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
        }
    }
}

/// Camera-side geometry; absent fields are derived from the grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub patch_size_px: Option<usize>,
    pub pitch_px: Option<f64>,
    pub jitter_px: Option<f64>,
    pub aoi_size_px: Option<usize>,
    pub pixels_per_core: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Fiber realization and core layout.
    pub instrument: u64,
    /// Scenes, row subsets and added noise.
    pub experiment: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            instrument: 1,
            experiment: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Y/X values of a sampling sweep.
    pub ratios: Vec<f64>,
    /// Spectral sparsity of a sampling sweep (default `min(10, X)`).
    pub n_lambda: Option<usize>,
    /// N_λ values of a sparsity sweep (default 1 and multiples of 5 up
    /// to X).
    pub n_lambdas: Option<Vec<usize>>,
    /// Noise strengths of a noise sweep.
    pub levels: Vec<f64>,
    /// Y/X of sparsity and noise sweeps.
    pub ratio: f64,
    /// Y/X of composite and letter runs.
    pub composite_ratio: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ratios: vec![
                0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0,
            ],
            n_lambda: None,
            n_lambdas: None,
            levels: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            ratio: 1.1,
            composite_ratio: 4.0,
        }
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn fiber(&self) -> FiberSpec {
        let f = &self.fiber;
        FiberSpec {
            length_m: f.length_m,
            core_diameter_m: f.core_diameter_m,
            numerical_aperture: f.numerical_aperture,
            core_count: f.core_count,
            pitch_m: f.pitch_m,
            core_index: f.core_index,
        }
    }

    pub fn grid(&self) -> Result<WavelengthGrid, CliError> {
        let g = &self.grid;
        let grid = match (&g.values_nm, g.start_nm, g.step_nm, g.count) {
            (Some(v), None, None, None) => WavelengthGrid::new(v.clone()),
            (None, Some(start), Some(step), Some(count)) => {
                if count == 0 {
                    return Err(invalid("grid.count", "must be >= 1"));
                }
                WavelengthGrid::uniform(start, step, count)
            }
            _ => {
                return Err(invalid(
                    "grid",
                    "give either values_nm or all of start_nm, step_nm, count",
                ))
            }
        };
        grid.map_err(|e| invalid("grid", e))
    }

    pub fn dbscan(&self) -> DbscanParams {
        DbscanParams {
            eps: self.clustering.eps,
            min_pts: self.clustering.min_pts,
            intensity_threshold: self.clustering.intensity_threshold,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
        }
    }

    pub fn instrument(&self) -> Result<InstrumentConfig, CliError> {
        let mut cfg = InstrumentConfig::for_grid(self.fiber(), self.grid()?, self.seeds.instrument);
        let b = &self.bench;
        if let Some(p) = b.patch_size_px {
            cfg.patch_size_px = p;
            if b.aoi_size_px.is_none() {
                cfg.aoi_size_px = p;
            }
            if b.pitch_px.is_none() {
                cfg.pitch_px =
                    (p as f64 * cfg.fiber.pitch_m / cfg.fiber.core_diameter_m).ceil() + 1.0;
            }
        }
        if let Some(v) = b.pitch_px {
            cfg.pitch_px = v;
        }
        if let Some(v) = b.jitter_px {
            cfg.jitter_px = v;
        }
        if let Some(v) = b.aoi_size_px {
            cfg.aoi_size_px = v;
        }
        if let Some(v) = b.pixels_per_core {
            cfg.pixels_per_core = v;
        }
        cfg.incidence_deg = self.source.incidence_deg;
        cfg.calibration_linewidth_nm = self.source.linewidth_nm;
        cfg.dbscan = self.dbscan();
        Ok(cfg)
    }

    pub fn sweep_n_lambda(&self, channels: usize) -> usize {
        self.sweep.n_lambda.unwrap_or(channels.min(10))
    }

    pub fn sweep_n_lambdas(&self, channels: usize) -> Vec<usize> {
        self.sweep.n_lambdas.clone().unwrap_or_else(|| {
            std::iter::once(1)
                .chain((5..=channels).step_by(5))
                .chain((!channels.is_multiple_of(5) && channels > 1).then_some(channels))
                .collect()
        })
    }

    /// Checks every section; errors name the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        self.fiber().validate().map_err(|e| invalid("fiber", e))?;
        let grid = self.grid()?;
        let source = SourceModel {
            center_nm: grid.center_nm(),
            linewidth_nm: self.source.linewidth_nm,
            incidence_deg: self.source.incidence_deg,
        };
        if let Err(e) = source.validate() {
            let key = if e.to_string().contains("incidence") {
                "source.incidence_deg"
            } else {
                "source.linewidth_nm"
            };
            return Err(invalid(key, e));
        }
        self.dbscan()
            .validate()
            .map_err(|e| invalid("clustering", e))?;
        if !(self.solver.tolerance > 0.0) || !self.solver.tolerance.is_finite() {
            return Err(invalid("solver.tolerance", "must be > 0"));
        }
        if self.solver.max_iterations == Some(0) {
            return Err(invalid("solver.max_iterations", "must be >= 1"));
        }
        let b = &self.bench;
        if b.patch_size_px.is_some_and(|p| p < 4) {
            return Err(invalid("bench.patch_size_px", "must be >= 4"));
        }
        if b.aoi_size_px.is_some_and(|a| a < 4 || a % 2 != 0) {
            return Err(invalid("bench.aoi_size_px", "must be even and >= 4"));
        }
        if b.pixels_per_core == Some(0) {
            return Err(invalid("bench.pixels_per_core", "must be >= 1"));
        }
        if b.jitter_px.is_some_and(|j| !(j >= 0.0)) {
            return Err(invalid("bench.jitter_px", "must be >= 0"));
        }
        self.instrument()?
            .validate()
            .map_err(|e| invalid("bench", e))?;
        let s = &self.sweep;
        if s.ratios.is_empty() || s.ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid(
                "sweep.ratios",
                "must be a non-empty list of positive ratios",
            ));
        }
        if !(s.ratio > 0.0) {
            return Err(invalid("sweep.ratio", "must be > 0"));
        }
        if !(s.composite_ratio > 0.0) {
            return Err(invalid("sweep.composite_ratio", "must be > 0"));
        }
        let x = grid.len();
        let n = self.sweep_n_lambda(x);
        if n == 0 || n > x {
            return Err(invalid("sweep.n_lambda", format!("must lie in 1..={x}")));
        }
        let ns = self.sweep_n_lambdas(x);
        if ns.is_empty() || ns.iter().any(|&n| n == 0 || n > x) {
            return Err(invalid(
                "sweep.n_lambdas",
                format!("entries must lie in 1..={x}"),
            ));
        }
        if s.levels.is_empty() || s.levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(invalid("sweep.levels", "entries must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"fiber": {"core_count": 30}, "grid": {"start_nm": 650, "step_nm": 2, "count": 10}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.clustering.eps, 3.0);
        assert_eq!(cfg.clustering.min_pts, 13);
        assert_eq!(cfg.source.incidence_deg, 3.5);
        assert_eq!(cfg.fiber.numerical_aperture, 0.06);
        let inst = cfg.instrument().unwrap();
        assert_eq!(inst.pixels_per_core, 40);
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    fn with(patch: &str) -> Result<RunConfig, CliError> {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        let p: serde_json::Value = serde_json::from_str(patch).unwrap();
        for (k, val) in p.as_object().unwrap() {
            v[k] = val.clone();
        }
        RunConfig::from_json(&v.to_string())
    }

    #[test]
    fn errors_name_keys() {
        let e = with(r#"{"clustering": {"eps": -1}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("clustering.eps"), "{e}");
        let e = with(r#"{"source": {"incidence_deg": 5.0}}"#)
            .unwrap_err()
            .to_string();
        assert!(
            e.contains("4.5") && e.contains("source.incidence_deg"),
            "{e}"
        );
        let e = with(r#"{"grid": {"start_nm": 650}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("grid"), "{e}");
        let e = with(r#"{"sweep": {"levels": [0.0, 1.5]}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("sweep.levels"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = with(r#"{"fibre": {}}"#).unwrap_err().to_string();
        assert!(e.contains("fibre"), "{e}");
        let e = with(r#"{"clustering": {"epsilon": 3}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("epsilon"), "{e}");
    }
}
