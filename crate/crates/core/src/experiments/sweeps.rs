use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::{add_noise, pearson, Instrument, NoiseModel, Scene};
use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;
use crate::rng::{derive_seed, stream_rng};
use crate::solver::{solve_pixel_vectors, SolverOptions};
use crate::stm::{PixelVector, Spectrum, Stm};

/// Aggregate over cores at one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub axis: f64,
    pub mean_corr: f64,
    /// Population standard deviation across cores.
    pub std_corr: f64,
    pub n_cores: usize,
    pub seed: u64,
}

impl SweepPoint {
    fn from_correlations(axis: f64, seed: u64, corr: &[f64]) -> Self {
        let n = corr.len();
        let (mean, std) = if n == 0 {
            (0.0, 0.0)
        } else {
            let mean = corr.iter().sum::<f64>() / n as f64;
            let var = corr.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n as f64;
            (mean.clamp(-1.0, 1.0), var.sqrt())
        };
        SweepPoint {
            axis,
            mean_corr: mean,
            std_corr: std,
            n_cores: n,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn axis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis).collect()
    }

    pub fn mean_corr(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_corr).collect()
    }

    /// Mean correlation at the point whose axis value equals `axis`.
    pub fn at(&self, axis: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.axis - axis).abs() < 1e-9)
            .map(|p| p.mean_corr)
    }

    /// First axis value where the mean correlation reaches `level`,
    /// linearly interpolated between neighbouring points.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        let p = &self.points;
        if p.first()?.mean_corr >= level {
            return Some(p[0].axis);
        }
        p.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            (a.mean_corr < level && b.mean_corr >= level).then(|| {
                a.axis + (level - a.mean_corr) / (b.mean_corr - a.mean_corr) * (b.axis - a.axis)
            })
        })
    }

    pub fn to_csv(&self) -> String {
        sweep_results_to_csv(std::slice::from_ref(self))
    }
}

/// All points of several sweeps under one `axis,mean_corr,std_corr,n_cores,seed`
/// header.
pub fn sweep_results_to_csv(results: &[SweepResult]) -> String {
    let mut out = String::from("axis,mean_corr,std_corr,n_cores,seed\n");
    for p in results.iter().flat_map(|r| &r.points) {
        writeln!(
            out,
            "{:?},{:.6},{:.6},{},{}",
            p.axis, p.mean_corr, p.std_corr, p.n_cores, p.seed
        )
        .unwrap();
    }
    out
}

/// Independent `n_lambda`-sparse spectra for `n_cores` cores: support drawn
/// uniformly without replacement, amplitudes `Uniform[0.2, 1]`.
pub fn sparse_scene(n_cores: usize, channels: usize, n_lambda: usize, seed: u64) -> Result<Scene> {
    if n_lambda == 0 || n_lambda > channels {
        return Err(Error::invalid(format!(
            "N_λ must lie in 1..={channels}, got {n_lambda}"
        )));
    }
    let spectra = (0..n_cores)
        .map(|core| {
            let mut rng = stream_rng(seed, core as u64);
            let mut values = vec![0.0; channels];
            for j in sample(&mut rng, channels, n_lambda) {
                values[j] = rng.random_range(0.2..=1.0);
            }
            Spectrum { values }
        })
        .collect();
    Scene::new(format!("sparse{n_lambda}"), spectra)
}

fn correlation_or_zero(truth: &[f64], est: &[f64]) -> f64 {
    pearson(truth, est).unwrap_or(0.0)
}

/// Reconstructs every matched core of `stm` from `frame` and returns the
/// per-core Pearson correlation against `scene`. `noise` adds i.i.d. noise
/// of the given strength to each pixel vector before solving.
pub fn evaluate_scene(
    inst: &Instrument,
    stm: &Stm,
    frame: &SpeckleFrame,
    scene: &Scene,
    noise: Option<(f64, u64)>,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let matched = inst.matched_cores();
    let vectors = extract_vectors(stm, frame, &matched)?;
    score(stm, &vectors, &matched, scene, noise, opts)
}

fn extract_vectors(
    stm: &Stm,
    frame: &SpeckleFrame,
    matched: &[(u32, usize)],
) -> Result<Vec<(u32, PixelVector)>> {
    matched
        .iter()
        .map(|&(id, _)| Ok((id, stm.extract_pixel_vector(frame, id)?)))
        .collect()
}

fn score(
    stm: &Stm,
    vectors: &[(u32, PixelVector)],
    matched: &[(u32, usize)],
    scene: &Scene,
    noise: Option<(f64, u64)>,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let noisy: Vec<(u32, PixelVector)> = match noise {
        None => vectors.to_vec(),
        Some((strength, seed)) => vectors
            .iter()
            .map(|(id, v)| {
                let model = NoiseModel::iid_uniform(strength, derive_seed(seed, &[*id as u64]))?;
                Ok((*id, add_noise(v, &model)))
            })
            .collect::<Result<_>>()?,
    };
    let solved = solve_pixel_vectors(stm, &noisy, opts)?;
    Ok(solved
        .par_iter()
        .zip(matched.par_iter())
        .map(|(s, &(_, truth))| {
            correlation_or_zero(&scene.spectra[truth].values, &s.spectrum.values)
        })
        .collect())
}

fn scene_and_frame(inst: &Instrument, n_lambda: usize, seed: u64) -> Result<(Scene, SpeckleFrame)> {
    let scene = sparse_scene(
        inst.core_count(),
        inst.grid().len(),
        n_lambda,
        derive_seed(seed, &[10]),
    )?;
    let frame = inst.render_scene(&scene.weights())?;
    Ok((scene, frame))
}

/// Correlation against Y/X for one scene of `n_lambda`-sparse spectra. All
/// ratios share the frame and the row permutation, so each ratio's pixels
/// contain those of every smaller ratio.
pub fn sweep_sampling(
    inst: &Instrument,
    n_lambda: usize,
    ratios: &[f64],
    seed: u64,
    opts: &SolverOptions,
) -> Result<SweepResult> {
    let (scene, frame) = scene_and_frame(inst, n_lambda, seed)?;
    let rows_seed = derive_seed(seed, &[11]);
    let points = ratios
        .iter()
        .map(|&ratio| {
            let stm = inst.stm().subsample(ratio, rows_seed)?;
            let corr = evaluate_scene(inst, &stm, &frame, &scene, None, opts)?;
            Ok(SweepPoint::from_correlations(ratio, seed, &corr))
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { points })
}

/// Correlation against N_λ at one sampling ratio; every N_λ gets its own
/// scene.
pub fn sweep_sparsity(
    inst: &Instrument,
    ratio: f64,
    n_lambdas: &[usize],
    seed: u64,
    opts: &SolverOptions,
) -> Result<SweepResult> {
    let stm = inst.stm().subsample(ratio, derive_seed(seed, &[11]))?;
    let points = n_lambdas
        .iter()
        .map(|&n| {
            let (scene, frame) = scene_and_frame(inst, n, derive_seed(seed, &[12, n as u64]))?;
            let corr = evaluate_scene(inst, &stm, &frame, &scene, None, opts)?;
            Ok(SweepPoint::from_correlations(n as f64, seed, &corr))
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { points })
}

/// Correlation against added noise strength for single-line spectra at one
/// sampling ratio. The noiseless pixel vectors are shared by all levels.
pub fn sweep_noise(
    inst: &Instrument,
    ratio: f64,
    levels: &[f64],
    seed: u64,
    opts: &SolverOptions,
) -> Result<SweepResult> {
    let (scene, frame) = scene_and_frame(inst, 1, seed)?;
    let stm = inst.stm().subsample(ratio, derive_seed(seed, &[11]))?;
    let matched = inst.matched_cores();
    let vectors = extract_vectors(&stm, &frame, &matched)?;
    let points = levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let noise = (level > 0.0).then(|| (level, derive_seed(seed, &[13, k as u64])));
            let corr = score(&stm, &vectors, &matched, &scene, noise, opts)?;
            Ok(SweepPoint::from_correlations(level, seed, &corr))
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_scene_support_and_amplitudes() {
        let s = sparse_scene(20, 43, 7, 3).unwrap();
        for sp in &s.spectra {
            assert_eq!(sp.sparsity(), 7);
            assert!(sp
                .values
                .iter()
                .all(|&v| v == 0.0 || (0.2..=1.0).contains(&v)));
        }
        assert_eq!(s, sparse_scene(20, 43, 7, 3).unwrap());
        assert!(sparse_scene(1, 43, 44, 0).is_err());
        assert!(sparse_scene(1, 43, 0, 0).is_err());
    }

    #[test]
    fn crossing_interpolates() {
        let mk = |a: f64, m: f64| SweepPoint {
            axis: a,
            mean_corr: m,
            std_corr: 0.0,
            n_cores: 1,
            seed: 0,
        };
        let r = SweepResult {
            points: vec![mk(0.2, 0.1), mk(0.4, 0.3), mk(0.6, 0.7)],
        };
        assert!((r.crossing(0.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.crossing(0.05), Some(0.2));
        assert_eq!(r.crossing(0.9), None);
        assert!(r
            .to_csv()
            .starts_with("axis,mean_corr,std_corr,n_cores,seed\n0.2,0.100000,"));
    }

    #[test]
    fn std_is_population() {
        let p = SweepPoint::from_correlations(1.0, 0, &[0.0, 1.0]);
        assert_eq!(p.mean_corr, 0.5);
        assert_eq!(p.std_corr, 0.5);
        assert_eq!(p.n_cores, 2);
    }
}
