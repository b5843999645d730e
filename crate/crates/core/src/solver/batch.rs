use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{solve_l1_nonneg, L1Problem, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;
use crate::stm::{PixelVector, Spectrum, Stm, StmCore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    /// `None` uses `10·(X+Y)` per core.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoreStatus {
    Converged,
    /// Iteration cap reached; the spectrum is the best iterate.
    Unconverged,
    /// The core could not be solved; the spectrum is all zeros.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreSpectrum {
    pub core_id: u32,
    pub status: CoreStatus,
    pub spectrum: Spectrum,
    pub objective: f64,
    pub iterations: usize,
}

fn core_matrix(core: &StmCore, columns: usize) -> DMatrix<f64> {
    DMatrix::from_row_iterator(core.rows(), columns, core.matrix.iter().map(|&v| v as f64))
}

fn solve_core(stm: &Stm, core: &StmCore, y: &PixelVector, opts: &SolverOptions) -> CoreSpectrum {
    let x = stm.columns();
    let fail = |msg: String| CoreSpectrum {
        core_id: core.id,
        status: CoreStatus::Failed(msg),
        spectrum: Spectrum::zeros(x),
        objective: f64::NAN,
        iterations: 0,
    };
    if y.len() != core.rows() {
        return fail(format!(
            "pixel vector has {} entries, core has {} rows",
            y.len(),
            core.rows()
        ));
    }
    let problem = match L1Problem::new(core_matrix(core, x), DVector::from_column_slice(&y.values))
    {
        Ok(p) => p.with_tolerance(opts.tolerance),
        Err(e) => return fail(e.to_string()),
    };
    let problem = match opts.max_iterations {
        Some(n) => problem.with_max_iterations(n),
        None => problem,
    };
    match solve_l1_nonneg(&problem) {
        Ok(sol) => CoreSpectrum {
            core_id: core.id,
            status: if sol.converged {
                CoreStatus::Converged
            } else {
                CoreStatus::Unconverged
            },
            spectrum: Spectrum::new(sol.x.iter().cloned().collect())
                .unwrap_or_else(|_| Spectrum::zeros(x)),
            objective: sol.objective,
            iterations: sol.iterations,
        },
        Err(e) => fail(e.to_string()),
    }
}

/// Solves every listed core independently, in parallel. Results are in the
/// order of `vectors`.
pub fn solve_pixel_vectors(
    stm: &Stm,
    vectors: &[(u32, PixelVector)],
    opts: &SolverOptions,
) -> Result<Vec<CoreSpectrum>> {
    let cores = vectors
        .iter()
        .map(|(id, _)| stm.core(*id))
        .collect::<Result<Vec<_>>>()?;
    Ok(vectors
        .par_iter()
        .zip(cores.par_iter())
        .map(|((_, y), core)| solve_core(stm, core, y, opts))
        .collect())
}

/// Reconstructs one spectrum per STM core from a scene frame.
pub fn solve_batch(
    stm: &Stm,
    frame: &SpeckleFrame,
    opts: &SolverOptions,
) -> Result<Vec<CoreSpectrum>> {
    if stm.cores().is_empty() {
        return Err(Error::invalid("STM has no cores"));
    }
    let vectors = stm
        .cores()
        .iter()
        .map(|c| Ok((c.id, stm.extract_pixel_vector(frame, c.id)?)))
        .collect::<Result<Vec<_>>>()?;
    solve_pixel_vectors(stm, &vectors, opts)
}

/// Long-format CSV: `core_id,wavelength_nm,intensity`.
pub fn spectra_to_csv(stm: &Stm, spectra: &[CoreSpectrum]) -> String {
    let mut out = String::from("core_id,wavelength_nm,intensity\n");
    for s in spectra {
        for (wl, v) in stm.grid().values().iter().zip(&s.spectrum.values) {
            writeln!(out, "{},{},{}", s.core_id, wl, v).unwrap();
        }
    }
    out
}

pub fn write_spectra_csv(
    path: impl AsRef<Path>,
    stm: &Stm,
    spectra: &[CoreSpectrum],
) -> Result<()> {
    fs::write(path, spectra_to_csv(stm, spectra))?;
    Ok(())
}
