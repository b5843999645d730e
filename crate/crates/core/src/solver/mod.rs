//! Nonnegative ℓ₁-residual minimization.
//!
//! Solves `min ‖Ax − y‖₁ s.t. x ≥ 0` through its linear-program form
//!
//! ```text
//! min 1ᵀu + 1ᵀv   s.t.  Ax + u − v = y,  x, u, v ≥ 0
//! ```
//!
//! [`solve_l1_nonneg`] is a Mehrotra predictor-corrector interior-point
//! method; [`lp_oracle`] is a dense tableau simplex with Bland's rule used as
//! a reference on small instances.

mod batch;
mod ipm;
mod simplex;

pub use batch::{
    solve_batch, solve_pixel_vectors, spectra_to_csv, write_spectra_csv, CoreSpectrum, CoreStatus,
    SolverOptions,
};
pub use ipm::solve_l1_nonneg;
pub use simplex::{lp_oracle, ORACLE_SIZE_LIMIT};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct L1Problem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl L1Problem {
    /// Problem with the default tolerance and an iteration cap of `10·(X+Y)`.
    pub fn new(a: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let max_iterations = 10 * (a.nrows() + a.ncols());
        let p = L1Problem {
            a,
            y,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.nrows() != self.y.len() {
            return Err(Error::invalid(format!(
                "matrix has {} rows but observation has {} entries",
                self.a.nrows(),
                self.y.len()
            )));
        }
        if self.a.ncols() == 0 {
            return Err(Error::invalid("matrix has no columns"));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.a.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("problem data contains NaN or infinity"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.y).abs().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of the best iterate after each iteration.
    pub history: Vec<f64>,
    /// Average complementarity `zᵀs / n` at each iteration.
    pub gap_history: Vec<f64>,
}

impl L1Solution {
    fn zero(p: &L1Problem) -> Self {
        L1Solution {
            x: DVector::zeros(p.a.ncols()),
            objective: p.y.abs().sum(),
            iterations: 0,
            converged: true,
            history: Vec::new(),
            gap_history: Vec::new(),
        }
    }
}

/// Columns with at least one nonzero entry.
fn active_columns(a: &DMatrix<f64>) -> Vec<usize> {
    (0..a.ncols())
        .filter(|&j| a.column(j).iter().any(|&v| v != 0.0))
        .collect()
}

/// Copies `cols` of `a` into a new matrix divided by `scale`.
fn scaled_columns(a: &DMatrix<f64>, cols: &[usize], scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])] / scale)
}
