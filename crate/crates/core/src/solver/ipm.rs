use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{active_columns, scaled_columns, L1Problem, L1Solution};
use crate::error::Result;

/// Minimizes `‖Ax − y‖₁` over `x ≥ 0`.
///
/// The data are rescaled so that `max|A| = max|y| = 1` before iterating, and
/// all-zero columns are removed and reported as zeros. The returned `x` is
/// the best clamped iterate seen; `converged` is false if the iteration cap
/// was reached first.
pub fn solve_l1_nonneg(problem: &L1Problem) -> Result<L1Solution> {
    problem.validate()?;
    if problem.y.iter().all(|&v| v == 0.0) {
        return Ok(L1Solution::zero(problem));
    }
    let cols = active_columns(&problem.a);
    if cols.is_empty() {
        return Ok(L1Solution::zero(problem));
    }
    let amax = problem.a.amax();
    let ymax = problem.y.amax();
    let a = scaled_columns(&problem.a, &cols, amax);
    let y = &problem.y / ymax;

    let run = Ipm::new(&a, &y).run(problem.tolerance, problem.max_iterations)?;

    let mut x = DVector::zeros(problem.a.ncols());
    for (k, &j) in cols.iter().enumerate() {
        x[j] = run.x[k].max(0.0) * ymax / amax;
    }
    let objective = problem.objective(&x);
    Ok(L1Solution {
        x,
        objective,
        iterations: run.iterations,
        converged: run.converged,
        history: run.history.iter().map(|v| v * ymax).collect(),
        gap_history: run.gap_history,
    })
}

struct Run {
    x: DVector<f64>,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
    gap_history: Vec<f64>,
}

struct Ipm<'a> {
    a: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    x: DVector<f64>,
    u: DVector<f64>,
    v: DVector<f64>,
    lam: DVector<f64>,
    sx: DVector<f64>,
    su: DVector<f64>,
    sv: DVector<f64>,
}

struct Residuals {
    p: DVector<f64>,
    dx: DVector<f64>,
    du: DVector<f64>,
    dv: DVector<f64>,
}

struct Step {
    x: DVector<f64>,
    u: DVector<f64>,
    v: DVector<f64>,
    lam: DVector<f64>,
    sx: DVector<f64>,
    su: DVector<f64>,
    sv: DVector<f64>,
}

/// Cholesky factor of the normal matrix `E + A·D·Aᵀ`, or `None` when it is
/// numerically indefinite even after diagonal regularization.
fn factor_normal(
    a: &DMatrix<f64>,
    dx: &DVector<f64>,
    e: &DVector<f64>,
) -> Option<Cholesky<f64, Dyn>> {
    let mut b = a.clone();
    for (j, mut col) in b.column_iter_mut().enumerate() {
        col *= dx[j].sqrt();
    }
    let mut m = &b * b.transpose();
    for i in 0..m.nrows() {
        m[(i, i)] += e[i];
    }
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut delta = 0.0;
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(c);
        }
        let next = if delta == 0.0 {
            1e-14 * scale
        } else {
            delta * 100.0
        };
        for i in 0..m.nrows() {
            m[(i, i)] += next - delta;
        }
        delta = next;
    }
    None
}

/// Iterations without halving `μ` after which the method gives up.
const STALL_ITERATIONS: usize = 15;
/// A stalled run still counts as converged if some iterate met the stopping
/// test at this multiple of the tolerance, the precision rounding allows on
/// degenerate instances.
const STALL_SLACK: f64 = 100.0;

/// Largest `α ∈ (0, 1]` keeping `z + α·dz ≥ 0`.
fn max_step(z: &[&DVector<f64>], dz: &[&DVector<f64>]) -> f64 {
    let mut alpha: f64 = 1.0;
    for (zi, di) in z.iter().zip(dz) {
        for (&v, &d) in zi.iter().zip(di.iter()) {
            if d < 0.0 {
                alpha = alpha.min(-v / d);
            }
        }
    }
    alpha
}

impl<'a> Ipm<'a> {
    fn new(a: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        let (ny, nx) = a.shape();
        let x = DVector::from_element(nx, 1.0);
        let r = y - a * &x;
        Ipm {
            a,
            y,
            u: r.map(|v| v.max(0.0) + 1.0),
            v: r.map(|v| (-v).max(0.0) + 1.0),
            x,
            lam: DVector::zeros(ny),
            sx: DVector::from_element(nx, 1.0),
            su: DVector::from_element(ny, 1.0),
            sv: DVector::from_element(ny, 1.0),
        }
    }

    fn dimension(&self) -> f64 {
        (self.x.len() + 2 * self.u.len()) as f64
    }

    fn mu(&self) -> f64 {
        (self.x.dot(&self.sx) + self.u.dot(&self.su) + self.v.dot(&self.sv)) / self.dimension()
    }

    fn residuals(&self) -> Residuals {
        let atl = self.a.tr_mul(&self.lam);
        Residuals {
            p: self.y - self.a * &self.x - &self.u + &self.v,
            dx: -atl - &self.sx,
            du: self.lam.map(|l| 1.0 - l) - &self.su,
            dv: self.lam.map(|l| 1.0 + l) - &self.sv,
        }
    }

    fn clamped_objective(&self) -> f64 {
        let xp = self.x.map(|v| v.max(0.0));
        (self.a * xp - self.y).abs().sum()
    }

    /// Newton direction for complementarity targets `(rcx, rcu, rcv)`.
    fn direction(
        &self,
        normal: &Cholesky<f64, Dyn>,
        r: &Residuals,
        rc: (&DVector<f64>, &DVector<f64>, &DVector<f64>),
    ) -> Step {
        let px = (rc.0 - self.x.component_mul(&r.dx)).component_div(&self.sx);
        let pu = (rc.1 - self.u.component_mul(&r.du)).component_div(&self.su);
        let pv = (rc.2 - self.v.component_mul(&r.dv)).component_div(&self.sv);
        let h = &r.p - self.a * &px - &pu + &pv;
        let dl = normal.solve(&h);
        let atdl = self.a.tr_mul(&dl);
        Step {
            x: px + self.x.component_div(&self.sx).component_mul(&atdl),
            u: pu + self.u.component_div(&self.su).component_mul(&dl),
            v: pv - self.v.component_div(&self.sv).component_mul(&dl),
            sx: &r.dx - &atdl,
            su: &r.du - &dl,
            sv: &r.dv + &dl,
            lam: dl,
        }
    }

    fn step_lengths(&self, d: &Step) -> (f64, f64) {
        (
            max_step(&[&self.x, &self.u, &self.v], &[&d.x, &d.u, &d.v]),
            max_step(&[&self.sx, &self.su, &self.sv], &[&d.sx, &d.su, &d.sv]),
        )
    }

    fn run(mut self, tol: f64, max_iter: usize) -> Result<Run> {
        let ynorm = self.y.abs().sum();
        let mut best_x = self.x.map(|v| v.max(0.0));
        let mut best = self.clamped_objective();
        let mut history = Vec::new();
        let mut gap_history = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let mut floor_mu = f64::INFINITY;
        let mut floor_at = 0;
        let mut near = false;

        while iterations < max_iter {
            let r = self.residuals();
            let mu = self.mu();
            let pobj = self.u.sum() + self.v.sum();
            let dobj = self.y.dot(&self.lam);
            let dual_inf = r.dx.amax().max(r.du.amax()).max(r.dv.amax());
            let within = |t: f64| {
                r.p.abs().sum() <= t * (1.0 + ynorm)
                    && dual_inf <= t
                    && (pobj - dobj).abs() <= t * (1.0 + pobj.abs())
            };
            if within(tol) {
                converged = true;
                break;
            }
            near |= within(STALL_SLACK * tol);
            if !mu.is_finite() || mu < 1e-300 {
                break;
            }
            // stop once complementarity has stopped improving at rounding level
            if mu < floor_mu * 0.5 {
                floor_mu = mu;
                floor_at = iterations;
            } else if iterations - floor_at >= STALL_ITERATIONS {
                converged = near;
                break;
            }
            iterations += 1;

            let dx = self.x.component_div(&self.sx);
            let e = self.u.component_div(&self.su) + self.v.component_div(&self.sv);
            let Some(normal) = factor_normal(self.a, &dx, &e) else {
                break;
            };

            // predictor
            let zs = (
                -self.x.component_mul(&self.sx),
                -self.u.component_mul(&self.su),
                -self.v.component_mul(&self.sv),
            );
            let aff = self.direction(&normal, &r, (&zs.0, &zs.1, &zs.2));
            let (ap, ad) = self.step_lengths(&aff);
            let mu_aff = ((&self.x + ap * &aff.x).dot(&(&self.sx + ad * &aff.sx))
                + (&self.u + ap * &aff.u).dot(&(&self.su + ad * &aff.su))
                + (&self.v + ap * &aff.v).dot(&(&self.sv + ad * &aff.sv)))
                / self.dimension();
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

            // corrector
            let target = sigma * mu;
            let rcx = zs.0.add_scalar(target) - aff.x.component_mul(&aff.sx);
            let rcu = zs.1.add_scalar(target) - aff.u.component_mul(&aff.su);
            let rcv = zs.2.add_scalar(target) - aff.v.component_mul(&aff.sv);
            let d = self.direction(&normal, &r, (&rcx, &rcu, &rcv));
            let (ap, ad) = self.step_lengths(&d);
            let eta = (1.0 - mu).clamp(0.9, 0.999);
            let (ap, ad) = ((eta * ap).min(1.0), (eta * ad).min(1.0));

            self.x += ap * &d.x;
            self.u += ap * &d.u;
            self.v += ap * &d.v;
            self.lam += ad * &d.lam;
            self.sx += ad * &d.sx;
            self.su += ad * &d.su;
            self.sv += ad * &d.sv;

            let obj = self.clamped_objective();
            if obj < best {
                best = obj;
                best_x = self.x.map(|v| v.max(0.0));
            }
            history.push(best);
            gap_history.push(self.mu());
        }

        if converged {
            let obj = self.clamped_objective();
            if obj <= best {
                best_x = self.x.map(|v| v.max(0.0));
            }
        }
        Ok(Run {
            x: best_x,
            iterations,
            converged,
            history,
            gap_history,
        })
    }
}
