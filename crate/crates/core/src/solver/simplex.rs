use nalgebra::DVector;

use super::{active_columns, scaled_columns, L1Problem, L1Solution};
use crate::error::{Error, Result};

/// Largest `Y·X` the dense oracle accepts.
pub const ORACLE_SIZE_LIMIT: usize = 5000;

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-11;

/// Exact basic optimum of the ℓ₁ linear program by the tableau simplex
/// method with Bland's anti-cycling rule.
///
/// Each row starts with its `u` (or, when `y_i < 0`, its `v`) slack in the
/// basis, which is already feasible, so no phase-one pass is needed.
pub fn lp_oracle(problem: &L1Problem) -> Result<L1Solution> {
    problem.validate()?;
    let (ny, nx) = problem.a.shape();
    if ny * nx > ORACLE_SIZE_LIMIT {
        return Err(Error::invalid(format!(
            "oracle refuses {ny}x{nx} problem: Y·X exceeds {ORACLE_SIZE_LIMIT}"
        )));
    }
    let cols = active_columns(&problem.a);
    if problem.y.iter().all(|&v| v == 0.0) || cols.is_empty() {
        return Ok(L1Solution::zero(problem));
    }
    let amax = problem.a.amax();
    let ymax = problem.y.amax();
    let a = scaled_columns(&problem.a, &cols, amax);
    let nx = cols.len();

    // columns: x (nx), u (ny), v (ny), rhs
    let n = nx + 2 * ny;
    let w = n + 1;
    let mut t = vec![0.0; ny * w];
    let mut basis = vec![0usize; ny];
    for i in 0..ny {
        let yi = problem.y[i] / ymax;
        let sign = if yi >= 0.0 { 1.0 } else { -1.0 };
        let row = &mut t[i * w..(i + 1) * w];
        for j in 0..nx {
            row[j] = sign * a[(i, j)];
        }
        row[nx + i] = sign;
        row[nx + ny + i] = -sign;
        row[n] = sign * yi;
        basis[i] = if sign > 0.0 { nx + i } else { nx + ny + i };
    }
    let cost = |j: usize| if j < nx { 0.0 } else { 1.0 };

    let max_pivots = 200 * (n + ny);
    let mut pivots = 0;
    loop {
        // Bland: lowest-index column with negative reduced cost
        let mut entering = None;
        for j in 0..n {
            if basis.contains(&j) {
                continue;
            }
            let mut rc = cost(j);
            for i in 0..ny {
                rc -= cost(basis[i]) * t[i * w + j];
            }
            if rc < -COST_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(q) = entering else { break };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..ny {
            let piv = t[i * w + q];
            if piv <= PIVOT_EPS {
                continue;
            }
            let ratio = t[i * w + n] / piv;
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    if ratio < best - PIVOT_EPS
                        || (ratio <= best + PIVOT_EPS && basis[i] < basis[r])
                    {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((p, _)) = leave else {
            return Err(Error::Internal(
                "l1 linear program reported unbounded".into(),
            ));
        };

        let piv = t[p * w + q];
        for k in 0..w {
            t[p * w + k] /= piv;
        }
        for i in 0..ny {
            if i == p {
                continue;
            }
            let f = t[i * w + q];
            if f != 0.0 {
                for k in 0..w {
                    t[i * w + k] -= f * t[p * w + k];
                }
            }
        }
        basis[p] = q;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Internal(format!(
                "simplex exceeded {max_pivots} pivots"
            )));
        }
    }

    let mut x = DVector::zeros(problem.a.ncols());
    for (i, &b) in basis.iter().enumerate() {
        if b < nx {
            x[cols[b]] = t[i * w + n].max(0.0) * ymax / amax;
        }
    }
    let objective = problem.objective(&x);
    Ok(L1Solution {
        x,
        objective,
        iterations: pivots,
        converged: true,
        history: Vec::new(),
        gap_history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn scalar_case() {
        let p = L1Problem::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 3.0),
        )
        .unwrap();
        let s = lp_oracle(&p).unwrap();
        assert!((s.x[0] - 1.5).abs() < 1e-12);
        assert!(s.objective < 1e-12);
    }

    #[test]
    fn identity_exact() {
        let y = vec![1.0, 0.0, 2.0, 0.0, 3.0];
        let p = L1Problem::new(DMatrix::identity(5, 5), DVector::from_vec(y.clone())).unwrap();
        let s = lp_oracle(&p).unwrap();
        assert_eq!(s.x.as_slice(), &y[..]);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn mixed_sign_observation() {
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let p = L1Problem::new(a, DVector::from_vec(vec![-1.0, 2.0, 4.0])).unwrap();
        let s = lp_oracle(&p).unwrap();
        // weighted median of {−1, 2, 4} restricted to x ≥ 0
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!((s.objective - 5.0).abs() < 1e-12);
    }

    #[test]
    fn scale_guard() {
        let p = L1Problem::new(
            DMatrix::from_element(100, 51, 1.0),
            DVector::from_element(100, 1.0),
        )
        .unwrap();
        assert!(matches!(lp_oracle(&p), Err(Error::InvalidArgument(_))));
    }
}
