//! Boundary-value inversion of the closed-form exponential by damped
//! Gauss–Newton on the endpoint residual `exp(A, ζ, 1) − B`.

use nalgebra::{DMatrix, DVector};

use super::SolverOptions;
use crate::error::{Error, Result};
use crate::fiber::{geodesic_data_raw, FullRankMatrix, TangentMatrix};
use crate::linalg::fro;

/// Relative finite-difference step for the residual Jacobian.
const FD_STEP: f64 = 1e-6;
/// Smallest line-search factor tried before giving up.
const MIN_DAMPING: f64 = 1e-10;

/// Outcome of a successful shooting solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub tangent: TangentMatrix,
    pub residual: f64,
    pub iterations: usize,
}

/// `ζ` with `‖exp(A, ζ, 1) − B‖_F ≤ endpoint_tol`, started from `ζ₀ = B − A`.
pub fn log_map(a: &FullRankMatrix, b: &FullRankMatrix, opts: &SolverOptions) -> Result<TangentMatrix> {
    log_map_from(a, b, None, opts).map(|s| s.tangent)
}

fn residual(a: &FullRankMatrix, target: &DMatrix<f64>, zeta: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let data = geodesic_data_raw(a, zeta).ok()?;
    if data.blowup <= 1.0 {
        return None;
    }
    let end = data.point_raw(1.0).ok()?;
    if end.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(end - target)
}

/// Shooting with an optional warm start (defaults to `B − A`).
pub fn log_map_from(
    a: &FullRankMatrix,
    b: &FullRankMatrix,
    init: Option<&DMatrix<f64>>,
    opts: &SolverOptions,
) -> Result<Shot> {
    a.check_same_shape(b.entries())?;
    let (n, m) = a.shape();
    let dim = n * m;
    let target = b.entries();

    let mut zeta = init.cloned().unwrap_or_else(|| target - a.entries());
    // Shrink the start until the geodesic survives to t = 1.
    let mut res = None;
    for _ in 0..60 {
        if let Some(r) = residual(a, target, &zeta) {
            res = Some(r);
            break;
        }
        zeta *= 0.5;
    }
    let mut res = res.ok_or(Error::NotConverged {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    let mut res_norm = fro(&res);

    for iteration in 0..=opts.max_iter {
        if res_norm <= opts.endpoint_tol {
            return Ok(Shot {
                tangent: TangentMatrix::new(a.clone(), zeta)?,
                residual: res_norm,
                iterations: iteration,
            });
        }
        if iteration == opts.max_iter {
            break;
        }

        let h = FD_STEP * fro(&zeta).max(1.0);
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            let mut plus = zeta.clone();
            plus[j] += h;
            let mut minus = zeta.clone();
            minus[j] -= h;
            let column = match (residual(a, target, &plus), residual(a, target, &minus)) {
                (Some(p), Some(q)) => (p - q) / (2.0 * h),
                (Some(p), None) => (p - &res) / h,
                (None, Some(q)) => (&res - q) / h,
                (None, None) => {
                    return Err(Error::BlowUp {
                        t: 1.0,
                        blowup: 1.0,
                    })
                }
            };
            jac.set_column(j, &DVector::from_column_slice(column.as_slice()));
        }

        let rhs = -DVector::from_column_slice(res.as_slice());
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => jac
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|_| Error::NotConverged {
                    iterations: iteration,
                    residual: res_norm,
                })?,
        };
        let step = DMatrix::from_column_slice(n, m, step.as_slice());

        let mut damping = 1.0;
        let mut accepted = false;
        while damping >= MIN_DAMPING {
            let candidate = &zeta + &step * damping;
            if let Some(r) = residual(a, target, &candidate) {
                let norm = fro(&r);
                if norm < res_norm {
                    zeta = candidate;
                    res = r;
                    res_norm = norm;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                iterations: iteration + 1,
                residual: res_norm,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: res_norm,
    })
}
