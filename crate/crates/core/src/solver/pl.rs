//! Piecewise-linear path shortening.
//!
//! Interior control points are moved one at a time to shorten the two
//! adjacent segments, with Armijo backtracking. A trial position is rejected if any quadrature node of an
//! adjacent segment drops below the rank tolerance, so every accepted path
//! stays inside `M₊(n,m)` and the length never increases.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SolverOptions;
use crate::fiber::{segment_length, FullRankMatrix, PlPath, SegmentGram};
use crate::linalg::{fro, sqrt, DEFAULT_RANK_TOL};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1e3;
/// A sweep that shortens the path by less than this fraction ends a level.
const STALL: f64 = 1e-8;
/// Looser stall for the coarse levels of the refinement ladder, whose
/// result is only a starting point for the next level.
const COARSE_STALL: f64 = 1e-6;
/// Number of segments of the first refinement level.
const COARSE_SEGMENTS: usize = 4;
/// Attempts at drawing an admissible perturbed start.
const START_ATTEMPTS: usize = 12;

/// Result of [`pl_shorten_with`].
#[derive(Debug, Clone)]
pub struct Shortened {
    pub path: PlPath,
    pub length: f64,
    /// Path length after each sweep, starting with the input length.
    pub history: Vec<f64>,
}

/// Best PL path found between two endpoints.
#[derive(Debug, Clone)]
pub struct PlOutcome {
    pub length: f64,
    pub path: PlPath,
    pub sweeps: usize,
    pub restart: usize,
}

/// Length of `lin(a, b)` and its gradient with respect to both endpoints.
#[cfg(test)]
fn segment_with_gradient(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let (len, grad_a) = SegmentGram::new(a, b).length_with_gradient(0.0, false)?;
    let (_, grad_b) = SegmentGram::new(a, b).length_with_gradient(0.0, true)?;
    Some((len, grad_a, grad_b))
}

/// Shortens `path` for at most `iters` sweeps with the default rank tolerance.
pub fn pl_shorten(path: &PlPath, iters: usize) -> PlPath {
    pl_shorten_with(path, iters, DEFAULT_RANK_TOL).path
}

/// Local quasi-Newton state of one interior control point.
#[derive(Clone)]
struct BlockModel {
    /// Inverse Hessian approximation acting on column-major `vec(X)`.
    inv_hessian: Option<DMatrix<f64>>,
    /// Step scale used until the first curvature pair is available.
    step: f64,
}

/// `(G ⊗ I_n)/√det G`: the inverse metric at `x` acting on `vec` of a
/// Euclidean gradient, i.e. `vec(g·G)/√det G`.
fn metric_preconditioner(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (n, m) = x.shape();
    let gram = x.tr_mul(x);
    let det_sqrt: f64 = gram.clone().cholesky()?.l().diagonal().iter().product();
    let dim = n * m;
    Some(DMatrix::from_fn(dim, dim, |r, c| {
        if r % n == c % n {
            gram[(r / n, c / n)] / det_sqrt
        } else {
            0.0
        }
    }))
}

fn local_gradient(controls: &[DMatrix<f64>], i: usize) -> Option<DMatrix<f64>> {
    let (_, g_left) = SegmentGram::new(&controls[i - 1], &controls[i]).length_with_gradient(0.0, true)?;
    let (_, g_right) = SegmentGram::new(&controls[i], &controls[i + 1]).length_with_gradient(0.0, false)?;
    Some(g_left + g_right)
}

/// Block-coordinate descent on the interior control points of `path`:
/// each point takes one quasi-Newton step (BFGS model per point, seeded with
/// the inverse metric) with Armijo backtracking per sweep. Endpoints never
/// move. Stops early once a sweep gains less than a `1e-8` fraction of the
/// length.
pub fn pl_shorten_with(path: &PlPath, iters: usize, rank_tol: f64) -> Shortened {
    shorten(path, iters, rank_tol, STALL)
}

fn shorten(path: &PlPath, iters: usize, rank_tol: f64, stall: f64) -> Shortened {
    let k = path.segments();
    let (n, m) = path.start().shape();
    let mut controls: Vec<DMatrix<f64>> = path.controls().to_vec();
    let mut lengths: Vec<f64> = match controls
        .windows(2)
        .map(|w| segment_length(&w[0], &w[1], rank_tol))
        .collect::<Option<Vec<f64>>>()
    {
        Some(l) => l,
        None => {
            return Shortened {
                path: path.clone(),
                length: f64::INFINITY,
                history: vec![f64::INFINITY],
            }
        }
    };
    let mut length: f64 = lengths.iter().sum();
    let mut history = vec![length];
    let mut models = vec![
        BlockModel {
            inv_hessian: None,
            step: 1.0,
        };
        k + 1
    ];

    for _ in 0..iters {
        let before = length;
        for i in 1..k {
            let Some(grad) = local_gradient(&controls, i) else {
                continue;
            };
            let Some(precond) = metric_preconditioner(&controls[i]) else {
                continue;
            };
            let g = DVector::from_column_slice(grad.as_slice());
            let model = &mut models[i];
            let mut direction = match &model.inv_hessian {
                Some(h) => -(h * &g),
                None => -(&precond * &g) * model.step,
            };
            let mut slope = g.dot(&direction);
            if !(slope < 0.0) {
                // Model lost positive definiteness along g: fall back.
                model.inv_hessian = None;
                direction = -(&precond * &g) * model.step;
                slope = g.dot(&direction);
                if !(slope < 0.0) {
                    continue;
                }
            }
            let old = lengths[i - 1] + lengths[i];
            let mut t = 1.0;
            let mut accepted = None;
            while t * direction.amax() > MIN_STEP * (1.0 + controls[i].amax()) {
                let delta = DMatrix::from_column_slice(n, m, (&direction * t).as_slice());
                let trial = &controls[i] + &delta;
                let left = segment_length(&controls[i - 1], &trial, rank_tol);
                let right = segment_length(&trial, &controls[i + 1], rank_tol);
                if let (Some(l), Some(r)) = (left, right) {
                    if l + r <= old + ARMIJO * t * slope && l + r < old {
                        accepted = Some((trial, l, r, t));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((trial, l, r, t)) = accepted else {
                model.inv_hessian = None;
                model.step = (model.step * 0.25).max(MIN_STEP);
                continue;
            };
            let s_vec = &direction * t;
            controls[i] = trial;
            lengths[i - 1] = l;
            lengths[i] = r;
            if model.inv_hessian.is_none() {
                model.step = (model.step * t * 2.0).min(MAX_STEP);
            }
            // Curvature pair from the gradient at the accepted position.
            if let Some(new_grad) = local_gradient(&controls, i) {
                let y = DVector::from_column_slice(new_grad.as_slice()) - &g;
                let sy = s_vec.dot(&y);
                if sy > 1e-14 * s_vec.norm() * y.norm() {
                    let h = model.inv_hessian.take().unwrap_or_else(|| {
                        let py = &precond * &y;
                        &precond * (sy / y.dot(&py))
                    });
                    let rho = 1.0 / sy;
                    let hy = &h * &y;
                    let yhy = y.dot(&hy);
                    // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
                    let updated = &h - (&hy * s_vec.transpose() + &s_vec * hy.transpose()) * rho
                        + &s_vec * s_vec.transpose() * (rho * rho * yhy + rho);
                    model.inv_hessian = Some(updated);
                }
            }
        }
        length = lengths.iter().sum();
        history.push(length);
        if before - length <= stall * before {
            break;
        }
    }

    Shortened {
        path: PlPath::from_controls_unchecked(controls),
        length,
        history,
    }
}

fn perturbed_start(
    a: &FullRankMatrix,
    b: &FullRankMatrix,
    k: usize,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
    rank_tol: f64,
) -> Option<PlPath> {
    let (n, m) = a.shape();
    let controls: Vec<DMatrix<f64>> = (0..=k)
        .map(|i| {
            let u = i as f64 / k as f64;
            let mut x = a.entries() * (1.0 - u) + b.entries() * u;
            if i != 0 && i != k {
                let bump = libm::sin(core::f64::consts::PI * u) * amplitude;
                x += DMatrix::from_fn(n, m, |_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * bump
                });
            }
            x
        })
        .collect();
    let path = PlPath::from_controls_unchecked(controls);
    let admissible = path
        .controls()
        .windows(2)
        .all(|w| segment_length(&w[0], &w[1], rank_tol).is_some());
    admissible.then_some(path)
}

/// Shortest PL path found from `a` to `b` over `opts.restarts` starts,
/// refined by midpoint doubling up to `opts.pl_segments` segments. Restart 0
/// starts from the straight segment, the others from seeded random
/// perturbations of it. Ties go to the lowest restart index. `None` when no
/// admissible start was found.
pub fn pl_distance(a: &FullRankMatrix, b: &FullRankMatrix, opts: &SolverOptions) -> Option<PlOutcome> {
    let target_k = opts.pl_segments.max(1);
    let mut k0 = target_k;
    while k0 > COARSE_SEGMENTS && k0.is_multiple_of(2) {
        k0 /= 2;
    }
    let scale = fro(&(b.entries() - a.entries())) / sqrt((a.n() * a.m()) as f64);
    let mut best: Option<PlOutcome> = None;

    for restart in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut start = None;
        for attempt in 0..START_ATTEMPTS {
            let amplitude = if restart == 0 && attempt == 0 {
                0.0
            } else {
                0.5 * scale / (1.0 + attempt as f64)
            };
            start = perturbed_start(a, b, k0, &mut rng, amplitude, opts.rank_tol);
            if start.is_some() {
                break;
            }
        }
        let Some(mut path) = start else { continue };

        let mut sweeps = 0;
        let mut length;
        loop {
            let stall = if path.segments() >= target_k { STALL } else { COARSE_STALL };
            let shortened = shorten(&path, opts.pl_iters, opts.rank_tol, stall);
            sweeps += shortened.history.len() - 1;
            path = shortened.path;
            length = shortened.length;
            if path.segments() >= target_k {
                break;
            }
            path = path.refined();
        }
        if best.as_ref().is_none_or(|b| length < b.length) {
            best = Some(PlOutcome {
                length,
                path,
                sweeps,
                restart,
            });
        }
    }
    best.filter(|b| b.length.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_gradient_matches_finite_differences() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.3, 0.8, 0.5, 0.1]);
        let b = DMatrix::from_row_slice(3, 2, &[0.4, 1.1, 0.9, -0.2, 0.3, 0.7]);
        let (len, ga, gb) = segment_with_gradient(&a, &b).unwrap();
        assert!((len - segment_length(&a, &b, DEFAULT_RANK_TOL).unwrap()).abs() < 1e-14);
        let h = 1e-6;
        for idx in 0..6 {
            let mut ap = a.clone();
            ap[idx] += h;
            let mut am = a.clone();
            am[idx] -= h;
            let fd = (segment_length(&ap, &b, 1e-9).unwrap() - segment_length(&am, &b, 1e-9).unwrap()) / (2.0 * h);
            assert!((fd - ga[idx]).abs() < 1e-7, "a[{idx}]: {fd} vs {}", ga[idx]);
            let mut bp = b.clone();
            bp[idx] += h;
            let mut bm = b.clone();
            bm[idx] -= h;
            let fd = (segment_length(&a, &bp, 1e-9).unwrap() - segment_length(&a, &bm, 1e-9).unwrap()) / (2.0 * h);
            assert!((fd - gb[idx]).abs() < 1e-7, "b[{idx}]: {fd} vs {}", gb[idx]);
        }
    }
}
