//! Geodesic distance on `M₊(n,m)` and on its completion `M₊(n,m) ∪ {0}`.
//!
//! Three routes are tried and the shortest wins:
//!
//! - shooting: invert the closed-form exponential (`log_map`) and take the
//!   length `‖ζ‖_A` of the resulting geodesic;
//! - PL: shorten piecewise-linear paths by block-coordinate descent;
//! - through the singular stratum: `d(A, 0) + d(0, B)`, since the completion
//!   collapses every rank-deficient matrix to a single point.
//!
//! Arguments are put in a canonical order before solving, so
//! `distance(a, b)` and `distance(b, a)` return the same value bit for bit.

mod pl;
mod shooting;

use core::cmp::Ordering;

use nalgebra::DMatrix;

use crate::fiber::{lower_bound, segment_length, volume_quarter, FullRankMatrix, PlPath, TangentMatrix};
use crate::linalg::{self, sqrt, DEFAULT_RANK_TOL};

pub use pl::{pl_distance, pl_shorten, pl_shorten_with, PlOutcome, Shortened};
pub use shooting::{log_map, log_map_from, Shot};

/// Tolerances and budgets shared by every solver route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative rank tolerance for full-rank checks.
    pub rank_tol: f64,
    /// Frobenius tolerance on `exp(A, ζ, 1) − B` for shooting.
    pub endpoint_tol: f64,
    /// Gauss–Newton iteration cap for shooting.
    pub max_iter: usize,
    /// Number of segments of the final PL path.
    pub pl_segments: usize,
    /// Sweep cap per refinement level of the PL solver.
    pub pl_iters: usize,
    /// Number of PL starts: the straight segment plus seeded perturbations.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
            endpoint_tol: 1e-10,
            max_iter: 60,
            pl_segments: 16,
            pl_iters: 500,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Shooting,
    Pl,
    ThroughSingular,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Shooting => "shooting",
            Method::Pl => "pl",
            Method::ThroughSingular => "through_singular",
        }
    }
}

/// Evidence for a reported distance.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Initial velocity of a geodesic reaching the other endpoint at `t = 1`.
    /// It is based at whichever argument comes first in canonical order; use
    /// [`TangentMatrix::base`] to tell which.
    Geodesic(TangentMatrix),
    /// A full-rank PL path from the first argument to the second.
    Path(PlPath),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    pub method: Method,
    pub certificate: Option<Certificate>,
    /// `(2/√m)·|det(AᵀA)^{1/4} − det(BᵀB)^{1/4}|`.
    pub lower: f64,
    /// Iterations (Gauss–Newton steps or PL sweeps) spent by the winning route.
    pub iterations: usize,
}

/// Distance from `A` to the singular stratum, `(2/√m)·det(AᵀA)^{1/4}`.
/// It is the length of the pure-scaling geodesic `t ↦ (1 − t/2)^{2/m}·A`
/// run until it collapses.
pub fn dist_to_singular(a: &FullRankMatrix) -> f64 {
    2.0 / sqrt(a.m() as f64) * volume_quarter(a.entries())
}

fn canonical_order(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Geodesic distance between two full-rank matrices of the same shape.
///
/// Never fails: if neither shooting nor PL produce a path, the through-singular
/// route is always available.
pub fn distance(a: &FullRankMatrix, b: &FullRankMatrix, opts: &SolverOptions) -> DistanceResult {
    assert_eq!(a.shape(), b.shape(), "distance needs matrices of equal shape");
    let swapped = canonical_order(a.entries(), b.entries()) == Ordering::Greater;
    let (x, y) = if swapped { (b, a) } else { (a, b) };
    let lower = lower_bound(x.entries(), y.entries()).expect("shapes checked");

    if x == y {
        return DistanceResult {
            value: 0.0,
            method: Method::Shooting,
            certificate: Some(Certificate::Geodesic(TangentMatrix::zero(x.clone()))),
            lower,
            iterations: 0,
        };
    }

    let mut best = DistanceResult {
        value: dist_to_singular(x) + dist_to_singular(y),
        method: Method::ThroughSingular,
        certificate: None,
        lower,
        iterations: 0,
    };

    let pl_result = pl_distance(x, y, opts);
    if let Some(pl) = pl_result.clone() {
        if pl.length <= best.value {
            let path = if swapped { pl.path.reversed() } else { pl.path };
            best = DistanceResult {
                value: pl.length,
                method: Method::Pl,
                certificate: Some(Certificate::Path(path)),
                lower,
                iterations: pl.sweeps,
            };
        }
    }

    if let Ok(shot) = shoot(x, y, pl_result.as_ref(), opts) {
        let length = shot.tangent.norm();
        if length.is_finite() && length <= best.value {
            best = DistanceResult {
                value: length,
                method: Method::Shooting,
                certificate: Some(Certificate::Geodesic(shot.tangent)),
                lower,
                iterations: shot.iterations,
            };
        }
    }
    best
}

/// Shooting from `ζ₀ = B − A`; if that stalls, once more from the velocity
/// suggested by the first segment of a shortened PL path (computed on demand
/// when `pl` is `None`).
fn shoot(a: &FullRankMatrix, b: &FullRankMatrix, pl: Option<&PlOutcome>, opts: &SolverOptions) -> crate::Result<Shot> {
    let first = log_map_from(a, b, None, opts);
    if first.is_ok() {
        return first;
    }
    let computed;
    let pl = match pl {
        Some(p) => p,
        None => {
            computed = pl_distance(a, b, opts);
            match &computed {
                Some(p) => p,
                None => return first,
            }
        }
    };
    let controls = pl.path.controls();
    let first_segment = segment_length(&controls[0], &controls[1], opts.rank_tol).unwrap_or(0.0);
    if !(first_segment > 0.0) {
        return first;
    }
    // A unit-time geodesic covers the first segment in time L₀/L.
    let init = (&controls[1] - &controls[0]) * (pl.length / first_segment);
    log_map_from(a, b, Some(&init), opts).or(first)
}

/// Length of the shooting geodesic from `a` to `b`, if one is found (see
/// [`distance`] for the start values tried).
pub fn shooting_distance(a: &FullRankMatrix, b: &FullRankMatrix, opts: &SolverOptions) -> Option<f64> {
    shoot(a, b, None, opts).ok().map(|s| s.tangent.norm())
}

/// A point of the completion `M₊(n,m) ∪ {0}`: rank-deficient matrices are
/// stored as the zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionPoint {
    matrix: DMatrix<f64>,
    full_rank: Option<FullRankMatrix>,
}

impl CompletionPoint {
    pub fn new(matrix: DMatrix<f64>) -> crate::Result<Self> {
        Self::with_tol(matrix, DEFAULT_RANK_TOL)
    }

    pub fn with_tol(matrix: DMatrix<f64>, rank_tol: f64) -> crate::Result<Self> {
        let (n, m) = matrix.shape();
        if m == 0 || n <= m {
            return Err(crate::Error::UnsupportedShape { n, m });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite);
        }
        if linalg::is_full_rank(&matrix, rank_tol) {
            let full = FullRankMatrix::with_tol(matrix.clone(), rank_tol)?;
            Ok(Self {
                matrix,
                full_rank: Some(full),
            })
        } else {
            Ok(Self::singular(n, m))
        }
    }

    /// The collapsed singular class.
    pub fn singular(n: usize, m: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, m),
            full_rank: None,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn full_rank(&self) -> Option<&FullRankMatrix> {
        self.full_rank.as_ref()
    }

    pub fn is_singular(&self) -> bool {
        self.full_rank.is_none()
    }
}

impl From<FullRankMatrix> for CompletionPoint {
    fn from(a: FullRankMatrix) -> Self {
        Self {
            matrix: a.entries().clone(),
            full_rank: Some(a),
        }
    }
}

/// Distance in the completion `M₊(n,m) ∪ {0}`.
pub fn completion_distance(p: &CompletionPoint, q: &CompletionPoint, opts: &SolverOptions) -> f64 {
    match (p.full_rank(), q.full_rank()) {
        (None, None) => 0.0,
        (Some(a), None) | (None, Some(a)) => dist_to_singular(a),
        (Some(a), Some(b)) => distance(a, b, opts).value,
    }
}

#[cfg(test)]
mod tests;
