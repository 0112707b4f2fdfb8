//! The quotient `π: M₊(n,m) → Sym₊(m)`, `A ↦ AᵀA`.
//!
//! Fibers of `π` are exactly the `SO(n)` orbits, so the fiber metric descends
//! to `Sym₊(m)` as a multiple of the Ebin metric,
//! `⟨h, k⟩_g = ¼·tr(g⁻¹ h g⁻¹ k)·√det g`. The horizontal lift of `k` at `A` is
//! `A·(AᵀA)⁻¹·k/2`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fiber::{geodesic_data_raw, FullRankMatrix, GeodesicData};
use crate::linalg::{self, abs, expm, fro, skew_part, sqrt, sym_inv_sqrt, sym_sqrt, DEFAULT_RANK_TOL};
use crate::solver::{distance, log_map_from, Method, SolverOptions};

/// Symmetry tolerance for [`SpdMatrix`] and for symmetric tangent arguments.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Orthogonality and determinant tolerance for [`Rotation`].
pub const ROTATION_TOL: f64 = 1e-10;
/// Candidates shorter than this after projection are skipped when completing
/// an orthonormal basis.
const GRAM_SCHMIDT_SKIP: f64 = 1e-8;
/// Random skew-generator restarts of the `SO(n)` search, on top of the
/// identity and the horizontal-shooting seed.
pub const SO_RESTARTS: usize = 8;

/// A symmetric positive definite `m×m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in i + 1..a.ncols() {
            worst = worst.max(abs(a[(i, j)] - a[(j, i)]));
        }
    }
    worst
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch {
            expected: (a.nrows(), a.nrows()),
            found: a.shape(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * fro(a).max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

impl SpdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tol(entries, DEFAULT_RANK_TOL)
    }

    /// Requires symmetry within `1e-12` (relative to `max(‖g‖_F, 1)`) and
    /// every eigenvalue above `rank_tol`.
    pub fn with_tol(entries: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        check_symmetric(&entries)?;
        if entries.nrows() == 0 {
            return Err(Error::UnsupportedShape { n: 0, m: 0 });
        }
        let min_eigenvalue = entries.symmetric_eigenvalues().min();
        if !(min_eigenvalue > rank_tol) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(SpdMatrix { entries })
    }

    pub fn from_row_slice(m: usize, data: &[f64]) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::ShapeMismatch {
                expected: (m, m),
                found: (data.len(), 1),
            });
        }
        Self::new(DMatrix::from_row_slice(m, m, data))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }
}

/// An element of `SO(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    entries: DMatrix<f64>,
}

impl Rotation {
    /// Requires `‖OᵀO − I‖_F ≤ 1e-10` and `|det O − 1| ≤ 1e-10`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                expected: (entries.nrows(), entries.nrows()),
                found: entries.shape(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = entries.nrows();
        let defect = fro(&(entries.tr_mul(&entries) - DMatrix::identity(n, n)));
        let det = entries.determinant();
        if defect > ROTATION_TOL || abs(det - 1.0) > ROTATION_TOL {
            return Err(Error::NotRotation { defect, det });
        }
        Ok(Rotation { entries })
    }

    pub fn identity(n: usize) -> Self {
        Rotation {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// `O·A`.
    pub fn apply(&self, a: &FullRankMatrix) -> Result<FullRankMatrix> {
        a.left_mul(&self.entries)
    }
}

/// `¼·tr(g⁻¹ h g⁻¹ k)·√det g` for symmetric `h`, `k`.
pub fn ebin_inner(g: &SpdMatrix, h: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<f64> {
    for x in [h, k] {
        check_symmetric(x)?;
        if x.shape() != g.entries.shape() {
            return Err(Error::ShapeMismatch {
                expected: g.entries.shape(),
                found: x.shape(),
            });
        }
    }
    let chol = g.entries.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: 0.0,
    })?;
    let det_sqrt: f64 = chol.l().diagonal().iter().product();
    let gh = chol.solve(h);
    let gk = chol.solve(k);
    Ok(0.25 * (gh * gk).trace() * det_sqrt)
}

/// `AᵀA` (positive semidefinite; definite iff `A` has full column rank).
pub fn project(a: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(&a.tr_mul(a))
}

/// `π(A)` for a full-rank `A`.
pub fn project_full(a: &FullRankMatrix) -> Result<SpdMatrix> {
    SpdMatrix::with_tol(project(a.entries()), 0.0)
}

/// `[√g; 0]`: the lift of `g` whose upper block is symmetric positive definite.
pub fn polar_lift(g: &SpdMatrix, n: usize) -> Result<FullRankMatrix> {
    let m = g.m();
    if n <= m {
        return Err(Error::UnsupportedShape { n, m });
    }
    let root = sym_sqrt(&g.entries).ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    let mut lift = DMatrix::zeros(n, m);
    lift.view_mut((0, 0), (m, m)).copy_from(&root);
    FullRankMatrix::with_tol(lift, 0.0)
}

/// Completes the orthonormal columns of `q` (n×m) to an orthonormal basis of
/// `ℝⁿ` with Gram–Schmidt on `e₁, …, eₙ` in order.
fn complete_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = q.shape();
    let mut basis: Vec<nalgebra::DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = nalgebra::DVector::zeros(n);
        v[e] = 1.0;
        // Two passes for numerical orthogonality.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let norm = v.norm();
        if norm > GRAM_SCHMIDT_SKIP {
            basis.push(v / norm);
        }
    }
    debug_assert_eq!(basis.len(), n, "standard basis spans ℝⁿ");
    let mut full = DMatrix::from_columns(&basis);
    if m < n && full.determinant() < 0.0 {
        let last = n - 1;
        full.column_mut(last).neg_mut();
    }
    full
}

/// Orthonormal `A·(AᵀA)^{-1/2}` completed to a rotation.
fn polar_frame(a: &FullRankMatrix) -> Result<DMatrix<f64>> {
    let inv_root = sym_inv_sqrt(&a.gram()).ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    Ok(complete_basis(&(a.entries() * inv_root)))
}

/// A rotation `O` with `A ≈ O·B`, provided `‖AᵀA − BᵀB‖_F ≤ tol·‖AᵀA‖_F`.
///
/// When `n − m ≥ 2` the rotation is not unique; only `A = O·B` is promised.
pub fn align(a: &FullRankMatrix, b: &FullRankMatrix, tol: f64) -> Result<Rotation> {
    a.check_same_shape(b.entries())?;
    let ga = a.gram();
    let residual = fro(&(&ga - b.gram())) / fro(&ga);
    if !(residual <= tol) {
        return Err(Error::GramMismatch { residual });
    }
    let fa = polar_frame(a)?;
    let fb = polar_frame(b)?;
    Ok(Rotation {
        entries: fa * fb.transpose(),
    })
}

/// Result of [`sym_distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientDistance {
    pub value: f64,
    /// The minimizing rotation: `value = distance(lift(g), O·lift(h))`.
    pub rotation: Rotation,
    /// Route that realized `value`.
    pub method: Method,
}

struct Shot {
    length: f64,
    zeta: DMatrix<f64>,
}

fn shoot(a: &FullRankMatrix, b: &FullRankMatrix, init: Option<&DMatrix<f64>>, opts: &SolverOptions) -> Option<Shot> {
    let shot = log_map_from(a, b, init, opts).ok()?;
    let length = shot.tangent.norm();
    length.is_finite().then(|| Shot {
        length,
        zeta: shot.tangent.entries().clone(),
    })
}

/// Velocity of the geodesic at `t = 1` by central differences.
fn endpoint_velocity(data: &GeodesicData) -> Option<DMatrix<f64>> {
    let h = 1e-6;
    let ahead = if data.blowup > 1.0 + h { data.point_raw(1.0 + h).ok() } else { None };
    let here = data.point_raw(1.0).ok()?;
    let behind = data.point_raw(1.0 - h).ok()?;
    Some(match ahead {
        Some(p) => (p - behind) / (2.0 * h),
        None => (here - behind) / h,
    })
}

/// Riemannian gradient, in `so(n)` with the Frobenius inner product, of
/// `O ↦ d(A, exp(W)·O·L)` at `W = 0`. By the first variation formula the
/// derivative along `W` is `⟨u, W·B⟩_B` with `u` the unit velocity at `B`.
fn rotation_gradient(a: &FullRankMatrix, b: &DMatrix<f64>, shot: &Shot) -> Option<DMatrix<f64>> {
    let data = geodesic_data_raw(a, &shot.zeta).ok()?;
    let u = endpoint_velocity(&data)? / shot.length;
    let gram = b.tr_mul(b);
    let chol = gram.cholesky()?;
    let det_sqrt: f64 = chol.l().diagonal().iter().product();
    // ⟨u, W·B⟩_B = tr(u G⁻¹ Bᵀ Wᵀ)·√det G = ⟨u G⁻¹ Bᵀ √det G, W⟩_F.
    let p = chol.solve(&u.transpose()).transpose() * b.transpose() * det_sqrt;
    Some(skew_part(&p))
}

/// Descends `O ↦ shooting length(A, O·L)` from `rotation` along left-translated
/// skew generators with Armijo backtracking.
fn descend(
    a: &FullRankMatrix,
    lift: &FullRankMatrix,
    mut rotation: DMatrix<f64>,
    init: Option<&DMatrix<f64>>,
    opts: &SolverOptions,
) -> Option<(f64, DMatrix<f64>)> {
    let mut b = lift.left_mul(&rotation).ok()?;
    let mut shot = shoot(a, &b, init, opts)?;
    let mut step = 1.0;
    for _ in 0..opts.max_iter {
        let Some(grad) = rotation_gradient(a, b.entries(), &shot) else { break };
        let slope = fro(&grad);
        if slope <= 1e-10 {
            break;
        }
        let mut improved = false;
        while step * slope > 1e-12 {
            let trial_rotation = expm(&(&grad * -step)) * &rotation;
            if let Ok(trial_b) = lift.left_mul(&trial_rotation) {
                if let Some(trial) = shoot(a, &trial_b, Some(&shot.zeta), opts) {
                    if trial.length <= shot.length - 1e-4 * step * slope * slope {
                        let gain = shot.length - trial.length;
                        rotation = trial_rotation;
                        b = trial_b;
                        shot = trial;
                        step = (step * 2.0).min(1e3);
                        improved = gain > 1e-13 * shot.length;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((shot.length, rotation))
}

/// Geodesic in `M₊(n,m)` from `a` with horizontal initial velocity
/// `A·G⁻¹·K` (`K` symmetric) ending in the fiber `π⁻¹(h)`, found by damped
/// Gauss–Newton on the `m(m+1)/2` independent entries.
fn horizontal_shot(a: &FullRankMatrix, h: &DMatrix<f64>, opts: &SolverOptions) -> Option<DMatrix<f64>> {
    let m = a.m();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let dim = pairs.len();
    let lift_k = a.gram().cholesky()?;
    let to_zeta = |k: &nalgebra::DVector<f64>| {
        let mut sym = DMatrix::zeros(m, m);
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            sym[(i, j)] = k[idx];
            sym[(j, i)] = k[idx];
        }
        a.entries() * lift_k.solve(&sym)
    };
    let residual = |k: &nalgebra::DVector<f64>| -> Option<nalgebra::DVector<f64>> {
        let data = geodesic_data_raw(a, &to_zeta(k)).ok()?;
        if data.blowup <= 1.0 {
            return None;
        }
        let end = data.point_raw(1.0).ok()?;
        let diff = project(&end) - h;
        let r = nalgebra::DVector::from_iterator(dim, pairs.iter().map(|&(i, j)| diff[(i, j)]));
        r.iter().all(|v| v.is_finite()).then_some(r)
    };

    // dπ(A·G⁻¹·K) = 2K, so K₀ = (h − g)/2 is the linearized solution.
    let g = a.gram();
    let mut k = nalgebra::DVector::from_iterator(dim, pairs.iter().map(|&(i, j)| 0.5 * (h[(i, j)] - g[(i, j)])));
    let mut res = None;
    for _ in 0..60 {
        if let Some(r) = residual(&k) {
            res = Some(r);
            break;
        }
        k *= 0.5;
    }
    let mut res = res?;
    let target = opts.endpoint_tol * fro(h).max(1.0);
    for _ in 0..opts.max_iter {
        if res.norm() <= target {
            return Some(to_zeta(&k));
        }
        let step_h = 1e-6 * k.norm().max(1.0);
        let mut jac = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut plus = k.clone();
            plus[c] += step_h;
            let mut minus = k.clone();
            minus[c] -= step_h;
            let col = match (residual(&plus), residual(&minus)) {
                (Some(p), Some(q)) => (p - q) / (2.0 * step_h),
                (Some(p), None) => (p - &res) / step_h,
                (None, Some(q)) => (&res - q) / step_h,
                (None, None) => return None,
            };
            jac.set_column(c, &col);
        }
        let step = jac.lu().solve(&(-&res))?;
        let mut damping = 1.0;
        loop {
            if damping < 1e-10 {
                return None;
            }
            let cand = &k + &step * damping;
            if let Some(r) = residual(&cand) {
                if r.norm() < res.norm() {
                    k = cand;
                    res = r;
                    break;
                }
            }
            damping *= 0.5;
        }
    }
    (res.norm() <= target).then(|| to_zeta(&k))
}

/// A random skew-symmetric `n×n` generator with Frobenius norm uniform in `[0, π]`.
fn random_skew(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    use rand::Rng;
    let raw = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let w = skew_part(&raw);
    let norm = fro(&w);
    if norm == 0.0 {
        return w;
    }
    let radius: f64 = rng.random_range(0.0..=core::f64::consts::PI);
    w * (radius / norm)
}

/// Distance on `Sym₊(m)` induced by the fiber metric on `n×m` matrices:
/// `min_{O ∈ SO(n)} distance([√g;0], O·[√h;0])`.
///
/// The minimization descends on `O = exp(W)·O₀` from the identity, from the
/// rotation found by a horizontal shooting solve, and from
/// [`SO_RESTARTS`] seeded random generators; the best rotation is then
/// scored with the full [`distance`].
pub fn sym_distance(g: &SpdMatrix, h: &SpdMatrix, n: usize, opts: &SolverOptions) -> Result<QuotientDistance> {
    if g.m() != h.m() {
        return Err(Error::ShapeMismatch {
            expected: g.entries.shape(),
            found: h.entries.shape(),
        });
    }
    let lg = polar_lift(g, n)?;
    let lh = polar_lift(h, n)?;
    if g == h {
        return Ok(QuotientDistance {
            value: 0.0,
            rotation: Rotation::identity(n),
            method: Method::Shooting,
        });
    }

    let mut starts: Vec<(DMatrix<f64>, Option<DMatrix<f64>>)> = Vec::new();
    starts.push((DMatrix::identity(n, n), None));
    if let Some(zeta) = horizontal_shot(&lg, h.entries(), opts) {
        let end = geodesic_data_raw(&lg, &zeta).and_then(|d| d.point(1.0));
        if let Ok(end) = end {
            if let Ok(o) = align(&end, &lh, 1e-6) {
                starts.push((o.entries, Some(zeta)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..SO_RESTARTS {
        starts.push((expm(&random_skew(&mut rng, n)), None));
    }

    // Deterministic reduction: smallest length, ties to the earliest start.
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for (rotation, init) in starts {
        if let Some((length, rotation)) = descend(&lg, &lh, rotation, init.as_ref(), opts) {
            if best.as_ref().is_none_or(|(l, _)| length < *l) {
                best = Some((length, rotation));
            }
        }
    }

    let (shot_length, rotation) = best.unwrap_or_else(|| (f64::INFINITY, DMatrix::identity(n, n)));
    let target = lh.left_mul(&rotation)?;
    let full = distance(&lg, &target, opts);
    let (value, method) = if shot_length < full.value {
        (shot_length, Method::Shooting)
    } else {
        (full.value, full.method)
    };
    Ok(QuotientDistance {
        value,
        rotation: Rotation { entries: rotation },
        method,
    })
}

/// Ebin length of the tangent `k` at `g`, i.e. `√ebin_inner(g, k, k)`.
pub fn ebin_norm(g: &SpdMatrix, k: &DMatrix<f64>) -> Result<f64> {
    Ok(sqrt(ebin_inner(g, k, k)?.max(0.0)))
}

/// The horizontal lift `A·(AᵀA)⁻¹·k/2` of a symmetric tangent `k` at `π(A)`.
pub fn horizontal_lift(a: &FullRankMatrix, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(k)?;
    let chol = a.gram().cholesky().ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    Ok(a.entries() * chol.solve(k) * 0.5)
}
