//! Closed-form geometry of the fiber `M₊(n,m)` of full-rank `n×m` matrices.
//!
//! The metric is `⟨U,V⟩_A = tr(U (AᵀA)⁻¹ Vᵀ) · √det(AᵀA)`. Geodesics are
//! available in closed form:
//!
//! ```text
//! α(t) = f(t)^{1/m} · exp(s(t)·(Z₀ − Z₀ᵀ)) · exp(s(t)·Z₀ᵀ·AA⁺) · A
//! ```
//!
//! with `Z = ζA⁺`, `Z₀` its traceless part along the projector `AA⁺`,
//! `f(t) = (m/4)·tr(Z₀Z₀ᵀ)·t² + (1 + tr(Z)·t/2)²` and `s(t) = ∫₀ᵗ dσ/f(σ)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, abs, expm, fro, gauss_legendre_16, powf, sqrt, DEFAULT_RANK_TOL};

/// Relative threshold under which `tr(Z₀Z₀ᵀ)` is treated as exactly zero.
const TRACELESS_ZERO: f64 = 1e-28;

/// A point of `M₊(n,m)`: an `n×m` matrix with `n > m ≥ 1` and full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRankMatrix {
    entries: DMatrix<f64>,
}

impl FullRankMatrix {
    /// Validates `entries` against the default rank tolerance.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tol(entries, DEFAULT_RANK_TOL)
    }

    pub fn with_tol(entries: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        let (n, m) = entries.shape();
        if m == 0 || n <= m {
            return Err(Error::UnsupportedShape { n, m });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let (lo, hi) = linalg::sigma_extremes(&entries);
        let threshold = linalg::rank_threshold(hi, rank_tol);
        if lo <= threshold {
            return Err(Error::RankDeficient {
                sigma_min: lo,
                threshold,
            });
        }
        Ok(Self { entries })
    }

    /// Row-major constructor.
    pub fn from_row_slice(n: usize, m: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::ShapeMismatch {
                expected: (n, m),
                found: (data.len(), 1),
            });
        }
        Self::new(DMatrix::from_row_slice(n, m, data))
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

    pub fn m(&self) -> usize {
        self.entries.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.shape()
    }

    /// `AᵀA`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.entries.tr_mul(&self.entries)
    }

    /// `O·A` for a square `O` of matching size. Fails if the product loses rank.
    pub fn left_mul(&self, o: &DMatrix<f64>) -> Result<Self> {
        if o.shape() != (self.n(), self.n()) {
            return Err(Error::ShapeMismatch {
                expected: (self.n(), self.n()),
                found: o.shape(),
            });
        }
        Self::new(o * &self.entries)
    }

    pub(crate) fn check_same_shape(&self, other: &DMatrix<f64>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

/// A tangent vector at a [`FullRankMatrix`]. The tangent space is all of `M(n,m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMatrix {
    entries: DMatrix<f64>,
    base: FullRankMatrix,
}

impl TangentMatrix {
    pub fn new(base: FullRankMatrix, entries: DMatrix<f64>) -> Result<Self> {
        base.check_same_shape(&entries)?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { entries, base })
    }

    pub fn zero(base: FullRankMatrix) -> Self {
        let (n, m) = base.shape();
        Self {
            entries: DMatrix::zeros(n, m),
            base,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn base(&self) -> &FullRankMatrix {
        &self.base
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: &self.entries * c,
            base: self.base.clone(),
        }
    }

    /// Riemannian norm `‖ζ‖_A`.
    pub fn norm(&self) -> f64 {
        sqrt(metric_inner(self.base.entries(), &self.entries, &self.entries).unwrap_or(f64::NAN))
    }
}

/// `tr(U G⁻¹ Vᵀ)·√det G` with `G = XᵀX`, or `None` when `G` is not positive definite.
pub(crate) fn metric_inner(x: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Option<f64> {
    let chol = x.tr_mul(x).cholesky()?;
    let l = chol.l();
    let det_sqrt: f64 = l.diagonal().iter().product();
    let yu = l.solve_lower_triangular(&u.transpose())?;
    let yv = l.solve_lower_triangular(&v.transpose())?;
    Some(yu.dot(&yv) * det_sqrt)
}

/// Squared Riemannian norm of `d` at the point `x`.
pub(crate) fn metric_norm_sq(x: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<f64> {
    metric_inner(x, d, d)
}

/// The fiber inner product `⟨U,V⟩_A = tr(U(AᵀA)⁻¹Vᵀ)·√det(AᵀA)`.
pub fn inner_product(a: &FullRankMatrix, u: &TangentMatrix, v: &TangentMatrix) -> Result<f64> {
    if u.base != *a || v.base != *a {
        return Err(Error::BaseMismatch);
    }
    metric_inner(a.entries(), u.entries(), v.entries()).ok_or(Error::RankDeficient {
        sigma_min: 0.0,
        threshold: 0.0,
    })
}

/// Moore–Penrose inverse `A⁺ = (AᵀA)⁻¹Aᵀ` of a full-rank matrix (`m×n`).
pub fn moore_penrose(a: &FullRankMatrix) -> DMatrix<f64> {
    pinv_raw(a.entries()).expect("full-rank matrices have an invertible Gram matrix")
}

pub(crate) fn pinv_raw(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = a.tr_mul(a).cholesky()?;
    Some(chol.solve(&a.transpose()))
}

/// Everything needed to evaluate the closed-form geodesic from `base` with
/// initial velocity `ζ`.
#[derive(Debug, Clone)]
pub struct GeodesicData {
    pub base: FullRankMatrix,
    /// `Z = ζA⁺`.
    pub z: DMatrix<f64>,
    /// Traceless part `Z − (tr Z/m)·AA⁺`.
    pub z0: DMatrix<f64>,
    pub tr_z: f64,
    /// Skew generator `Z₀ − Z₀ᵀ`.
    pub omega: DMatrix<f64>,
    /// `tr(Z₀Z₀ᵀ)`.
    pub q: f64,
    /// First time at which the geodesic leaves `M₊(n,m)`; `+∞` if never.
    pub blowup: f64,
    /// Orthogonal projector `AA⁺` onto the column space of the base.
    pub projector: DMatrix<f64>,
}

pub fn geodesic_data(a: &FullRankMatrix, zeta: &TangentMatrix) -> Result<GeodesicData> {
    if zeta.base != *a {
        return Err(Error::BaseMismatch);
    }
    geodesic_data_raw(a, zeta.entries())
}

pub(crate) fn geodesic_data_raw(a: &FullRankMatrix, zeta: &DMatrix<f64>) -> Result<GeodesicData> {
    a.check_same_shape(zeta)?;
    let m = a.m() as f64;
    let pinv = moore_penrose(a);
    let projector = a.entries() * &pinv;
    let z = zeta * &pinv;
    let tr_z = z.trace();
    let mut z0 = &z - &projector * (tr_z / m);
    let mut q = z0.norm_squared();
    if q <= TRACELESS_ZERO * z.norm_squared() {
        q = 0.0;
        z0.fill(0.0);
    }
    let omega = linalg::skew_part(&(&z0 - z0.transpose()));
    let blowup = if q == 0.0 && tr_z < 0.0 {
        2.0 / abs(tr_z)
    } else {
        f64::INFINITY
    };
    Ok(GeodesicData {
        base: a.clone(),
        z,
        z0,
        tr_z,
        omega,
        q,
        blowup,
        projector,
    })
}

impl GeodesicData {
    /// `(f(t), s(t))`; see [`fs_coefficients`].
    pub fn fs(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime { t });
        }
        if t >= self.blowup {
            return Err(Error::BlowUp {
                t,
                blowup: self.blowup,
            });
        }
        let m = self.base.m() as f64;
        let lin = 1.0 + 0.5 * self.tr_z * t;
        let f = 0.25 * m * self.q * t * t + lin * lin;
        let s = if self.q > 0.0 {
            // atan2 keeps s continuous once 2 + tr(Z)·t turns negative: it adds
            // the π branch the principal arctan would drop.
            let c = sqrt(m * self.q);
            2.0 / c * libm::atan2(c * t, 2.0 + self.tr_z * t)
        } else {
            t / lin
        };
        Ok((f, s))
    }

    /// Geodesic point at time `t` as a raw matrix, without the rank check.
    pub(crate) fn point_raw(&self, t: f64) -> Result<DMatrix<f64>> {
        let (f, s) = self.fs(t)?;
        let m = self.base.m() as f64;
        let rotation = expm(&(&self.omega * s));
        let stretch = expm(&(self.z0.transpose() * &self.projector * s));
        Ok(rotation * stretch * self.base.entries() * powf(f, 1.0 / m))
    }

    /// Geodesic point at time `t`.
    pub fn point(&self, t: f64) -> Result<FullRankMatrix> {
        FullRankMatrix::new(self.point_raw(t)?)
    }
}

/// The coefficient functions `f(t)` and `s(t) = ∫₀ᵗ dσ/f(σ)` of the geodesic.
pub fn fs_coefficients(g: &GeodesicData, t: f64) -> Result<(f64, f64)> {
    g.fs(t)
}

/// Riemannian exponential `exp_A(tζ)` in closed form.
pub fn exp_map(a: &FullRankMatrix, zeta: &TangentMatrix, t: f64) -> Result<FullRankMatrix> {
    geodesic_data(a, zeta)?.point(t)
}

/// `det(AᵀA)^{1/4}` for any matrix, computed as `√(∏σᵢ)`.
pub fn volume_quarter(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    sqrt(linalg::singular_values(a).product::<f64>())
}

/// `(2/√m)·|det(AᵀA)^{1/4} − det(BᵀB)^{1/4}|`, a lower bound for the length
/// of every path in `M₊(n,m)` joining `A` and `B`.
pub fn lower_bound(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let m = a.ncols() as f64;
    Ok(2.0 / sqrt(m) * abs(volume_quarter(a) - volume_quarter(b)))
}

/// A piecewise-linear curve `lin(A₀, …, A_k)` in `M₊(n,m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlPath {
    controls: Vec<DMatrix<f64>>,
}

impl PlPath {
    /// Every control matrix must be full rank; at least one segment.
    pub fn new(controls: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::with_tol(controls, DEFAULT_RANK_TOL)
    }

    pub fn with_tol(controls: Vec<DMatrix<f64>>, rank_tol: f64) -> Result<Self> {
        if controls.len() < 2 {
            return Err(Error::PathTooShort);
        }
        let shape = controls[0].shape();
        for c in &controls {
            if c.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    found: c.shape(),
                });
            }
            FullRankMatrix::with_tol(c.clone(), rank_tol)?;
        }
        Ok(Self { controls })
    }

    pub(crate) fn from_controls_unchecked(controls: Vec<DMatrix<f64>>) -> Self {
        Self { controls }
    }

    /// `k` equal Euclidean segments on the straight line from `a` to `b`.
    pub fn straight(a: &FullRankMatrix, b: &FullRankMatrix, k: usize) -> Result<Self> {
        a.check_same_shape(b.entries())?;
        let k = k.max(1);
        let controls = (0..=k)
            .map(|i| {
                let u = i as f64 / k as f64;
                a.entries() * (1.0 - u) + b.entries() * u
            })
            .collect();
        Self::new(controls)
    }

    pub fn controls(&self) -> &[DMatrix<f64>] {
        &self.controls
    }

    pub fn segments(&self) -> usize {
        self.controls.len() - 1
    }

    pub fn start(&self) -> &DMatrix<f64> {
        &self.controls[0]
    }

    pub fn end(&self) -> &DMatrix<f64> {
        &self.controls[self.controls.len() - 1]
    }

    /// Inserts the Euclidean midpoint of every segment, doubling `k`.
    pub fn refined(&self) -> Self {
        let mut controls = Vec::with_capacity(2 * self.controls.len() - 1);
        for w in self.controls.windows(2) {
            controls.push(w[0].clone());
            controls.push((&w[0] + &w[1]) * 0.5);
        }
        controls.push(self.end().clone());
        Self { controls }
    }

    /// The same curve traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut controls = self.controls.clone();
        controls.reverse();
        Self { controls }
    }
}

/// In-place Cholesky of the `m×m` row-major `g` into `l`, then `inv ← g⁻¹`.
/// Returns `√det g`, or `None` unless `g` is numerically positive definite.
fn small_chol_inverse(g: &[f64], m: usize, l: &mut [f64], inv: &mut [f64]) -> Option<f64> {
    let mut det_sqrt = 1.0;
    for j in 0..m {
        let mut diag = g[j * m + j];
        for k in 0..j {
            diag -= l[j * m + k] * l[j * m + k];
        }
        if !(diag > 0.0) {
            return None;
        }
        let ljj = sqrt(diag);
        det_sqrt *= ljj;
        l[j * m + j] = ljj;
        for i in j + 1..m {
            let mut v = g[i * m + j];
            for k in 0..j {
                v -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = v / ljj;
            l[j * m + i] = 0.0;
        }
    }
    // Columns of g⁻¹ by forward/back substitution.
    for c in 0..m {
        for i in 0..m {
            let mut v = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                v -= l[i * m + k] * inv[k * m + c];
            }
            inv[i * m + c] = v / l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut v = inv[i * m + c];
            for k in i + 1..m {
                v -= l[k * m + i] * inv[k * m + c];
            }
            inv[i * m + c] = v / l[i * m + i];
        }
    }
    Some(det_sqrt)
}

/// Squared speed along a straight segment `X(u) = a + u·d`, evaluated through
/// the Gram polynomial `G(u) = G₀ + u·G₁ + u²·G₂` so that each node costs
/// only `m×m` work.
pub(crate) struct SegmentGram<'a> {
    a: &'a DMatrix<f64>,
    d: DMatrix<f64>,
    m: usize,
    g0: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    g: Vec<f64>,
    l: Vec<f64>,
    inv: Vec<f64>,
    zero: bool,
}

fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    x.transpose().as_slice().to_vec()
}

impl<'a> SegmentGram<'a> {
    pub(crate) fn new(a: &'a DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let d = b - a;
        let m = a.ncols();
        let ad = a.tr_mul(&d);
        let zero = d.iter().all(|v| *v == 0.0);
        SegmentGram {
            a,
            m,
            g0: row_major(&a.tr_mul(a)),
            g1: row_major(&(&ad + ad.transpose())),
            g2: row_major(&d.tr_mul(&d)),
            d,
            g: vec![0.0; m * m],
            l: vec![0.0; m * m],
            inv: vec![0.0; m * m],
            zero,
        }
    }

    /// `F(u) = tr(G⁻¹G₂)·√det G` and `√det G`; `G⁻¹` is left in `self.inv`.
    /// `None` if `X(u)` fails the rank test.
    fn node(&mut self, u: f64, rank_tol: f64) -> Option<(f64, f64)> {
        let m = self.m;
        for i in 0..m * m {
            self.g[i] = self.g0[i] + u * (self.g1[i] + u * self.g2[i]);
        }
        let det_sqrt = small_chol_inverse(&self.g, m, &mut self.l, &mut self.inv)?;
        let trace_g: f64 = (0..m).map(|i| self.g[i * m + i]).sum();
        let inv_fro = sqrt(self.inv.iter().map(|v| v * v).sum::<f64>());
        // λ_min(G) ≥ 1/‖G⁻¹‖_F and λ_max(G) ≤ tr G certify the rank test
        // cheaply; near the roundoff floor of G fall back to the exact SVD.
        let lambda_lo = 1.0 / inv_fro;
        let certified = lambda_lo > 1e-10 * trace_g
            && sqrt(lambda_lo) > linalg::rank_threshold(sqrt(trace_g), rank_tol);
        if !certified {
            let x = self.a + &self.d * u;
            if !linalg::is_full_rank(&x, rank_tol) {
                return None;
            }
        }
        let trace: f64 = self.inv.iter().zip(&self.g2).map(|(p, q)| p * q).sum();
        let value = trace * det_sqrt;
        value.is_finite().then_some((value.max(0.0), det_sqrt))
    }

    /// Gauss–Legendre length; also rank-checks the midpoint.
    pub(crate) fn length(&mut self, rank_tol: f64) -> Option<f64> {
        if self.zero {
            return Some(0.0);
        }
        self.node(0.5, rank_tol)?;
        let mut total = 0.0;
        for (u, w) in gauss_legendre_16() {
            total += w * sqrt(self.node(u, rank_tol)?.0);
        }
        Some(total)
    }

    /// Length with its gradient with respect to the start (`at_end = false`)
    /// or the end matrix of the segment.
    pub(crate) fn length_with_gradient(&mut self, rank_tol: f64, at_end: bool) -> Option<(f64, DMatrix<f64>)> {
        let (n, m) = self.a.shape();
        if self.zero {
            return Some((0.0, DMatrix::zeros(n, m)));
        }
        self.node(0.5, rank_tol)?;
        // With F = tr(G⁻¹G₂)√det G:  ∂F/∂X = X·M,  M = √det G (T·G⁻¹ − 2G⁻¹G₂G⁻¹),
        // and ∂F/∂D = D·N,  N = 2√det G·G⁻¹. Collect the m×m weights on a and
        // d first; ∂/∂a = Σ c[(1−u)X·M − D·N], ∂/∂b = Σ c[u·X·M + D·N].
        let mut on_a = vec![0.0; m * m];
        let mut on_d = vec![0.0; m * m];
        let mut ig2 = vec![0.0; m * m];
        let mut total = 0.0;
        for (u, w) in gauss_legendre_16() {
            let (f, det_sqrt) = self.node(u, rank_tol)?;
            if !(f > 0.0) {
                continue;
            }
            let speed = sqrt(f);
            total += w * speed;
            let inv = &self.inv;
            for i in 0..m {
                for j in 0..m {
                    ig2[i * m + j] = (0..m).map(|k| inv[i * m + k] * self.g2[k * m + j]).sum();
                }
            }
            let trace = f / det_sqrt;
            let c = w / (2.0 * speed);
            let (wx, wn) = if at_end { (c * u, c) } else { (c * (1.0 - u), -c) };
            for i in 0..m {
                for j in 0..m {
                    let quad: f64 = (0..m).map(|k| ig2[i * m + k] * inv[k * m + j]).sum();
                    let mm = (trace * inv[i * m + j] - 2.0 * quad) * det_sqrt;
                    on_a[i * m + j] += wx * mm;
                    on_d[i * m + j] += wx * u * mm + wn * 2.0 * det_sqrt * inv[i * m + j];
                }
            }
        }
        let on_a = DMatrix::from_row_slice(m, m, &on_a);
        let on_d = DMatrix::from_row_slice(m, m, &on_d);
        Some((total, self.a * on_a + &self.d * on_d))
    }
}

/// Length of `lin(a, b)` by 16-node Gauss–Legendre quadrature; `None` if a
/// node (or the midpoint) leaves `M₊(n,m)`.
pub(crate) fn segment_length(a: &DMatrix<f64>, b: &DMatrix<f64>, rank_tol: f64) -> Option<f64> {
    SegmentGram::new(a, b).length(rank_tol)
}

fn segment_lengths(p: &PlPath, rank_tol: f64) -> Result<Vec<f64>> {
    p.controls
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            segment_length(&w[0], &w[1], rank_tol).ok_or_else(|| {
                Error::at(
                    i,
                    Error::RankDeficient {
                        sigma_min: 0.0,
                        threshold: rank_tol,
                    },
                )
            })
        })
        .collect()
}

/// Riemannian length of a piecewise-linear path.
pub fn path_length(p: &PlPath) -> Result<f64> {
    path_length_with_tol(p, DEFAULT_RANK_TOL)
}

pub fn path_length_with_tol(p: &PlPath, rank_tol: f64) -> Result<f64> {
    Ok(segment_lengths(p, rank_tol)?.iter().sum())
}

/// Energy `∫₀¹‖ċ‖² dt` of the path parametrized proportionally to arc length:
/// segment `i` is traversed at speed `L` during a time slot of `Lᵢ/L`.
pub fn path_energy(p: &PlPath) -> Result<f64> {
    path_energy_with_tol(p, DEFAULT_RANK_TOL)
}

pub fn path_energy_with_tol(p: &PlPath, rank_tol: f64) -> Result<f64> {
    let lengths = segment_lengths(p, rank_tol)?;
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(lengths
        .iter()
        .filter(|l| **l > 0.0)
        .map(|l| {
            let slot = l / total;
            let speed = l / slot;
            speed * speed * slot
        })
        .sum())
}

/// Euclidean distance in `M(n,m)`; used for endpoint residuals.
pub fn endpoint_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    fro(&(a - b))
}
