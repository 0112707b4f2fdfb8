//! Dense linear-algebra helpers shared by the geometry modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` and is `no_std`
//! compatible; transcendental functions go through `libm`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Default relative rank tolerance: full rank iff `σ_min > 1e-9 · max(σ_max, 1)`.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Eigenvalue drift below zero tolerated when taking symmetric square roots.
const SQRT_NEG_DRIFT: f64 = 1e-12;

/// Padé degree used by [`expm`].
const PADE_ORDER: usize = 6;

/// Scaling threshold on the 1-norm before the Padé approximant is applied.
const PADE_THETA: f64 = 0.5;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

pub(crate) fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Frobenius norm.
pub fn fro(a: &DMatrix<f64>) -> f64 {
    sqrt(a.iter().map(|v| v * v).sum::<f64>())
}

/// Maximum absolute column sum.
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| abs(*v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Singular values of `a`, in no particular order.
pub fn singular_values(a: &DMatrix<f64>) -> impl Iterator<Item = f64> {
    let sv = a.clone().svd(false, false).singular_values;
    sv.data.as_vec().clone().into_iter()
}

/// `(σ_min, σ_max)` of `a`.
pub fn sigma_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    singular_values(a).fold((f64::INFINITY, 0.0), |(lo, hi), s| (lo.min(s), hi.max(s)))
}

/// Threshold a smallest singular value must exceed for `a` to count as full rank.
pub fn rank_threshold(sigma_max: f64, tol: f64) -> f64 {
    tol * sigma_max.max(1.0)
}

/// Full column rank test with the scale-aware tolerance.
pub fn is_full_rank(a: &DMatrix<f64>, tol: f64) -> bool {
    if a.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let (lo, hi) = sigma_extremes(a);
    lo > rank_threshold(hi, tol)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = norm1(a);
    let mut squarings = 0u32;
    if norm > PADE_THETA {
        squarings = libm::ceil(libm::log2(norm / PADE_THETA)) as u32;
    }
    let scaled = a * libm::ldexp(1.0, -(squarings as i32));

    // c_k = (2p-k)! p! / ((2p)! k! (p-k)!) built by recurrence.
    let mut num = DMatrix::<f64>::identity(n, n);
    let mut den = DMatrix::<f64>::identity(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut coeff = 1.0;
    let p = PADE_ORDER as f64;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        coeff *= (p - kf + 1.0) / (kf * (2.0 * p - kf + 1.0));
        power = &power * &scaled;
        num += &power * coeff;
        if k % 2 == 0 {
            den += &power * coeff;
        } else {
            den -= &power * coeff;
        }
    }
    let mut result = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Skew part `(a − aᵀ)/2`.
pub fn skew_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a - a.transpose()) * 0.5
}

/// Principal square root of a symmetric positive semidefinite matrix via its
/// eigendecomposition. Eigenvalues in `[-1e-12·scale, 0)` are clamped to zero;
/// anything more negative yields `None`.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |acc, v| acc.max(abs(*v)));
    let mut root = eig.eigenvalues.clone();
    for v in root.iter_mut() {
        if *v < -SQRT_NEG_DRIFT * scale {
            return None;
        }
        *v = sqrt(v.max(0.0));
    }
    let q = &eig.eigenvectors;
    Some(q * DMatrix::from_diagonal(&root) * q.transpose())
}

/// Inverse of the principal square root of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut root = eig.eigenvalues.clone();
    for v in root.iter_mut() {
        if !(*v > 0.0) {
            return None;
        }
        *v = 1.0 / sqrt(*v);
    }
    let q = &eig.eigenvectors;
    Some(q * DMatrix::from_diagonal(&root) * q.transpose())
}

/// 16-node Gauss–Legendre rule on `[0, 1]`: `(node, weight)` pairs.
pub fn gauss_legendre_16() -> impl Iterator<Item = (f64, f64)> {
    GL16_NODES
        .iter()
        .zip(GL16_WEIGHTS.iter())
        .flat_map(|(&x, &w)| [(0.5 - 0.5 * x, 0.5 * w), (0.5 + 0.5 * x, 0.5 * w)])
}

// Positive nodes and weights of the 16-point rule on [-1, 1].
const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_095,
];
