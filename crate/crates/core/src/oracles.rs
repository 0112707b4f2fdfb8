//! Seeded instance generation and reference computations that do not share
//! code paths with the solvers they are used to check.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`. Its full state is `(seed, word_pos)`, exposed through
//! [`GeneratorState`], so an acceptance input can be reproduced from the seed
//! alone or resumed mid-stream.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fiber::{geodesic_data, metric_norm_sq, FullRankMatrix, TangentMatrix};
use crate::linalg::sqrt;

/// Serializable generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorState {
    pub seed: u64,
    pub word_pos: u128,
}

/// Random full-rank instances with singular values confined to `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct InstanceGenerator {
    seed: u64,
    n: usize,
    m: usize,
    lo: f64,
    hi: f64,
    rng: ChaCha8Rng,
}

impl InstanceGenerator {
    pub fn new(seed: u64, n: usize, m: usize, lo: f64, hi: f64) -> Result<Self> {
        if m == 0 || n <= m {
            return Err(Error::UnsupportedShape { n, m });
        }
        assert!(0.0 < lo && lo <= hi, "singular value range must satisfy 0 < lo <= hi");
        Ok(Self {
            seed,
            n,
            m,
            lo,
            hi,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn state(&self) -> GeneratorState {
        GeneratorState {
            seed: self.seed,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(&mut self, state: GeneratorState) {
        self.seed = state.seed;
        self.rng = ChaCha8Rng::seed_from_u64(state.seed);
        self.rng.set_word_pos(state.word_pos);
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// Changes the matrix shape, keeping the stream position.
    pub fn set_shape(&mut self, n: usize, m: usize) -> Result<()> {
        if m == 0 || n <= m {
            return Err(Error::UnsupportedShape { n, m });
        }
        self.n = n;
        self.m = m;
        Ok(())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn index(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    pub fn gaussian(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.rng.sample(StandardNormal))
    }

    /// Haar-distributed element of `O(k)` (sign-corrected QR of a Gaussian).
    fn orthogonal(&mut self, k: usize) -> DMatrix<f64> {
        let qr = self.gaussian(k, k).qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..k {
            if r[(j, j)] < 0.0 {
                for i in 0..k {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        q
    }

    /// Haar-distributed rotation in `SO(k)`.
    pub fn rotation(&mut self, k: usize) -> DMatrix<f64> {
        let mut q = self.orthogonal(k);
        if q.determinant() < 0.0 {
            for i in 0..k {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
        q
    }

    /// Singular values drawn uniformly from `[lo, hi]`.
    fn spectrum(&mut self) -> Vec<f64> {
        let (lo, hi) = (self.lo, self.hi);
        (0..self.m).map(|_| self.uniform(lo, hi)).collect()
    }
}

/// `U·diag(σ)·Vᵀ` with Haar-random `U` (first `m` columns of an `O(n)` draw),
/// Haar-random `V` and `σ` uniform in the generator's range.
pub fn random_full_rank(gen: &mut InstanceGenerator) -> FullRankMatrix {
    let (n, m) = (gen.n, gen.m);
    let u = gen.orthogonal(n).columns(0, m).into_owned();
    let v = gen.orthogonal(m);
    let sigma = gen.spectrum();
    let diag = DMatrix::from_fn(m, m, |i, j| if i == j { sigma[i] } else { 0.0 });
    FullRankMatrix::new(u * diag * v.transpose()).expect("controlled spectrum is full rank")
}

/// Gaussian tangent vector at `base`, rescaled to Riemannian norm `norm`.
pub fn random_tangent(gen: &mut InstanceGenerator, base: &FullRankMatrix, norm: f64) -> TangentMatrix {
    let (n, m) = base.shape();
    let raw = gen.gaussian(n, m);
    let current = sqrt(metric_norm_sq(base.entries(), &raw).unwrap_or(1.0));
    TangentMatrix::new(base.clone(), raw * (norm / current)).expect("shape matches base")
}

/// Central-difference speeds `‖α(t+h) − α(t−h)‖_{α(t)} / 2h` along the
/// geodesic from `a` with velocity `ζ` at `steps` equispaced times in
/// `[0, T)`, `T = min(0.9·blowup, 2)`. Negative times are reached through the
/// reversed geodesic `exp(A, −ζ, ·)`.
pub fn fd_speed_profile(a: &FullRankMatrix, zeta: &TangentMatrix, steps: usize, h: f64) -> Result<Vec<f64>> {
    let forward = geodesic_data(a, zeta)?;
    let backward = geodesic_data(a, &zeta.scaled(-1.0))?;
    let horizon = (0.9 * forward.blowup).min(2.0);
    let at = |t: f64| -> Result<DMatrix<f64>> {
        if t >= 0.0 {
            forward.point_raw(t)
        } else {
            backward.point_raw(-t)
        }
    };
    (0..steps)
        .map(|i| {
            let t = horizon * i as f64 / steps as f64;
            let diff = (at(t + h)? - at(t - h)?) / (2.0 * h);
            let x = at(t)?;
            Ok(sqrt(metric_norm_sq(&x, &diff).ok_or(Error::RankDeficient {
                sigma_min: 0.0,
                threshold: 0.0,
            })?))
        })
        .collect()
}

/// Length of the ray `r ↦ r·[I_m; 0]` between column scales `r0` and `r1`,
/// i.e. `∫ √m · r^{(m−2)/2} dr`, by tanh-sinh quadrature (robust to the
/// integrable endpoint singularity at `r = 0` when `m = 1`).
pub fn radial_integral_oracle(r0: f64, r1: f64, m: usize) -> f64 {
    if r0 == r1 {
        return 0.0;
    }
    let (lo, hi) = if r0 < r1 { (r0, r1) } else { (r1, r0) };
    let mf = m as f64;
    let element = |r: f64| sqrt(mf) * libm::pow(r, (mf - 2.0) / 2.0);
    tanh_sinh(element, lo, hi)
}

/// Double-exponential quadrature on `[a, b]`; abscissae near the endpoints
/// are formed from their complements to avoid cancellation.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut h = 1.0;
    // Sum over the nodes start, start + stride, ... of one half-line (both
    // mirrored abscissae), scaled by the step h.
    let add_nodes = |h: f64, start: f64, stride: f64| -> f64 {
        let mut sum = 0.0;
        let mut t = start;
        loop {
            let u = 0.5 * PI * libm::sinh(t);
            let cu = libm::cosh(u);
            let w = 0.5 * PI * libm::cosh(t) / (cu * cu);
            let comp = 1.0 / (libm::exp(u) * cu);
            if w < 1e-300 || comp == 0.0 {
                break;
            }
            let left = a + half * comp;
            let right = b - half * comp;
            let mut contrib = 0.0;
            if left > a {
                contrib += f(left);
            }
            if right < b {
                contrib += f(right);
            }
            sum += w * contrib;
            t += stride;
        }
        sum * half * h
    };
    let mut estimate = h * half * 0.5 * PI * f(mid) + add_nodes(h, h, h);
    for _ in 0..12 {
        let prev = estimate;
        h *= 0.5;
        estimate = 0.5 * prev + add_nodes(h, h, 2.0 * h);
        if libm::fabs(estimate - prev) <= 1e-15 * libm::fabs(estimate) {
            break;
        }
    }
    estimate
}

/// Closed-form distance for `m = 1`. There the metric is `|dA|²/|A|`, which
/// in `R = 2√|A|` is the metric cone over a sphere of radius 1/2:
/// `d² = R₁² + R₂² − 2R₁R₂·cos(θ/2)` with `θ` the angle between `a` and `b`.
pub fn column_cone_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.ncols(), 1);
    let (na, nb) = (a.norm(), b.norm());
    let cos = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    let theta = libm::acos(cos);
    let (ra, rb) = (2.0 * sqrt(na), 2.0 * sqrt(nb));
    sqrt((ra * ra + rb * rb - 2.0 * ra * rb * libm::cos(0.5 * theta)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use std::collections::HashSet;

    #[test]
    fn generator_is_deterministic_and_resumable() {
        let mut g1 = InstanceGenerator::new(7, 4, 2, 0.5, 2.0).unwrap();
        let mut g2 = InstanceGenerator::new(7, 4, 2, 0.5, 2.0).unwrap();
        assert_eq!(random_full_rank(&mut g1), random_full_rank(&mut g2));
        let state = g1.state();
        let next = random_full_rank(&mut g1);
        let mut g3 = InstanceGenerator::new(0, 4, 2, 0.5, 2.0).unwrap();
        g3.restore(state);
        assert_eq!(random_full_rank(&mut g3), next);
    }

    #[test]
    fn spectrum_is_controlled() {
        let mut g = InstanceGenerator::new(3, 5, 3, 0.5, 2.0).unwrap();
        for _ in 0..200 {
            let a = random_full_rank(&mut g);
            let (lo, hi) = linalg::sigma_extremes(a.entries());
            assert!((0.5 - 1e-12..=2.0 + 1e-12).contains(&lo));
            assert!(hi <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_matrices() {
        let mut seen = HashSet::new();
        for seed in 0..1000u64 {
            let mut g = InstanceGenerator::new(seed, 3, 2, 0.5, 2.0).unwrap();
            let a = random_full_rank(&mut g);
            let key: std::vec::Vec<u64> = a.entries().iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(key), "collision at seed {seed}");
        }
    }

    #[test]
    fn rotations_are_special_orthogonal() {
        let mut g = InstanceGenerator::new(11, 3, 1, 1.0, 1.0).unwrap();
        for k in 2..6 {
            let o = g.rotation(k);
            assert!(linalg::fro(&(o.transpose() * &o - DMatrix::identity(k, k))) < 1e-12);
            assert!((o.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_oracle_values() {
        let expected = 2.0 * (2f64.sqrt() - 1.0);
        assert!((radial_integral_oracle(1.0, 2.0, 1) - expected).abs() < 1e-13);
        assert!((radial_integral_oracle(0.0, 1.0, 1) - 2.0).abs() < 1e-12);
        assert_eq!(radial_integral_oracle(0.7, 0.7, 3), 0.0);
        // m = 2: ∫ √2 dr.
        assert!((radial_integral_oracle(0.5, 3.0, 2) - 2.5 * 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn speed_profile_examples() {
        let a = FullRankMatrix::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let zero = TangentMatrix::zero(a.clone());
        assert!(fd_speed_profile(&a, &zero, 5, 1e-5).unwrap().iter().all(|s| *s == 0.0));

        let rot = TangentMatrix::new(a.clone(), DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        for s in fd_speed_profile(&a, &rot, 10, 1e-5).unwrap() {
            assert!((s - 1.0).abs() < 1e-4, "{s}");
        }
        let fast = fd_speed_profile(&a, &rot.scaled(3.0), 10, 1e-5).unwrap();
        assert!(fast.iter().all(|s| (s - 3.0).abs() < 3e-4));
    }

    #[test]
    fn cone_distance_matches_worked_values() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.75, 1.0]);
        assert!((column_cone_distance(&a, &b) - 1.0).abs() < 1e-14);
        let c = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        assert!((column_cone_distance(&a, &c) - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-14);
    }
}
