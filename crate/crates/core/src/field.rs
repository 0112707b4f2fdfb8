//! Fields of full-rank matrices sampled on a weighted point set.
//!
//! The manifold is only a quadrature: identifiers and positive weights. The
//! field distance decouples pointwise,
//! `d(α, β)² = Σ_k w_k·d(α_k, β_k)²`, and so do interpolation, alignment and
//! projection. Sums are always taken in sample order.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fiber::{exp_map, volume_quarter, FullRankMatrix};
use crate::linalg::{fro, sqrt};
use crate::quotient::{align, project_full, sym_distance, Rotation, SpdMatrix};
use crate::solver::{completion_distance, distance, log_map, CompletionPoint, DistanceResult, SolverOptions};

/// Sample identifiers with positive quadrature weights, for `n×m` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledManifold {
    ids: Vec<String>,
    weights: Vec<f64>,
    n: usize,
    m: usize,
}

impl SampledManifold {
    /// Weights must be finite and positive, identifiers unique and `n > m ≥ 1`.
    /// The total weight is arbitrary.
    pub fn new(ids: Vec<String>, weights: Vec<f64>, n: usize, m: usize) -> Result<Self> {
        if m == 0 || n <= m {
            return Err(Error::UnsupportedShape { n, m });
        }
        if ids.is_empty() {
            return Err(Error::InvalidManifold { reason: "no sample points" });
        }
        if ids.len() != weights.len() {
            return Err(Error::InvalidManifold {
                reason: "identifier and weight counts differ",
            });
        }
        if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::at(k, Error::InvalidManifold { reason: "weight must be positive" }));
        }
        for (k, id) in ids.iter().enumerate() {
            if ids[..k].contains(id) {
                return Err(Error::at(k, Error::InvalidManifold { reason: "duplicate identifier" }));
            }
        }
        Ok(SampledManifold { ids, weights, n, m })
    }

    /// Uniform `rows × cols` grid on the flat torus, equal weights summing to 1.
    /// Identifiers are `"i,j"`.
    pub fn flat_torus(rows: usize, cols: usize, n: usize, m: usize) -> Result<Self> {
        let count = rows * cols;
        let ids = (0..rows).flat_map(|i| (0..cols).map(move |j| format!("{i},{j}"))).collect();
        Self::new(ids, alloc::vec![1.0 / count as f64; count], n, m)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Position of a sample identifier.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// `√(Σ_k w_k·x_k²)`, summed in sample order.
    fn weighted_l2(&self, values: impl Iterator<Item = f64>) -> f64 {
        sqrt(self.weights.iter().zip(values).map(|(w, d)| w * d * d).sum())
    }
}

fn same_manifold(a: &Arc<SampledManifold>, b: &Arc<SampledManifold>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::ManifoldMismatch)
    }
}

fn check_count<T>(manifold: &SampledManifold, values: &[T]) -> Result<()> {
    if values.len() != manifold.len() {
        return Err(Error::InvalidManifold {
            reason: "value count differs from sample count",
        });
    }
    Ok(())
}

fn check_shape(index: usize, expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::at(index, Error::ShapeMismatch { expected, found }));
    }
    Ok(())
}

/// One full-rank `n×m` matrix per sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormField {
    manifold: Arc<SampledManifold>,
    values: Vec<FullRankMatrix>,
}

impl OneFormField {
    pub fn new(manifold: Arc<SampledManifold>, values: Vec<FullRankMatrix>) -> Result<Self> {
        check_count(&manifold, &values)?;
        for (k, v) in values.iter().enumerate() {
            check_shape(k, (manifold.n, manifold.m), v.shape())?;
        }
        Ok(OneFormField { manifold, values })
    }

    /// The same matrix at every sample point.
    pub fn constant(manifold: Arc<SampledManifold>, value: FullRankMatrix) -> Result<Self> {
        let values = alloc::vec![value; manifold.len()];
        Self::new(manifold, values)
    }

    pub fn manifold(&self) -> &Arc<SampledManifold> {
        &self.manifold
    }

    pub fn values(&self) -> &[FullRankMatrix] {
        &self.values
    }

    pub fn into_values(self) -> Vec<FullRankMatrix> {
        self.values
    }

    pub fn volume(&self) -> f64 {
        weighted_volume(&self.manifold, self.values.iter().map(|v| v.entries()))
    }
}

/// One completion point (full rank, or the collapsed singular class) per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionField {
    manifold: Arc<SampledManifold>,
    values: Vec<CompletionPoint>,
}

impl CompletionField {
    pub fn new(manifold: Arc<SampledManifold>, values: Vec<CompletionPoint>) -> Result<Self> {
        check_count(&manifold, &values)?;
        for (k, v) in values.iter().enumerate() {
            check_shape(k, (manifold.n, manifold.m), v.matrix().shape())?;
        }
        let field = CompletionField { manifold, values };
        if !field.volume().is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(field)
    }

    pub fn manifold(&self) -> &Arc<SampledManifold> {
        &self.manifold
    }

    pub fn values(&self) -> &[CompletionPoint] {
        &self.values
    }

    pub fn volume(&self) -> f64 {
        weighted_volume(&self.manifold, self.values.iter().map(|v| v.matrix()))
    }
}

impl From<OneFormField> for CompletionField {
    fn from(field: OneFormField) -> Self {
        CompletionField {
            manifold: field.manifold,
            values: field.values.into_iter().map(CompletionPoint::from).collect(),
        }
    }
}

/// One SPD `m×m` matrix per sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    manifold: Arc<SampledManifold>,
    values: Vec<SpdMatrix>,
}

impl MetricField {
    pub fn new(manifold: Arc<SampledManifold>, values: Vec<SpdMatrix>) -> Result<Self> {
        check_count(&manifold, &values)?;
        for (k, v) in values.iter().enumerate() {
            check_shape(k, (manifold.m, manifold.m), v.entries().shape())?;
        }
        Ok(MetricField { manifold, values })
    }

    pub fn manifold(&self) -> &Arc<SampledManifold> {
        &self.manifold
    }

    pub fn values(&self) -> &[SpdMatrix] {
        &self.values
    }
}

/// One rotation in `SO(n)` per sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationField {
    manifold: Arc<SampledManifold>,
    values: Vec<Rotation>,
}

impl RotationField {
    pub fn new(manifold: Arc<SampledManifold>, values: Vec<Rotation>) -> Result<Self> {
        check_count(&manifold, &values)?;
        for (k, v) in values.iter().enumerate() {
            check_shape(k, (manifold.n, manifold.n), v.entries().shape())?;
        }
        Ok(RotationField { manifold, values })
    }

    pub fn manifold(&self) -> &Arc<SampledManifold> {
        &self.manifold
    }

    pub fn values(&self) -> &[Rotation] {
        &self.values
    }

    /// `(Ō·α)_k = Ō_k·α_k`.
    pub fn apply(&self, alpha: &OneFormField) -> Result<OneFormField> {
        same_manifold(&self.manifold, &alpha.manifold)?;
        let values = self
            .values
            .iter()
            .zip(&alpha.values)
            .enumerate()
            .map(|(k, (o, a))| o.apply(a).map_err(|e| Error::at(k, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(OneFormField {
            manifold: alpha.manifold.clone(),
            values,
        })
    }
}

fn weighted_volume<'a>(manifold: &SampledManifold, values: impl Iterator<Item = &'a DMatrix<f64>>) -> f64 {
    manifold
        .weights
        .iter()
        .zip(values)
        .map(|(w, v)| {
            let q = volume_quarter(v);
            w * q * q
        })
        .sum()
}

/// `Σ_k w_k·√det(α_kᵀα_k)`.
pub fn field_volume(alpha: &OneFormField) -> f64 {
    alpha.volume()
}

/// Field distance together with the pointwise solver results.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDistance {
    pub value: f64,
    pub pointwise: Vec<DistanceResult>,
}

/// `√(Σ_k w_k·distance(α_k, β_k)²)`.
pub fn field_distance(alpha: &OneFormField, beta: &OneFormField, opts: &SolverOptions) -> Result<f64> {
    field_distance_detailed(alpha, beta, opts).map(|d| d.value)
}

pub fn field_distance_detailed(alpha: &OneFormField, beta: &OneFormField, opts: &SolverOptions) -> Result<FieldDistance> {
    same_manifold(&alpha.manifold, &beta.manifold)?;
    let pointwise: Vec<DistanceResult> = alpha
        .values
        .iter()
        .zip(&beta.values)
        .map(|(a, b)| distance(a, b, opts))
        .collect();
    let value = alpha.manifold.weighted_l2(pointwise.iter().map(|d| d.value));
    Ok(FieldDistance { value, pointwise })
}

/// The completion variant: `completion_distance` at every sample.
pub fn completion_field_distance(p: &CompletionField, q: &CompletionField, opts: &SolverOptions) -> Result<f64> {
    same_manifold(&p.manifold, &q.manifold)?;
    let pointwise = p
        .values
        .iter()
        .zip(&q.values)
        .map(|(a, b)| completion_distance(a, b, opts));
    Ok(p.manifold.weighted_l2(pointwise))
}

/// Pointwise geodesics between two fields, ready to be sampled at any time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGeodesic {
    start: OneFormField,
    velocities: Vec<crate::fiber::TangentMatrix>,
}

impl FieldGeodesic {
    /// Solves `log_map(α_k, β_k)` at every sample; the first failure is
    /// reported with its sample index.
    pub fn new(alpha: &OneFormField, beta: &OneFormField, opts: &SolverOptions) -> Result<Self> {
        same_manifold(&alpha.manifold, &beta.manifold)?;
        let velocities = alpha
            .values
            .iter()
            .zip(&beta.values)
            .enumerate()
            .map(|(k, (a, b))| log_map(a, b, opts).map_err(|e| Error::at(k, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldGeodesic {
            start: alpha.clone(),
            velocities,
        })
    }

    /// The field at time `t ∈ [0, 1]`.
    pub fn at(&self, t: f64) -> Result<OneFormField> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange { t });
        }
        let values = self
            .start
            .values
            .iter()
            .zip(&self.velocities)
            .enumerate()
            .map(|(k, (a, z))| exp_map(a, z, t).map_err(|e| Error::at(k, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(OneFormField {
            manifold: self.start.manifold.clone(),
            values,
        })
    }

    /// Constant field speed `√(Σ_k w_k·‖ζ_k‖²)`, which is also the length.
    pub fn speed(&self) -> f64 {
        self.start.manifold.weighted_l2(self.velocities.iter().map(|z| z.norm()))
    }

    pub fn velocities(&self) -> &[crate::fiber::TangentMatrix] {
        &self.velocities
    }
}

/// `exp_map(α_k, log_map(α_k, β_k), t)` at every sample.
pub fn field_interpolate(alpha: &OneFormField, beta: &OneFormField, t: f64, opts: &SolverOptions) -> Result<OneFormField> {
    FieldGeodesic::new(alpha, beta, opts)?.at(t)
}

/// Pointwise `αᵀα`.
pub fn metric_field(alpha: &OneFormField) -> MetricField {
    let values = alpha
        .values
        .iter()
        .map(|a| project_full(a).expect("full-rank values have SPD Gram matrices"))
        .collect();
    MetricField {
        manifold: alpha.manifold.clone(),
        values,
    }
}

/// `√(Σ_k w_k·sym_distance(g_k, g′_k)²)` with the sample manifold's `n`.
pub fn ebin_field_distance(g: &MetricField, h: &MetricField, opts: &SolverOptions) -> Result<f64> {
    same_manifold(&g.manifold, &h.manifold)?;
    let n = g.manifold.n;
    let pointwise = g
        .values
        .iter()
        .zip(&h.values)
        .enumerate()
        .map(|(k, (a, b))| sym_distance(a, b, n, opts).map(|d| d.value).map_err(|e| Error::at(k, e)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(g.manifold.weighted_l2(pointwise.into_iter()))
}

/// Pointwise [`align`]: `Ō_k·β_k = α_k`. Every sample whose Gram matrices
/// differ beyond `tol` is listed in the error.
pub fn field_align(alpha: &OneFormField, beta: &OneFormField, tol: f64) -> Result<RotationField> {
    same_manifold(&alpha.manifold, &beta.manifold)?;
    let mut values = Vec::with_capacity(alpha.values.len());
    let mut bad = Vec::new();
    for (k, (a, b)) in alpha.values.iter().zip(&beta.values).enumerate() {
        match align(a, b, tol) {
            Ok(o) => values.push(o),
            Err(Error::GramMismatch { .. }) => bad.push(k),
            Err(e) => return Err(Error::at(k, e)),
        }
    }
    if !bad.is_empty() {
        return Err(Error::FieldGramMismatch { points: bad });
    }
    Ok(RotationField {
        manifold: alpha.manifold.clone(),
        values,
    })
}

/// Maps raw samples into the completion: values failing the rank test become
/// the zero matrix. Non-finite entries are rejected with their sample index.
pub fn canonicalize(raw: Vec<DMatrix<f64>>, manifold: Arc<SampledManifold>, rank_tol: f64) -> Result<CompletionField> {
    check_count(&manifold, &raw)?;
    let values = raw
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            check_shape(k, (manifold.n, manifold.m), v.shape())?;
            CompletionPoint::with_tol(v, rank_tol).map_err(|e| Error::at(k, e))
        })
        .collect::<Result<Vec<_>>>()?;
    CompletionField::new(manifold, values)
}

/// Largest pointwise `‖α_k − Ō_k·β_k‖_F`.
pub fn alignment_residual(alpha: &OneFormField, rotations: &RotationField, beta: &OneFormField) -> Result<f64> {
    let rotated = rotations.apply(beta)?;
    same_manifold(&alpha.manifold, &rotated.manifold)?;
    Ok(alpha
        .values
        .iter()
        .zip(&rotated.values)
        .map(|(a, b)| fro(&(a.entries() - b.entries())))
        .fold(0.0, f64::max))
}
