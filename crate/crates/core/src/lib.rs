//! Riemannian geometry of full-rank `n×m` matrices and of sampled fields of
//! them.
//!
//! The crate is `no_std` (it needs `alloc`). Modules, bottom up:
//!
//! - [`fiber`]: closed-form metric, geodesics and path lengths on `M₊(n,m)`.
//! - [`solver`]: geodesic distances by shooting and by PL path shortening,
//!   plus distances in the completion `M₊(n,m) ∪ {0}`.
//! - [`quotient`]: the projection `A ↦ AᵀA` onto SPD matrices, SO(n)
//!   alignment and the induced distance on `Sym₊(m)`.
//! - [`field`]: weighted sample sets and the L² distance between fields.
//! - [`oracles`]: seeded instance generators and independent reference
//!   computations used by the test suites.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fiber;
pub mod field;
pub mod linalg;
pub mod oracles;
pub mod quotient;
pub mod solver;

pub use error::{Error, Result};
pub use fiber::{
    exp_map, fs_coefficients, geodesic_data, inner_product, lower_bound, moore_penrose,
    path_energy, path_length, volume_quarter, FullRankMatrix, GeodesicData, PlPath, TangentMatrix,
};
pub use field::{
    canonicalize, completion_field_distance, ebin_field_distance, field_align, field_distance,
    field_interpolate, field_volume, metric_field, CompletionField, FieldGeodesic, MetricField,
    OneFormField, RotationField, SampledManifold,
};
pub use nalgebra::DMatrix;
pub use quotient::{align, ebin_inner, polar_lift, project, sym_distance, Rotation, SpdMatrix};
pub use solver::{
    completion_distance, dist_to_singular, distance, log_map, pl_shorten, CompletionPoint,
    DistanceResult, Method, SolverOptions,
};
