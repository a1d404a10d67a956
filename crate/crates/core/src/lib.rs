//! Generalized spatial autoregressive (GSAR) models.
//!
//! The linear predictor of an exponential-family regression carries a
//! spatial lag of itself, `eta = rho W eta + X beta`, so `eta = A⁻¹Xβ` with
//! `A = I - rho W`. Estimation alternates a bounded quasi-likelihood search
//! over `rho` with GEE updates of `beta`; see [`estimator::fit`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod effects;
pub mod error;
pub mod estimator;
pub mod family;
pub mod optimize;
pub mod simkit;
pub mod spalg;
pub mod weights;

pub use error::{GsarError, Result};
pub use estimator::{fit, FitConfig, FitData, FitResult};
pub use family::{FamilyId, FamilySpec, LinkId, Observation};
pub use spalg::SpatialOperator;
pub use weights::{build_rook_grid, SpatialWeights};
