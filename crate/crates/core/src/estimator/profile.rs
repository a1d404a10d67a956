use nalgebra::DVector;

use super::{FitConfig, FitData};
use crate::error::Result;
use crate::family::{FamilyId, FamilySpec};
use crate::optimize::{maximize_bounded, polish_maximum, ScalarOptions};
use crate::spalg::SpatialOperator;
use crate::weights::SpatialWeights;

/// Quasi-likelihood of the data at `mu = g⁻¹(A⁻¹Xβ)` for an already
/// factored operator.
///
/// Normal contributions are divided by `phi_i = phi (AᵀA)⁻¹_ii`.
pub fn profile_ql_at(
    op: &SpatialOperator<'_>,
    beta: &DVector<f64>,
    data: &FitData,
    spec: FamilySpec,
    phi: f64,
) -> Result<f64> {
    let eta = op.eta(&data.x, beta);
    let scale: Option<DVector<f64>> = (spec.family() == FamilyId::Normal).then(|| op.ata_inv_diag() * phi);
    let mut total = 0.0;
    for i in 0..data.n() {
        let mu = spec.inv_link(eta[i]);
        let mut term = spec.ql_kernel(data.observation(i), mu)?;
        if let Some(s) = &scale {
            term /= s[i];
        }
        total += term;
    }
    Ok(total)
}

/// Quasi-likelihood profile in `rho` at fixed `beta`.
pub fn profile_ql(
    rho: f64,
    beta: &DVector<f64>,
    data: &FitData,
    w: &SpatialWeights,
    spec: FamilySpec,
    phi: f64,
) -> Result<f64> {
    let op = SpatialOperator::new(w, rho)?;
    profile_ql_at(&op, beta, data, spec, phi)
}

/// Difference step of the final Newton polish of `rho`.
const POLISH_STEP: f64 = 1e-5;
/// Largest move the polish may make away from the bracketed search result.
const POLISH_RADIUS: f64 = 1e-6;

/// Maximizes [`profile_ql`] over `cfg.rho_bounds`, or returns `cfg.rho_fixed`.
///
/// Brent's search brackets the maximizer to `1e-8`; a short Newton polish on
/// difference quotients then places it on the stationary point.
pub fn maximize_rho(
    beta: &DVector<f64>,
    data: &FitData,
    w: &SpatialWeights,
    spec: FamilySpec,
    phi: f64,
    cfg: &FitConfig,
) -> Result<f64> {
    if let Some(r) = cfg.rho_fixed {
        return Ok(r);
    }
    let (lo, hi) = cfg.rho_bounds;
    let objective = |rho: f64| profile_ql(rho, beta, data, w, spec, phi).unwrap_or(f64::NEG_INFINITY);
    let best = maximize_bounded(objective, lo, hi, ScalarOptions::default())?;
    Ok(polish_maximum(objective, best.x, lo, hi, POLISH_STEP, POLISH_RADIUS))
}
