//! Dispersion, sandwich covariance of `beta`, and variance of `rho`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::profile::profile_ql_at;
use super::FitData;
use crate::error::{GsarError, Result};
use crate::family::{FamilyId, FamilySpec};
use crate::spalg::SpatialOperator;

/// `phi = (n - p - 1)⁻¹ Σ (y - mu)² / [(AᵀA)⁻¹_ii V(mu_i) / m_i]`.
pub fn dispersion(data: &FitData, mu_hat: &DVector<f64>, op: &SpatialOperator<'_>, spec: FamilySpec) -> Result<f64> {
    dispersion_from_diag(data, mu_hat, &op.ata_inv_diag(), spec)
}

pub(crate) fn dispersion_from_diag(
    data: &FitData,
    mu_hat: &DVector<f64>,
    ata_diag: &DVector<f64>,
    spec: FamilySpec,
) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if n <= p + 1 {
        return Err(GsarError::InvalidInput(format!(
            "dispersion needs n > p + 1 (n = {n}, p = {p})"
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        let v = spec.variance(mu_hat[i])? / data.trials[i];
        let r = data.y[i] - mu_hat[i];
        sum += r * r / (ata_diag[i] * v);
    }
    Ok(sum / (n - p - 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sandwich {
    /// Bread `J = X̃ᵀ D^{1/2} (AᵀA)⁻¹ D^{1/2} X̃`.
    pub j: DMatrix<f64>,
    /// Meat `B = s sᵀ`, `s = X̃ᵀ N D^{-1/2} (y − mu)`.
    pub b: DMatrix<f64>,
    /// `J⁻¹ B J⁻¹`, symmetrized.
    pub vcov: DMatrix<f64>,
    /// `J⁻¹`.
    pub model: DMatrix<f64>,
}

/// Sandwich covariance of `beta` at the operator's `rho`.
///
/// The meat is the rank-one outer product of the scaled score vector, so the
/// sandwich is singular whenever `p > 1`; `model` carries the bread-only
/// alternative.
pub fn sandwich_vcov(
    op: &SpatialOperator<'_>,
    beta: &DVector<f64>,
    data: &FitData,
    spec: FamilySpec,
) -> Result<Sandwich> {
    let (n, p) = (data.n(), data.p());
    let x_tilde = op.solve_a(&data.x)?;
    let eta = &x_tilde * beta;

    let mut sqrt_v = DVector::zeros(n);
    let mut scaled_resid = DVector::zeros(n);
    for i in 0..n {
        let mu = spec.inv_link(eta[i]);
        let ve = spec.variance_unchecked(mu) / data.trials[i];
        sqrt_v[i] = ve.sqrt();
        scaled_resid[i] = spec.d_inv_link(eta[i]) * (data.y[i] - mu) / sqrt_v[i];
    }

    // (AᵀA)⁻¹ = A⁻¹A⁻ᵀ, so J = GᵀG with G = A⁻ᵀ D^{1/2} X̃
    let mut dx = x_tilde.clone();
    for mut col in dx.column_iter_mut() {
        col.component_mul_assign(&sqrt_v);
    }
    let g = op.solve_at(&dx)?;
    let j = g.transpose() * &g;
    let s = x_tilde.transpose() * &scaled_resid;
    let b = &s * s.transpose();

    let model = j
        .clone()
        .cholesky()
        .ok_or_else(|| GsarError::Singular("sandwich bread J".into()))?
        .inverse();
    let raw = &model * &b * &model;
    let vcov = (&raw + raw.transpose()) * 0.5;
    debug_assert_eq!(vcov.shape(), (p, p));
    Ok(Sandwich { j, b, vcov, model })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRhoMethod {
    ClosedForm,
    NumericCurvature,
}

impl VarRhoMethod {
    /// Normal uses its closed form; Poisson only on request; everything
    /// else the numerical curvature.
    pub fn default_for(spec: FamilySpec, poisson_closed_form: bool) -> Self {
        match spec.family() {
            FamilyId::Normal => VarRhoMethod::ClosedForm,
            FamilyId::Poisson if poisson_closed_form => VarRhoMethod::ClosedForm,
            _ => VarRhoMethod::NumericCurvature,
        }
    }
}

/// Inverse of the negated central second difference of `f` at `rho`, with
/// step `h = 1e-4 max(1, |rho|)`.
pub fn curvature_variance<F>(f: F, rho: f64, bounds: (f64, f64)) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let h = 1e-4 * rho.abs().max(1.0);
    if rho - h <= bounds.0 || rho + h >= bounds.1 {
        return Err(GsarError::BoundaryRho { rho });
    }
    let curvature = -(f(rho + h)? - 2.0 * f(rho)? + f(rho - h)?) / (h * h);
    if !(curvature > 0.0) || !curvature.is_finite() {
        return Err(GsarError::NonPositiveCurvature { curvature });
    }
    Ok(1.0 / curvature)
}

/// Variance of `rho_hat` at the operator's `rho`.
pub fn var_rho(
    op: &SpatialOperator<'_>,
    beta: &DVector<f64>,
    data: &FitData,
    spec: FamilySpec,
    bounds: (f64, f64),
    method: VarRhoMethod,
) -> Result<f64> {
    let rho = op.rho();
    let h = 1e-4 * rho.abs().max(1.0);
    if rho - h <= bounds.0 || rho + h >= bounds.1 {
        return Err(GsarError::BoundaryRho { rho });
    }
    let info = match (method, spec.family()) {
        (VarRhoMethod::ClosedForm, FamilyId::Normal) => normal_information(op, beta, data),
        (VarRhoMethod::ClosedForm, FamilyId::Poisson) => poisson_information(op, beta, data),
        (VarRhoMethod::ClosedForm, family) => {
            return Err(GsarError::InvalidInput(format!(
                "no closed-form variance of rho for the {family} family"
            )))
        }
        (VarRhoMethod::NumericCurvature, _) => {
            let w = op.weights();
            return curvature_variance(
                |r| profile_ql_at(&SpatialOperator::new(w, r)?, beta, data, spec, 1.0),
                rho,
                bounds,
            );
        }
    };
    if !(info > 0.0) || !info.is_finite() {
        return Err(GsarError::NonPositiveCurvature { curvature: info });
    }
    Ok(1.0 / info)
}

/// `tr(WA⁻¹)² + tr((WA⁻¹)ᵀ(WA⁻¹)) + ‖WA⁻¹Xβ‖²`, where the first term is the
/// squared trace.
fn normal_information(op: &SpatialOperator<'_>, beta: &DVector<f64>, data: &FitData) -> f64 {
    let w = op.weights();
    let n = op.n();
    let (mut trace, mut frob) = (0.0, 0.0);
    let mut e = DVector::zeros(n);
    for k in 0..n {
        e.fill(0.0);
        e[k] = 1.0;
        let col = w.mul_vec(op.solve(&e).as_slice());
        trace += col[k];
        frob += col.iter().map(|v| v * v).sum::<f64>();
    }
    let lag = w.mul_vec(op.eta(&data.x, beta).as_slice());
    let quad: f64 = lag.iter().map(|v| v * v).sum();
    trace * trace + frob + quad
}

/// Observed Poisson information for `rho`,
/// `Σ mu_i (dη_i/dρ)² − Σ (y_i − mu_i) d²η_i/dρ²`, assembled from the
/// derivative identities of `eta(rho) = A⁻¹Xβ`.
fn poisson_information(op: &SpatialOperator<'_>, beta: &DVector<f64>, data: &FitData) -> f64 {
    let eta = op.eta(&data.x, beta);
    let d1 = op.deta_drho(&data.x, beta);
    let d2 = op.d2eta_drho2(&data.x, beta);
    (0..data.n())
        .map(|i| {
            let mu = eta[i].min(crate::family::ETA_MAX_LOG).exp();
            mu * d1[i] * d1[i] - (data.y[i] - mu) * d2[i]
        })
        .sum()
}
