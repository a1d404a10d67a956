use nalgebra::{DMatrix, DVector};

use super::{FitConfig, FitData};
use crate::error::{GsarError, Result};
use crate::family::{FamilySpec, LinkId, ETA_MAX_LOG};
use crate::spalg::SpatialOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaUpdate {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest number of step halvings tried in one scoring iteration.
const MAX_HALVINGS: usize = 30;

/// GEE scoring for `beta` at the `rho` the operator was factored for.
///
/// Each step solves
/// `β ← (X̃ᵀ Σ⁻¹ X̃)⁻¹ X̃ᵀ Σ⁻¹ z` with `X̃ = A⁻¹X`,
/// `z = X̃β + N⁻¹(y − μ)` and `Σ = N⁻¹ D^{1/2}(AᵀA)⁻¹D^{1/2} N⁻¹` the working
/// covariance of `z`, where `D = diag(V(μ)/m)` and `N = diag(dμ/dη)`.
/// Since `Σ⁻¹ = N D^{-1/2} AᵀA D^{-1/2} N`, the step is the least-squares
/// problem `min ‖A S (z − X̃β)‖` with `S = N D^{-1/2}`, which needs only
/// products with `A`. At `rho = 0` this is exactly IRLS.
///
/// A step that would increase the norm of the estimating function
/// `X̃ᵀ S AᵀA D^{-1/2}(y − μ)` is halved until it does not.
pub fn update_beta(
    op: &SpatialOperator<'_>,
    beta0: &DVector<f64>,
    data: &FitData,
    spec: FamilySpec,
    cfg: &FitConfig,
) -> Result<BetaUpdate> {
    let (n, p) = (data.n(), data.p());
    if beta0.len() != p {
        return Err(GsarError::DimensionMismatch(format!("beta has {} entries, X has {p} columns", beta0.len())));
    }
    let x_tilde = op.solve_a(&data.x)?;
    let mut beta = beta0.clone();
    let mut merit = score_norm(op, &x_tilde, &beta, data, spec)
        .ok_or_else(|| GsarError::Singular("GEE starting point gives a non-finite mean".into()))?;

    for iter in 1..=cfg.max_inner {
        let eta = &x_tilde * &beta;
        let mut scale = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mu = spec.inv_link(eta[i]);
            let d = spec.d_inv_link(eta[i]);
            let ve = spec.variance_unchecked(mu) / data.trials[i];
            scale[i] = d / ve.sqrt();
            z[i] = eta[i] + (data.y[i] - mu) / d;
        }

        let mut design = DMatrix::zeros(n, p);
        for (k, col) in x_tilde.column_iter().enumerate() {
            let scaled = col.component_mul(&scale);
            design.set_column(k, &op.apply(&scaled));
        }
        let rhs = op.apply(&z.component_mul(&scale));

        let full = least_squares(design, &rhs)?;
        let step = &full - &beta;
        if step.amax() <= cfg.eps_beta {
            return Ok(BetaUpdate {
                beta: full,
                iterations: iter,
                converged: true,
            });
        }

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let trial = &beta + &step * t;
            if let Some(m) = score_norm(op, &x_tilde, &trial, data, spec) {
                if m <= merit {
                    accepted = Some((trial, m));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, m)) => {
                beta = trial;
                merit = m;
            }
            // no reduction along the scoring direction
            None => {
                return Ok(BetaUpdate {
                    beta,
                    iterations: iter,
                    converged: false,
                })
            }
        }
    }
    Ok(BetaUpdate {
        beta,
        iterations: cfg.max_inner,
        converged: false,
    })
}

/// `‖X̃ᵀ S AᵀA D^{-1/2}(y − μ)‖`, or `None` if the mean leaves the range
/// where it is finite and unclamped.
fn score_norm(
    op: &SpatialOperator<'_>,
    x_tilde: &DMatrix<f64>,
    beta: &DVector<f64>,
    data: &FitData,
    spec: FamilySpec,
) -> Option<f64> {
    let eta = x_tilde * beta;
    let n = data.n();
    let mut resid = DVector::zeros(n);
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let clamped = spec.link() == LinkId::Log && eta[i] >= ETA_MAX_LOG;
        if !eta[i].is_finite() || clamped {
            return None;
        }
        let mu = spec.inv_link(eta[i]);
        let sd = (spec.variance_unchecked(mu) / data.trials[i]).sqrt();
        resid[i] = (data.y[i] - mu) / sd;
        scale[i] = spec.d_inv_link(eta[i]) / sd;
    }
    let weighted = op.apply_transpose(&op.apply(&resid)).component_mul(&scale);
    let norm = (x_tilde.transpose() * weighted).norm();
    norm.is_finite().then_some(norm)
}

/// `argmin ‖M b − r‖` through a thin QR factorization.
fn least_squares(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let p = m.ncols();
    let qr = m.qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().any(|d| !d.is_finite() || d.abs() <= rmax * 1e-13) {
        return Err(GsarError::Singular("weighted GEE normal equations".into()));
    }
    let qtr = qr.q().transpose() * rhs;
    let sol = r
        .solve_upper_triangular(&qtr.rows(0, p).into_owned())
        .ok_or_else(|| GsarError::Singular("triangular GEE factor".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(GsarError::Singular("GEE update produced non-finite coefficients".into()));
    }
    Ok(sol)
}
