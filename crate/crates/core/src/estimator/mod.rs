//! Alternating quasi-likelihood / GEE estimation of `(beta, rho, phi)`.
//!
//! 1. `beta` starts from an ordinary GLM fit (`rho = 0`).
//! 2. With `beta` fixed, the quasi-likelihood of `mu = g⁻¹(A⁻¹Xβ)` is
//!    maximized over `rho` on a bounded interval.
//! 3. With `rho` fixed, `beta` is updated by Fisher-scoring steps of the GEE
//!    whose working covariance is `D^{1/2}(AᵀA)⁻¹D^{1/2}`.
//! 4. Steps 2–3 repeat until `rho` moves less than `eps_rho`.
//!
//! `phi` stays at one during the alternation and is estimated once at the
//! end, followed by the sandwich covariance of `beta` and the variance of
//! `rho`.

mod gee;
mod glm;
mod profile;
mod variance;

pub use gee::{update_beta, BetaUpdate};
pub use glm::{fit_glm, GlmFit};
pub use profile::{maximize_rho, profile_ql, profile_ql_at};
pub use variance::{curvature_variance, dispersion, sandwich_vcov, var_rho, Sandwich, VarRhoMethod};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GsarError, Result};
use crate::family::{FamilyId, FamilySpec, Observation};
use crate::spalg::SpatialOperator;
use crate::weights::SpatialWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub eps_beta: f64,
    pub eps_rho: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rho_bounds: (f64, f64),
    /// Skip the `rho` search and hold `rho` at this value.
    pub rho_fixed: Option<f64>,
    /// Use the analytic curvature for the Poisson `Var(rho)` instead of the
    /// numerical second difference.
    pub poisson_closed_form_var: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eps_beta: 1e-6,
            eps_rho: 1e-6,
            max_outer: 50,
            max_inner: 50,
            rho_bounds: (-1.0 + 1e-6, 1.0 - 1e-6),
            rho_fixed: None,
            poisson_closed_form_var: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rho_bounds;
        if !(self.eps_beta > 0.0 && self.eps_rho > 0.0) {
            return Err(GsarError::InvalidInput("tolerances must be positive".into()));
        }
        if !(-1.0 < lo && lo < hi && hi < 1.0) {
            return Err(GsarError::InvalidInput(format!(
                "rho bounds ({lo}, {hi}) must lie strictly inside (-1, 1)"
            )));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(GsarError::InvalidInput("iteration limits must be at least 1".into()));
        }
        if let Some(r) = self.rho_fixed {
            if !(r > -1.0 && r < 1.0) {
                return Err(GsarError::InvalidInput(format!("fixed rho {r} outside (-1, 1)")));
            }
        }
        Ok(())
    }
}

/// Response, trial counts and design matrix of one data set.
///
/// For binomial data `y` holds success proportions and `trials` the number
/// of trials; for every other family `trials` is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub y: DVector<f64>,
    pub trials: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl FitData {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Self {
        let trials = DVector::from_element(y.len(), 1.0);
        Self { y, trials, x }
    }

    pub fn with_trials(y: DVector<f64>, trials: DVector<f64>, x: DMatrix<f64>) -> Self {
        Self { y, trials, x }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation {
            y: self.y[i],
            trials: self.trials[i],
            index: i,
        }
    }

    /// Checks shapes against `W` and each response against the family.
    pub fn validate(&self, w: &SpatialWeights, spec: &FamilySpec) -> Result<()> {
        let n = self.n();
        if self.x.nrows() != n || self.trials.len() != n {
            return Err(GsarError::DimensionMismatch(format!(
                "y has {n} rows, X has {}, trials has {}",
                self.x.nrows(),
                self.trials.len()
            )));
        }
        if w.n() != n {
            return Err(GsarError::DimensionMismatch(format!(
                "weights are {0}x{0} but the data have {n} rows",
                w.n()
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(GsarError::Validation("design matrix contains non-finite values".into()));
        }
        if spec.family() != FamilyId::Binomial && self.trials.iter().any(|&t| t != 1.0) {
            return Err(GsarError::Validation("trials are only meaningful for the binomial family".into()));
        }
        (0..n).try_for_each(|i| spec.validate_observation(self.observation(i)))
    }
}

/// One alternation of the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterStep {
    /// `rho` the step started from, with `beta` solved at it.
    pub rho_start: f64,
    /// Maximizer of the profile at that `beta`.
    pub rho: f64,
    /// Profile value at `rho_start`.
    pub ql_before: f64,
    /// Profile value at `rho`, same `beta`.
    pub ql_after: f64,
    /// Start of the next step: `rho`, or a secant extrapolation.
    pub next_rho: f64,
    pub extrapolated: bool,
    /// GEE iterations at `next_rho`.
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: FamilySpec,
    pub beta_hat: DVector<f64>,
    pub rho_hat: f64,
    pub phi_hat: f64,
    /// `J⁻¹BJ⁻¹`.
    pub vcov_beta: DMatrix<f64>,
    /// Model-based `J⁻¹`.
    pub vcov_model: DMatrix<f64>,
    /// `None` when `rho` was fixed or its curvature is unusable (see `warnings`).
    pub var_rho: Option<f64>,
    pub var_rho_method: Option<VarRhoMethod>,
    pub eta_hat: DVector<f64>,
    pub mu_hat: DVector<f64>,
    pub pearson_residuals: DVector<f64>,
    pub n_outer: usize,
    pub n_inner_total: usize,
    pub converged: bool,
    pub ql_at_optimum: f64,
    pub trace: Vec<OuterStep>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.vcov_beta.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Fits a GSAR model.
///
/// Non-convergence is reported through `FitResult::converged`, not as an
/// error.
pub fn fit(data: &FitData, w: &SpatialWeights, spec: FamilySpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    data.validate(w, &spec)?;
    if data.n() <= data.p() + 1 {
        return Err(GsarError::InvalidInput(format!(
            "need n > p + 1 observations (n = {}, p = {})",
            data.n(),
            data.p()
        )));
    }

    let glm = fit_glm(data, spec)?;
    let mut beta = glm.beta;
    let mut trace = Vec::new();
    let mut n_inner_total = 0;
    let mut converged = false;
    let phi = 1.0;

    let rho = match cfg.rho_fixed {
        Some(r) => {
            let op = SpatialOperator::new(w, r)?;
            let upd = update_beta(&op, &beta, data, spec, cfg)?;
            let ql = profile_ql_at(&op, &upd.beta, data, spec, phi)?;
            n_inner_total += upd.iterations;
            converged = upd.converged;
            beta = upd.beta;
            trace.push(OuterStep {
                rho_start: r,
                rho: r,
                ql_before: ql,
                ql_after: ql,
                next_rho: r,
                extrapolated: false,
                inner_iterations: upd.iterations,
                inner_converged: upd.converged,
            });
            r
        }
        None => {
            // One alternation maps rho to T(rho) = argmax_r QL(r, beta(rho)),
            // with beta(rho) the GEE solution at rho, and stops once
            // |T(rho) - rho| <= eps_rho. T is often a slow contraction
            // because the intercept and rho trade off, so the next start is
            // a safeguarded secant step on T(rho) - rho when one is available.
            let mut rho = 0.0;
            let mut secant = SecantGuard::default();
            let mut polish_steps = 0;
            for _ in 0..cfg.max_outer {
                let ql_before = profile_ql(rho, &beta, data, w, spec, phi)?;
                let mut rho_new = maximize_rho(&beta, data, w, spec, phi, cfg)?;
                let mut ql_after = profile_ql(rho_new, &beta, data, w, spec, phi)?;
                if ql_after < ql_before {
                    // the bounded search only guarantees a local optimum
                    rho_new = rho;
                    ql_after = ql_before;
                }
                let gap = rho_new - rho;
                let settled = gap.abs() <= cfg.eps_rho;
                let exact = gap.abs() <= FIXED_POINT_TOL;

                let jump = if exact {
                    None
                } else {
                    secant.propose(rho, gap, cfg.rho_bounds).and_then(|x| {
                        let op = SpatialOperator::new(w, x).ok()?;
                        let upd = update_beta(&op, &beta, data, spec, cfg).ok()?;
                        upd.converged.then_some((x, upd))
                    })
                };
                let extrapolated = jump.is_some();
                let (rho_next, upd) = match jump {
                    Some(j) => j,
                    None => {
                        let op = SpatialOperator::new(w, rho_new)?;
                        (rho_new, update_beta(&op, &beta, data, spec, cfg)?)
                    }
                };
                n_inner_total += upd.iterations;
                beta = upd.beta;
                trace.push(OuterStep {
                    rho_start: rho,
                    rho: rho_new,
                    ql_before,
                    ql_after,
                    next_rho: rho_next,
                    extrapolated,
                    inner_iterations: upd.iterations,
                    inner_converged: upd.converged,
                });
                rho = rho_next;
                if settled && upd.converged {
                    converged = true;
                    // a few more secant steps put (rho, beta) on the fixed point
                    polish_steps += 1;
                    if exact || polish_steps > MAX_POLISH_STEPS {
                        break;
                    }
                } else if converged {
                    // polishing left the converged region; stop where we are
                    break;
                }
            }
            rho
        }
    };

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("estimation did not converge within {} outer iterations", trace.len()));
    }

    let op = SpatialOperator::new(w, rho)?;
    let eta_hat = op.eta(&data.x, &beta);
    let mu_hat = eta_hat.map(|e| spec.inv_link(e));
    let ata_diag = op.ata_inv_diag();
    let phi_hat = dispersion_with(data, &mu_hat, &ata_diag, spec)?;
    let pearson_residuals = DVector::from_iterator(
        data.n(),
        (0..data.n()).map(|i| {
            let ve = spec.variance_unchecked(mu_hat[i]) / data.trials[i];
            (data.y[i] - mu_hat[i]) / (ata_diag[i] * ve).sqrt()
        }),
    );
    let sandwich = sandwich_vcov(&op, &beta, data, spec)?;
    let ql_at_optimum = profile_ql_at(&op, &beta, data, spec, phi)?;

    let (var_rho_value, var_rho_method) = if cfg.rho_fixed.is_some() {
        (None, None)
    } else {
        let method = VarRhoMethod::default_for(spec, cfg.poisson_closed_form_var);
        match var_rho(&op, &beta, data, spec, cfg.rho_bounds, method) {
            Ok(v) => (Some(v), Some(method)),
            Err(e) => {
                warnings.push(format!("variance of rho unavailable: {e}"));
                (None, None)
            }
        }
    };

    Ok(FitResult {
        spec,
        beta_hat: beta,
        rho_hat: rho,
        phi_hat,
        vcov_beta: sandwich.vcov,
        vcov_model: sandwich.model,
        var_rho: var_rho_value,
        var_rho_method,
        eta_hat,
        mu_hat,
        pearson_residuals,
        n_outer: trace.len(),
        n_inner_total,
        converged,
        ql_at_optimum,
        trace,
        warnings,
    })
}

/// `|T(rho) - rho|` below which `rho` is taken as the exact fixed point.
const FIXED_POINT_TOL: f64 = 1e-10;
/// Outer steps allowed after `|T(rho) - rho| <= eps_rho` to approach it.
const MAX_POLISH_STEPS: usize = 3;
/// Largest multiple of `T(rho) - rho` taken by the bracket search.
const MAX_STRETCH: f64 = 64.0;

/// Secant steps toward the root of `g(rho) = T(rho) - rho`, kept inside the
/// sign-change bracket once one is known. Without a bracket a step must go
/// past the plain step `rho + g`; when the secant does not, the step
/// `rho + k g` is tried with `k` doubling until `g` changes sign.
#[derive(Debug, Default)]
struct SecantGuard {
    prev: Option<(f64, f64)>,
    /// Latest point with `g > 0`, i.e. the root lies above it.
    rising: Option<f64>,
    /// Latest point with `g < 0`.
    falling: Option<f64>,
    /// Current multiplier of the bracket search.
    stretch: f64,
}

impl SecantGuard {
    fn propose(&mut self, rho: f64, g: f64, bounds: (f64, f64)) -> Option<f64> {
        if g > 0.0 {
            self.rising = Some(rho);
        } else if g < 0.0 {
            self.falling = Some(rho);
        }
        let (r0, g0) = self.prev.replace((rho, g))?;
        let x = rho - g * (rho - r0) / (g - g0);
        match (self.rising, self.falling) {
            (Some(a), Some(b)) => {
                let (lo, hi) = (a.min(b), a.max(b));
                Some(if x > lo && x < hi { x } else { 0.5 * (lo + hi) })
            }
            _ => {
                let inside = |r: f64| r > bounds.0 && r < bounds.1;
                if x.is_finite() && (x - (rho + g)) * g > 0.0 && inside(x) {
                    self.stretch = 1.0;
                    return Some(x);
                }
                self.stretch = (2.0 * self.stretch).clamp(2.0, MAX_STRETCH);
                let y = rho + self.stretch * g;
                inside(y).then_some(y)
            }
        }
    }
}

fn dispersion_with(data: &FitData, mu_hat: &DVector<f64>, ata_diag: &DVector<f64>, spec: FamilySpec) -> Result<f64> {
    variance::dispersion_from_diag(data, mu_hat, ata_diag, spec)
}
