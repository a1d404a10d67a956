use nalgebra::{DMatrix, DVector};

use super::FitData;
use crate::error::{GsarError, Result};
use crate::family::FamilySpec;

const GLM_TOL: f64 = 1e-10;
const GLM_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub beta: DVector<f64>,
    pub iterations: usize,
}

/// Column rank of `x` from its singular values.
pub(crate) fn column_rank(x: &DMatrix<f64>) -> usize {
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * x.nrows().max(x.ncols()) as f64;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Ordinary (independent, `rho = 0`) GLM by iteratively reweighted least
/// squares. Binomial observations are weighted by their trial counts.
pub fn fit_glm(data: &FitData, spec: FamilySpec) -> Result<GlmFit> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(GsarError::InvalidInput(format!("need n > p (n = {n}, p = {p})")));
    }
    let rank = column_rank(&data.x);
    if rank < p {
        return Err(GsarError::RankDeficient { rank, p });
    }

    let mut eta = DVector::from_iterator(
        n,
        (0..n).map(|i| spec.link_fn(spec.initial_mu(data.y[i], data.trials[i]))),
    );
    let mut beta: Option<DVector<f64>> = None;
    let mut trace = Vec::new();

    for iter in 1..=GLM_MAX_ITER {
        let mut weights = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mu = spec.inv_link(eta[i]);
            let d = spec.d_inv_link(eta[i]);
            let v = spec.variance_unchecked(mu);
            weights[i] = data.trials[i] * d * d / v;
            z[i] = eta[i] + (data.y[i] - mu) / d;
        }
        let mut xtwx = DMatrix::zeros(p, p);
        let mut xtwz = DVector::zeros(p);
        for i in 0..n {
            let row = data.x.row(i);
            let wi = weights[i];
            for a in 0..p {
                xtwz[a] += wi * row[a] * z[i];
                for b in 0..=a {
                    xtwx[(a, b)] += wi * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let chol = xtwx
            .cholesky()
            .ok_or_else(|| GsarError::Singular("weighted normal equations of the GLM".into()))?;
        let next: DVector<f64> = chol.solve(&xtwz);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(GsarError::Divergence {
                iterations: iter,
                last_change: f64::INFINITY,
                trace,
            });
        }
        eta = &data.x * &next;
        let change = beta.as_ref().map_or(f64::INFINITY, |b| (&next - b).amax());
        trace.push(change);
        beta = Some(next);
        if change <= GLM_TOL {
            return Ok(GlmFit {
                beta: beta.unwrap(),
                iterations: iter,
            });
        }
    }
    Err(GsarError::Divergence {
        iterations: GLM_MAX_ITER,
        last_change: *trace.last().unwrap(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_poisson_is_log_mean() {
        let data = FitData::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), DMatrix::from_element(3, 1, 1.0));
        let fit = fit_glm(&data, FamilySpec::poisson()).unwrap();
        assert!((fit.beta[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn normal_is_least_squares() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_vec(vec![0.1, 1.3, 1.9, 3.2, 3.8, 5.1]);
        let fit = fit_glm(&FitData::new(y.clone(), x.clone()), FamilySpec::normal()).unwrap();
        let ls = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * y;
        assert!((fit.beta - ls).amax() < 1e-12);
    }

    #[test]
    fn intercept_only_binomial_uses_weighted_mean() {
        // successes/trials: 1/2, 0/4, 1/1, 0/1 -> 2/8 = 0.25 pooled
        let y = DVector::from_vec(vec![0.5, 0.0, 1.0, 0.0]);
        let trials = DVector::from_vec(vec![2.0, 4.0, 1.0, 1.0]);
        let data = FitData::with_trials(y, trials, DMatrix::from_element(4, 1, 1.0));
        let fit = fit_glm(&data, FamilySpec::binomial()).unwrap();
        assert!((fit.beta[0] - (1.0f64 / 3.0).ln()).abs() < 1e-10);

        // grid-search oracle on the trial-weighted binomial log-likelihood
        let ll = |b: f64| {
            let mu = 1.0 / (1.0 + (-b).exp());
            2.0 * mu.ln() + 6.0 * (1.0 - mu).ln()
        };
        let best = (0..=40_000)
            .map(|k| -2.0 + 2.0 * k as f64 / 40_000.0)
            .max_by(|a, b| ll(*a).total_cmp(&ll(*b)))
            .unwrap();
        assert!((fit.beta[0] - best).abs() <= 1e-4);
    }

    #[test]
    fn rank_deficiency_is_an_error() {
        let x = DMatrix::from_fn(5, 2, |_, _| 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let err = fit_glm(&FitData::new(y, x), FamilySpec::poisson()).unwrap_err();
        assert!(matches!(err, GsarError::RankDeficient { rank: 1, p: 2 }));
    }

    #[test]
    fn gamma_and_negative_binomial_converge() {
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 4.0 });
        let y = DVector::from_vec(vec![0.7, 1.1, 0.9, 1.8, 2.2, 2.0, 3.5, 3.1]);
        for spec in [FamilySpec::gamma(), FamilySpec::negative_binomial(3.0).unwrap()] {
            let fit = fit_glm(&FitData::new(y.clone(), x.clone()), spec).unwrap();
            assert!(fit.beta[1] > 0.0);
        }
    }
}
