//! Direct, indirect and total impacts of each covariate.
//!
//! For covariate `k` the impact matrix is `S_k = β_k (I − ρW)⁻¹`. The direct
//! effect averages its diagonal, the indirect effect averages the row sums of
//! its off-diagonal part, and the total is their sum. Effects live on the
//! linear-predictor scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GsarError, Result};
use crate::spalg::SpatialOperator;
use crate::weights::SpatialWeights;

/// Largest `n` for which [`impact_matrix`] materializes `S_k`.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub name: String,
    pub direct: f64,
    pub indirect: f64,
    pub total: f64,
}

/// Dense `β_k (I − ρW)⁻¹`.
pub fn impact_matrix(beta_k: f64, rho: f64, w: &SpatialWeights) -> Result<DMatrix<f64>> {
    let n = w.n();
    if n > DENSE_LIMIT {
        return Err(GsarError::TooLarge { n, limit: DENSE_LIMIT });
    }
    let op = SpatialOperator::new(w, rho)?;
    Ok(op.solve_a(&DMatrix::identity(n, n))? * beta_k)
}

/// Averages of `A⁻¹`: `(tr(A⁻¹)/n, 1ᵀA⁻¹1/n)`.
fn inverse_averages(op: &SpatialOperator<'_>) -> (f64, f64) {
    let n = op.n();
    let trace = op.inverse_diag().sum();
    let grand = op.solve(&DVector::from_element(n, 1.0)).sum();
    (trace / n as f64, grand / n as f64)
}

/// Effects for every coefficient except `intercept` (if given).
///
/// Uses `n + 1` solves against one factorization; `S_k` is never formed.
pub fn summarize_effects(
    beta: &DVector<f64>,
    rho: f64,
    w: &SpatialWeights,
    names: &[String],
    intercept: Option<usize>,
) -> Result<Vec<Effect>> {
    if names.len() != beta.len() {
        return Err(GsarError::DimensionMismatch(format!(
            "{} names for {} coefficients",
            names.len(),
            beta.len()
        )));
    }
    let op = SpatialOperator::new(w, rho)?;
    let (diag_avg, all_avg) = inverse_averages(&op);
    let off_avg = all_avg - diag_avg;
    Ok(beta
        .iter()
        .zip(names)
        .enumerate()
        .filter(|(k, _)| Some(*k) != intercept)
        .map(|(_, (&b, name))| {
            let direct = b * diag_avg;
            let indirect = b * off_avg;
            Effect {
                name: name.clone(),
                direct,
                indirect,
                total: direct + indirect,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::build_rook_grid;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|k| format!("x{k}")).collect()
    }

    #[test]
    fn zero_rho_is_identity_impact() {
        let w = build_rook_grid(3, 3).unwrap();
        assert_eq!(impact_matrix(2.5, 0.0, &w).unwrap(), DMatrix::identity(9, 9) * 2.5);
        let beta = DVector::from_vec(vec![1.0, -0.7]);
        let eff = summarize_effects(&beta, 0.0, &w, &names(2), None).unwrap();
        for (e, b) in eff.iter().zip(beta.iter()) {
            assert!((e.direct - b).abs() < 1e-15);
            assert!(e.indirect.abs() < 1e-15);
            assert!((e.total - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exchange_impact_closed_form() {
        let w = build_rook_grid(1, 2).unwrap();
        let s = impact_matrix(1.0, 0.5, &w).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert!((s - want).amax() < 1e-15);
    }

    #[test]
    fn totals_follow_row_sum_identity() {
        let w = build_rook_grid(5, 6).unwrap();
        let beta = DVector::from_vec(vec![0.5, -1.25, 3.0]);
        for rho in [-0.7, -0.2, 0.35, 0.8] {
            let eff = summarize_effects(&beta, rho, &w, &names(3), Some(0)).unwrap();
            assert_eq!(eff.len(), 2);
            assert_eq!(eff[0].name, "x1");
            for (e, b) in eff.iter().zip(beta.iter().skip(1)) {
                assert_eq!(e.total, e.direct + e.indirect);
                assert!((e.total - b / (1.0 - rho)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn matches_dense_averages() {
        let w = build_rook_grid(3, 3).unwrap();
        let s = impact_matrix(2.0, 0.4, &w).unwrap();
        let direct = s.trace() / 9.0;
        let indirect = (s.sum() - s.trace()) / 9.0;
        let eff = summarize_effects(&DVector::from_vec(vec![2.0]), 0.4, &w, &names(1), None).unwrap();
        assert!((eff[0].direct - direct).abs() < 1e-10);
        assert!((eff[0].indirect - indirect).abs() < 1e-10);
    }

    #[test]
    fn direct_effect_keeps_coefficient_sign() {
        let w = build_rook_grid(4, 7).unwrap();
        for rho in [-0.95, -0.5, 0.5, 0.95] {
            let beta = DVector::from_vec(vec![-0.3, 0.8]);
            let eff = summarize_effects(&beta, rho, &w, &names(2), None).unwrap();
            assert!(eff[0].direct < 0.0 && eff[1].direct > 0.0);
        }
    }

    #[test]
    fn rejects_name_mismatch() {
        let w = build_rook_grid(2, 2).unwrap();
        assert!(summarize_effects(&DVector::from_vec(vec![1.0]), 0.1, &w, &names(2), None).is_err());
    }
}
