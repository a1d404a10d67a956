//! Linear algebra around the spatial filter `A = I - rho W`.
//!
//! A [`SpatialOperator`] factors `A` once and then serves every product the
//! estimator needs: `A⁻¹B`, `A⁻ᵀB`, the diagonal of `(AᵀA)⁻¹` and the first
//! two `rho`-derivatives of the linear predictor `eta(rho) = A⁻¹Xβ`. No dense
//! inverse is ever formed.

mod skyline;

use nalgebra::{DMatrix, DVector};

use crate::error::{GsarError, Result};
use crate::weights::SpatialWeights;
use skyline::SkylineLu;

/// Largest admissible `|rho|`.
pub const RHO_LIMIT: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone)]
pub struct SpatialOperator<'w> {
    w: &'w SpatialWeights,
    rho: f64,
    lu: SkylineLu,
}

impl<'w> SpatialOperator<'w> {
    /// Factors `I - rho W`.
    ///
    /// Requires `|rho| < RHO_LIMIT` and row sums of `W` no larger than one,
    /// which together make `A` strictly diagonally dominant.
    pub fn new(w: &'w SpatialWeights, rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho.abs() >= RHO_LIMIT {
            return Err(GsarError::InvalidInput(format!("rho = {rho} outside (-1, 1)")));
        }
        let max_row_sum = w.row_sums().into_iter().fold(0.0, f64::max);
        if max_row_sum > 1.0 + 1e-12 {
            return Err(GsarError::InvalidInput(format!(
                "weights must be row-standardized (max row sum {max_row_sum})"
            )));
        }
        let diag = vec![1.0; w.n()];
        let adj = w.symmetric_adjacency();
        let lu = SkylineLu::factor(&diag, w.entries().map(|(i, j, v)| (i, j, -rho * v)), &adj)?;
        Ok(Self { w, rho, lu })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }

    pub fn weights(&self) -> &'w SpatialWeights {
        self.w
    }

    /// `A v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let wv = self.w.mul_vec(v.as_slice());
        DVector::from_iterator(v.len(), v.iter().zip(wv).map(|(a, b)| a - self.rho * b))
    }

    /// `Aᵀ v`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let wv = self.w.mul_vec_transpose(v.as_slice());
        DVector::from_iterator(v.len(), v.iter().zip(wv).map(|(a, b)| a - self.rho * b))
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n(), "right-hand side must have n rows");
        let mut x = b.clone();
        self.lu.solve_in_place(x.as_mut_slice());
        x
    }

    /// `A⁻ᵀ b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n(), "right-hand side must have n rows");
        let mut x = b.clone();
        self.lu.solve_transpose_in_place(x.as_mut_slice());
        x
    }

    /// `A⁻¹ B`, column by column.
    pub fn solve_a(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(b)?;
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.lu.solve_in_place(col.as_mut_slice());
        }
        Ok(x)
    }

    /// `A⁻ᵀ B`, column by column.
    pub fn solve_at(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(b)?;
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.lu.solve_transpose_in_place(col.as_mut_slice());
        }
        Ok(x)
    }

    fn check_rows(&self, b: &DMatrix<f64>) -> Result<()> {
        if b.nrows() != self.n() {
            return Err(GsarError::DimensionMismatch(format!(
                "right-hand side has {} rows, operator has {}",
                b.nrows(),
                self.n()
            )));
        }
        Ok(())
    }

    /// `(AᵀA)⁻¹ v = A⁻¹(A⁻ᵀ v)`.
    pub fn ata_inv_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        self.solve(&self.solve_transpose(v))
    }

    /// Diagonal of `(AᵀA)⁻¹ = A⁻¹A⁻ᵀ`, i.e. squared row norms of `A⁻¹`.
    ///
    /// Costs one solve per unit: `O(n · solve)`.
    pub fn ata_inv_diag(&self) -> DVector<f64> {
        let n = self.n();
        let mut diag = DVector::zeros(n);
        let mut e = vec![0.0; n];
        for k in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            self.lu.solve_in_place(&mut e);
            for (d, x) in diag.iter_mut().zip(&e) {
                *d += x * x;
            }
        }
        diag
    }

    /// Diagonal of `A⁻¹` (one solve per unit).
    pub fn inverse_diag(&self) -> DVector<f64> {
        let n = self.n();
        let mut e = vec![0.0; n];
        DVector::from_iterator(
            n,
            (0..n).map(|k| {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[k] = 1.0;
                self.lu.solve_in_place(&mut e);
                e[k]
            }),
        )
    }

    /// `eta(rho) = A⁻¹ X β`.
    pub fn eta(&self, x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
        self.solve(&(x * beta))
    }

    /// `d eta / d rho = A⁻¹ W A⁻¹ X β`.
    pub fn deta_drho(&self, x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
        self.lag_solve(&self.eta(x, beta))
    }

    /// `d² eta / d rho² = 2 A⁻¹ W A⁻¹ W A⁻¹ X β`.
    pub fn d2eta_drho2(&self, x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
        2.0 * self.lag_solve(&self.deta_drho(x, beta))
    }

    /// `A⁻¹ W v`.
    pub fn lag_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.solve(&DVector::from_vec(self.w.mul_vec(v.as_slice())))
    }

    /// Partial Neumann sum `Σ_{j=0}^{terms} rho^j W^j b`.
    pub fn neumann_partial(&self, b: &DVector<f64>, terms: usize) -> DVector<f64> {
        let mut sum = b.clone();
        let mut term = b.clone();
        for _ in 0..terms {
            term = DVector::from_vec(self.w.mul_vec(term.as_slice())) * self.rho;
            sum += &term;
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{build_rook_grid, SpatialWeights};

    fn exchange() -> SpatialWeights {
        build_rook_grid(1, 2).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Independent oracle: dense LU inverse of `I - rho W`.
    fn dense_inverse(w: &SpatialWeights, rho: f64) -> DMatrix<f64> {
        let n = w.n();
        (DMatrix::identity(n, n) - w.to_dense() * rho).try_inverse().unwrap()
    }

    fn test_matrix(n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() + 0.1 * j as f64)
    }

    #[test]
    fn zero_rho_is_identity() {
        let w = build_rook_grid(3, 3).unwrap();
        let op = SpatialOperator::new(&w, 0.0).unwrap();
        let b = test_matrix(9, 3);
        assert_eq!(op.solve_a(&b).unwrap(), b);
        assert_eq!(op.solve_at(&b).unwrap(), b);
        assert!(op.ata_inv_diag().iter().all(|&d| d == 1.0));
        let v = DVector::from_fn(9, |i, _| i as f64);
        assert_eq!(op.neumann_partial(&v, 7), v);
    }

    #[test]
    fn exchange_inverse_closed_form() {
        let w = exchange();
        let op = SpatialOperator::new(&w, 0.5).unwrap();
        let inv = op.solve_a(&DMatrix::identity(2, 2)).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert!(max_abs(&(inv - want)) < 1e-15);
        for d in op.ata_inv_diag().iter() {
            assert!((d - 20.0 / 9.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exchange_derivative_closed_form() {
        let w = exchange();
        let op = SpatialOperator::new(&w, 0.5).unwrap();
        let x = DMatrix::identity(2, 2);
        let beta = DVector::from_vec(vec![1.0, 0.0]);
        let d = op.deta_drho(&x, &beta);
        // A⁻¹e₁ = (4/3, 2/3), W swaps it, A⁻¹(2/3, 4/3) = (16/9, 20/9)
        assert!((d[0] - 16.0 / 9.0).abs() < 1e-14 && (d[1] - 20.0 / 9.0).abs() < 1e-14, "{d}");
    }

    #[test]
    fn zero_rho_derivatives_are_lags() {
        let w = build_rook_grid(3, 3).unwrap();
        let op = SpatialOperator::new(&w, 0.0).unwrap();
        let x = test_matrix(9, 2);
        let beta = DVector::from_vec(vec![0.7, -1.2]);
        let xb = &x * &beta;
        let wxb = DVector::from_vec(w.mul_vec(xb.as_slice()));
        let wwxb = DVector::from_vec(w.mul_vec(wxb.as_slice()));
        assert!((op.deta_drho(&x, &beta) - wxb).amax() < 1e-15);
        assert!((op.d2eta_drho2(&x, &beta) - 2.0 * wwxb).amax() < 1e-15);
    }

    #[test]
    fn grid_solves_match_dense_oracle() {
        let w = build_rook_grid(3, 3).unwrap();
        let b = test_matrix(9, 4);
        for rho in [0.4, -0.3] {
            let op = SpatialOperator::new(&w, rho).unwrap();
            let inv = dense_inverse(&w, rho);
            assert!(max_abs(&(op.solve_a(&b).unwrap() - &inv * &b)) < 1e-10);
            assert!(max_abs(&(op.solve_at(&b).unwrap() - inv.transpose() * &b)) < 1e-10);
            let ata = (&inv * inv.transpose()).diagonal();
            assert!((op.ata_inv_diag() - ata).amax() < 1e-10);
            assert!((op.inverse_diag() - inv.diagonal()).amax() < 1e-10);
        }
    }

    #[test]
    fn symmetric_weights_give_equal_transpose_solves() {
        let w = build_rook_grid(4, 4).unwrap(); // 4x4 rook: degrees differ, W not symmetric
        let b = test_matrix(16, 2);
        let sym = SpatialWeights::from_triplets(3, [(0, 1, 0.5), (1, 0, 0.5), (1, 2, 0.5), (2, 1, 0.5)]).unwrap();
        let op = SpatialOperator::new(&sym, 0.6).unwrap();
        let b3 = test_matrix(3, 2);
        assert!(max_abs(&(op.solve_a(&b3).unwrap() - op.solve_at(&b3).unwrap())) < 1e-15);
        let op = SpatialOperator::new(&w, 0.6).unwrap();
        assert!(max_abs(&(op.solve_a(&b).unwrap() - op.solve_at(&b).unwrap())) > 1e-6);
    }

    #[test]
    fn residual_is_small_across_rho() {
        let w = build_rook_grid(7, 8).unwrap();
        let b = test_matrix(56, 3);
        for rho in [-0.75, -0.25, 0.0, 0.25, 0.75] {
            let op = SpatialOperator::new(&w, rho).unwrap();
            let x = op.solve_a(&b).unwrap();
            for (xc, bc) in x.column_iter().zip(b.column_iter()) {
                let r = op.apply(&xc.into_owned()) - bc;
                assert!(r.amax() <= 1e-10 * bc.amax());
            }
        }
    }

    #[test]
    fn islands_are_invertible() {
        let w = SpatialWeights::from_triplets(3, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap().row_standardize();
        let op = SpatialOperator::new(&w, 0.9).unwrap();
        let x = op.solve(&DVector::from_vec(vec![1.0, 1.0, 1.0]));
        assert!((x[0] - 10.0).abs() < 1e-12 && (x[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = build_rook_grid(2, 2).unwrap();
        assert!(SpatialOperator::new(&w, 1.0).is_err());
        assert!(SpatialOperator::new(&w, f64::NAN).is_err());
        let raw = crate::weights::rook_adjacency(2, 2).unwrap();
        assert!(SpatialOperator::new(&raw, 0.5).is_err());
        let op = SpatialOperator::new(&w, 0.5).unwrap();
        assert!(op.solve_a(&DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn neumann_first_terms() {
        let w = build_rook_grid(3, 3).unwrap();
        let op = SpatialOperator::new(&w, 0.5).unwrap();
        let b = DVector::from_fn(9, |i, _| (i as f64).cos());
        assert_eq!(op.neumann_partial(&b, 0), b);
        let one = op.neumann_partial(&b, 1);
        let want = &b + DVector::from_vec(w.mul_vec(b.as_slice())) * 0.5;
        assert!((one - want).amax() < 1e-15);
    }

    #[test]
    fn neumann_error_decreases_monotonically() {
        let w = build_rook_grid(9, 9).unwrap();
        let b = DVector::from_fn(81, |i, _| ((i * 13) as f64).sin());
        for rho in [-0.75, 0.5, 0.75] {
            let op = SpatialOperator::new(&w, rho).unwrap();
            let exact = op.solve(&b);
            let errors: Vec<f64> = (0..60).map(|t| (op.neumann_partial(&b, t) - &exact).amax()).collect();
            assert!(errors.windows(2).all(|e| e[1] <= e[0] + 1e-15), "rho = {rho}");
            assert!(errors[59] < 1e-6);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let w = build_rook_grid(7, 7).unwrap();
        let x = test_matrix(49, 3);
        let beta = DVector::from_vec(vec![0.5, -0.5, 1.0]);
        let eta = |rho: f64| SpatialOperator::new(&w, rho).unwrap().eta(&x, &beta);
        let h1 = 1e-6;
        let h2 = 1e-4;
        for rho in [-0.6, -0.2, 0.0, 0.3, 0.7] {
            let op = SpatialOperator::new(&w, rho).unwrap();
            let d1 = op.deta_drho(&x, &beta);
            let fd1 = (eta(rho + h1) - eta(rho - h1)) / (2.0 * h1);
            assert!((&d1 - fd1).amax() <= 1e-5 * d1.amax());
            let d2 = op.d2eta_drho2(&x, &beta);
            let fd2 = (eta(rho + h2) - 2.0 * eta(rho) + eta(rho - h2)) / (h2 * h2);
            assert!((&d2 - fd2).amax() <= 1e-4 * d2.amax());
        }
    }

    #[test]
    fn second_derivative_matches_dense_algebra() {
        let w = build_rook_grid(3, 3).unwrap();
        let x = test_matrix(9, 2);
        let beta = DVector::from_vec(vec![1.5, -0.25]);
        let rho = 0.4;
        let inv = dense_inverse(&w, rho);
        let wd = w.to_dense();
        let want = 2.0 * &inv * &wd * &inv * &wd * &inv * (&x * &beta);
        let op = SpatialOperator::new(&w, rho).unwrap();
        assert!((op.d2eta_drho2(&x, &beta) - want).amax() < 1e-10);
    }

    #[test]
    fn concurrent_solves_are_consistent() {
        let w = build_rook_grid(10, 10).unwrap();
        let op = SpatialOperator::new(&w, 0.45).unwrap();
        let b = DVector::from_fn(100, |i, _| i as f64 / 10.0);
        let serial = op.solve(&b);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..4).map(|_| s.spawn(|| op.solve(&b))).collect();
            for h in handles {
                assert_eq!(h.join().unwrap(), serial);
            }
        });
    }
}
