//! Orthogonal-decomposition least squares and instrument-space projections.
//!
//! Every `(M'M)^-1 M' B` in the estimators goes through [`LeastSquares`],
//! a Householder QR of `M` with a numerical-rank check on the triangular
//! factor. Rank deficiency is an error carrying the estimated rank and
//! condition number; there is no silent pseudo-inverse.

use nalgebra::{DMatrix, DVector, Dyn, QR};

use crate::error::{Error, Result};

/// Householder QR of a tall matrix `A` (n x m, n >= m) with verified full column rank.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    qr: QR<f64, Dyn, Dyn>,
    r: DMatrix<f64>,
    rows: usize,
    condition: f64,
}

/// Numerical rank of `r` under the `max(n, m) * eps * sigma_max` rule,
/// together with the 2-norm condition number.
fn numerical_rank(r: &DMatrix<f64>, rows: usize, scale: f64) -> (usize, f64) {
    let m = r.ncols();
    let sv = r.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = rows.max(m) as f64 * f64::EPSILON * smax.max(scale);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    (rank, condition)
}

impl LeastSquares {
    /// Factor `a`, failing with [`Error::Singular`] when `rank(a) < a.ncols()`.
    /// `what` names the matrix in error messages.
    pub fn new(a: &DMatrix<f64>, what: &'static str) -> Result<Self> {
        Self::with_scale(a, what, 0.0)
    }

    /// As [`LeastSquares::new`], but singular values are compared against
    /// `max(sigma_max(a), scale)`. Used when `a` is a product or projection
    /// whose collapse should be judged relative to its inputs.
    pub fn with_scale(a: &DMatrix<f64>, what: &'static str, scale: f64) -> Result<Self> {
        let (n, m) = a.shape();
        if m == 0 {
            return Err(Error::Dimension {
                what,
                expected: 1,
                found: 0,
            });
        }
        if n < m {
            return Err(Error::TooFewRows { n, columns: m, what });
        }
        let qr = a.clone().qr();
        let r = qr.r();
        let (rank, condition) = numerical_rank(&r, n, scale);
        if rank < m || !condition.is_finite() {
            return Err(Error::Singular {
                what,
                rank,
                cols: m,
                condition,
            });
        }
        Ok(Self { qr, r, rows: n, condition })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.r.ncols()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `argmin_G ||A G - B||_F`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.rows(), "right-hand side row count");
        let m = self.cols();
        let mut qtb = b.clone();
        self.qr.q_tr_mul(&mut qtb);
        let top = qtb.rows(0, m).into_owned();
        self.r
            .solve_upper_triangular(&top)
            .expect("triangular factor verified non-singular")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = self.cols();
        let mut qtb = b.clone();
        self.qr.q_tr_mul(&mut qtb);
        let top = qtb.rows(0, m).into_owned();
        self.r
            .solve_upper_triangular(&top)
            .expect("triangular factor verified non-singular")
    }

    /// `(A'A)^-1`, formed as `R^-1 R^-T` and symmetrized.
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        let m = self.cols();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .expect("triangular factor verified non-singular");
        symmetrize(&(&r_inv * r_inv.transpose()))
    }
}

/// `argmin_G ||A G - B||_F` via QR; errors when `rank(A) < A.ncols()`.
pub fn solve_normal(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension {
            what: "solve_normal right-hand side",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(LeastSquares::new(a, "design matrix")?.solve(b))
}

/// Projection onto the column space of an instrument matrix, kept as a
/// thin orthonormal basis `Q` (n x l) so that `H_z X = Q (Q' X)` without
/// ever forming the n x n hat matrix.
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    basis: DMatrix<f64>,
    leverages: DVector<f64>,
}

/// Build the projection onto `col(z)`. Requires `rank(z) = z.ncols()`.
pub fn project_onto(z: &DMatrix<f64>) -> Result<ProjectionCache> {
    let ls = LeastSquares::new(z, "instrument matrix Z")?;
    let basis = ls.qr.q();
    let leverages = DVector::from_iterator(
        basis.nrows(),
        basis.row_iter().map(|row| row.norm_squared()),
    );
    Ok(ProjectionCache { basis, leverages })
}

impl ProjectionCache {
    /// `H_z x`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let coeffs = self.basis.tr_mul(x);
        &self.basis * coeffs
    }

    pub fn apply_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.basis.tr_mul(y);
        &self.basis * coeffs
    }

    /// Diagonal of `H_z`: `h_i = z_i (Z'Z)^-1 z_i'`.
    pub fn leverages(&self) -> &DVector<f64> {
        &self.leverages
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Dense n x n hat matrix. Only sensible for small n.
    pub fn dense_hat(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute entry, used as a scale for relative tolerances.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lcg_matrix(rows: usize, cols: usize, mut state: u64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn identity_design_returns_rhs() {
        let a = DMatrix::<f64>::identity(3, 3);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 3.5, 0.0, 7.0, 1e-3]);
        let g = solve_normal(&a, &b).unwrap();
        assert_relative_eq!(g, b, epsilon = 1e-14);
    }

    #[test]
    fn exact_line() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let b = DMatrix::from_column_slice(3, 1, &[2.0, 4.0, 6.0]);
        let g = solve_normal(&a, &b).unwrap();
        assert_relative_eq!(g[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn recovers_constructed_coefficients() {
        let a = lcg_matrix(20, 4, 17);
        let g0 = DMatrix::from_row_slice(4, 2, &[1.0, -0.5, 2.0, 0.25, -3.0, 4.0, 0.5, 0.0]);
        let b = &a * &g0;
        let g = solve_normal(&a, &b).unwrap();
        assert!((&g - &g0).abs().max() < 1e-10);
        let resid = &a * &g - &b;
        assert!(resid.norm() < 1e-10);
    }

    #[test]
    fn rank_deficiency_reports_rank() {
        let mut a = lcg_matrix(10, 3, 5);
        let c0 = a.column(0).into_owned();
        a.set_column(2, &(c0 * 2.0));
        match solve_normal(&a, &DMatrix::zeros(10, 1)) {
            Err(Error::Singular { rank, cols, .. }) => {
                assert_eq!(rank, 2);
                assert_eq!(cols, 3);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn zero_column_is_singular() {
        let a = DMatrix::<f64>::zeros(5, 1);
        assert!(matches!(
            LeastSquares::new(&a, "a"),
            Err(Error::Singular { rank: 0, .. })
        ));
    }

    #[test]
    fn full_projection_is_identity() {
        let z = DMatrix::<f64>::identity(5, 5);
        let p = project_onto(&z).unwrap();
        let x = lcg_matrix(5, 2, 3);
        assert_relative_eq!(p.apply(&x), x, epsilon = 1e-13);
        for h in p.leverages().iter() {
            assert_relative_eq!(*h, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn constant_column_projects_to_mean() {
        let n = 7;
        let z = DMatrix::from_element(n, 1, 1.0);
        let p = project_onto(&z).unwrap();
        let y = DVector::from_iterator(n, (0..n).map(|i| (i * i) as f64 - 3.0));
        let mean = y.mean();
        for v in p.apply_vec(&y).iter() {
            assert_relative_eq!(*v, mean, epsilon = 1e-13);
        }
        for h in p.leverages().iter() {
            assert_relative_eq!(*h, 1.0 / n as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn leverages_match_dense_hat_diagonal() {
        let z = lcg_matrix(6, 2, 99);
        let p = project_onto(&z).unwrap();
        // Dense oracle: Z (Z'Z)^-1 Z' through an explicit inverse.
        let ztz_inv = (z.transpose() * &z).try_inverse().unwrap();
        let hat = &z * ztz_inv * z.transpose();
        for i in 0..6 {
            assert_relative_eq!(p.leverages()[i], hat[(i, i)], epsilon = 1e-12);
        }
        assert_relative_eq!(p.dense_hat(), hat, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn projection_invariants(seed in any::<u64>(), n in 6usize..40, l in 1usize..5, k in 1usize..4) {
            let z = lcg_matrix(n, l, seed);
            let x = lcg_matrix(n, k, seed ^ 0x9e37_79b9_7f4a_7c15);
            let p = project_onto(&z).unwrap();

            let xh = p.apply(&x);
            let twice = p.apply(&xh);
            prop_assert!((&twice - &xh).norm() <= 1e-10 * xh.norm().max(1.0));

            let h = p.leverages();
            prop_assert!(h.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
            prop_assert!((h.sum() - l as f64).abs() < 1e-8);

            // (HX)'X = X'(HX) = (HX)'(HX)
            let a = xh.transpose() * &x;
            let b = x.transpose() * &xh;
            let c = xh.transpose() * &xh;
            let scale = max_abs(&c).max(1e-300);
            prop_assert!(max_abs(&(&a - &b)) <= 1e-9 * scale);
            prop_assert!(max_abs(&(&a - &c)) <= 1e-9 * scale);

            // X'X - X̂'X̂ is PSD
            let xtx = x.transpose() * &x;
            let gap = &xtx - &c;
            prop_assert!(min_eigenvalue(&gap) >= -1e-8 * xtx.norm());
        }
    }
}
