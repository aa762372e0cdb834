//! OLS, TSLS and JIVE point estimators with their homoscedastic variance
//! estimates, plus the OLS/TSLS cross moments that feed the proportion
//! estimate.

use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{project_onto, symmetrize, LeastSquares, ProjectionCache};

/// Leverages at or above `1 - LEVERAGE_CEILING` make the leave-one-out
/// first stage undefined.
pub const LEVERAGE_CEILING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorTag {
    Ols,
    Tsls,
    Jive,
    ClsTsls,
    ClsJive,
}

impl EstimatorTag {
    pub const ALL: [EstimatorTag; 5] = [
        EstimatorTag::Ols,
        EstimatorTag::Tsls,
        EstimatorTag::Jive,
        EstimatorTag::ClsTsls,
        EstimatorTag::ClsJive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::Ols => "ols",
            EstimatorTag::Tsls => "tsls",
            EstimatorTag::Jive => "jive",
            EstimatorTag::ClsTsls => "cls-tsls",
            EstimatorTag::ClsJive => "cls-jive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    /// Residual variance with divisor `n - k`.
    pub sigma2: f64,
    pub tag: EstimatorTag,
    pub dof: usize,
}

impl FitResult {
    pub fn std_errors(&self) -> DVector<f64> {
        self.cov_beta.diagonal().map(|v| libm::sqrt(v.max(0.0)))
    }
}

/// Residual variance `sum (y_i - x_i b)^2 / (n - k)`.
fn residual_variance(d: &Dataset, beta: &DVector<f64>) -> f64 {
    let resid = d.y() - d.x() * beta;
    resid.norm_squared() / d.dof() as f64
}

pub fn fit_ols(d: &Dataset) -> Result<FitResult> {
    let tag = EstimatorTag::Ols;
    let ls = LeastSquares::new(d.x(), "predictor matrix X").map_err(|e| e.tagged(tag))?;
    let beta = ls.solve_vec(d.y());
    let sigma2 = residual_variance(d, &beta);
    Ok(FitResult {
        cov_beta: ls.gram_inverse() * sigma2,
        beta,
        sigma2,
        tag,
        dof: d.dof(),
    })
}

pub fn fit_tsls(d: &Dataset) -> Result<FitResult> {
    let proj = project_onto(d.z()).map_err(|e| e.tagged(EstimatorTag::Tsls))?;
    fit_tsls_with(d, &proj)
}

/// TSLS reusing an existing projection onto `col(Z)`.
///
/// The residual variance is computed from `y - X b`, with the original
/// predictors rather than their projection.
pub fn fit_tsls_with(d: &Dataset, proj: &ProjectionCache) -> Result<FitResult> {
    let tag = EstimatorTag::Tsls;
    let xh = proj.apply(d.x());
    // Judged against X itself so an instrument set nearly orthogonal to X
    // (Z'X ~ 0) is reported as rank deficient.
    let ls = LeastSquares::with_scale(&xh, "projected predictors H_z X", d.x().norm()).map_err(|e| e.tagged(tag))?;
    let beta = ls.solve_vec(d.y());
    let sigma2 = residual_variance(d, &beta);
    Ok(FitResult {
        cov_beta: ls.gram_inverse() * sigma2,
        beta,
        sigma2,
        tag,
        dof: d.dof(),
    })
}

/// Leave-one-out first-stage fits `X̂_J`, row `i` being `z_i Γ̂_(i)`,
/// computed through the leverage identity
/// `z_i Γ̂_(i) = (z_i Γ̂ - h_i x_i) / (1 - h_i)`.
pub fn jive_first_stage(d: &Dataset, proj: &ProjectionCache) -> Result<DMatrix<f64>> {
    let h = proj.leverages();
    if let Some(index) = h.iter().position(|&v| v >= 1.0 - LEVERAGE_CEILING) {
        return Err(Error::LeverageOne {
            index,
            leverage: h[index],
        });
    }
    let mut xj = proj.apply(d.x());
    let x = d.x();
    for j in 0..xj.ncols() {
        for i in 0..xj.nrows() {
            xj[(i, j)] = (xj[(i, j)] - h[i] * x[(i, j)]) / (1.0 - h[i]);
        }
    }
    Ok(xj)
}

pub fn fit_jive(d: &Dataset) -> Result<FitResult> {
    let proj = project_onto(d.z()).map_err(|e| e.tagged(EstimatorTag::Jive))?;
    fit_jive_with(d, &proj)
}

/// JIVE `(X̂_J'X)^-1 X̂_J'y` with sandwich covariance
/// `s² (X̂_J'X)^-1 (X̂_J'X̂_J) (X'X̂_J)^-1`.
pub fn fit_jive_with(d: &Dataset, proj: &ProjectionCache) -> Result<FitResult> {
    let tag = EstimatorTag::Jive;
    let xj = jive_first_stage(d, proj).map_err(|e| e.tagged(tag))?;
    let cross = xj.tr_mul(d.x());
    let ls = LeastSquares::with_scale(&cross, "jackknife cross-product X̂_J'X", xj.norm() * d.x().norm())
        .map_err(|e| e.tagged(tag))?;
    let beta = ls.solve_vec(&xj.tr_mul(d.y()));
    let sigma2 = residual_variance(d, &beta);
    let k = d.k();
    let inv = ls.solve(&DMatrix::identity(k, k));
    let meat = xj.tr_mul(&xj);
    let cov_beta = symmetrize(&(&inv * meat * inv.transpose())) * sigma2;
    Ok(FitResult {
        beta,
        cov_beta,
        sigma2,
        tag,
        dof: d.dof(),
    })
}

/// Cross moments of an OLS and a TSLS fit on the same data.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStats {
    /// `σ̄² (X'X)^-1`.
    pub cov_cross: DMatrix<f64>,
    /// Cross-RSS `sum (y_i - x_i β̂)(y_i - x_i β̃) / (n - k)`.
    pub sigma2_cross: f64,
    /// `(β̂ - β̃)(β̂ - β̃)'`.
    pub bias2_ols: DMatrix<f64>,
}

pub fn pair_stats(d: &Dataset, ols: &FitResult, tsls: &FitResult) -> Result<PairStats> {
    let k = d.k();
    for fit in [ols, tsls] {
        if fit.beta.len() != k {
            return Err(Error::Dimension {
                what: "coefficient vector",
                expected: k,
                found: fit.beta.len(),
            });
        }
    }
    let ls = LeastSquares::new(d.x(), "predictor matrix X").map_err(|e| e.tagged(EstimatorTag::Ols))?;
    let r_ols = d.y() - d.x() * &ols.beta;
    let r_tsls = d.y() - d.x() * &tsls.beta;
    let sigma2_cross = r_ols.dot(&r_tsls) / d.dof() as f64;
    let diff = &ols.beta - &tsls.beta;
    Ok(PairStats {
        cov_cross: ls.gram_inverse() * sigma2_cross,
        sigma2_cross,
        bias2_ols: &diff * diff.transpose(),
    })
}
