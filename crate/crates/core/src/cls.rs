//! Convex combination of OLS with an asymptotically unbiased estimator.
//!
//! With the unbiased endpoint standing in for the true parameter, the
//! empirical MSE of `π β̂ + (1 - π) β̃` is the quadratic
//!
//! ```text
//! f(π) = π² tr MSE(OLS) + 2π(1-π) tr Cov + (1-π)² tr Var(unbiased)
//! ```
//!
//! whose minimizer over `[0, 1]` has a closed form. For TSLS all three
//! terms come from the fits; for other endpoints they come from the
//! bootstrap (see [`crate::bootstrap::bootstrap_pi`]).

use nalgebra::{DMatrix, DVector};

use crate::bootstrap::{bootstrap_pi_with, BootstrapMoments, BootstrapPlan};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_ols, fit_tsls, pair_stats, EstimatorTag, FitResult};
use crate::exec::{Executor, Sequential};

/// Relative size of the denominator below which the proportion is not identified.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// The three matrix terms of the combined MSE and their traces.
#[derive(Debug, Clone, PartialEq)]
pub struct MseParts {
    pub var_ols: DMatrix<f64>,
    pub bias2_ols: DMatrix<f64>,
    /// `var_ols + bias2_ols`.
    pub mse_ols: DMatrix<f64>,
    /// Covariance (cross-squared error) of the two endpoints.
    pub cov: DMatrix<f64>,
    pub var_unbiased: DMatrix<f64>,
    pub t_mse_ols: f64,
    pub t_cov: f64,
    pub t_var_unbiased: f64,
}

impl MseParts {
    pub fn from_matrices(
        var_ols: DMatrix<f64>,
        bias2_ols: DMatrix<f64>,
        cov: DMatrix<f64>,
        var_unbiased: DMatrix<f64>,
    ) -> Result<Self> {
        let mse_ols = &var_ols + &bias2_ols;
        let parts = Self {
            t_mse_ols: mse_ols.trace(),
            t_cov: cov.trace(),
            t_var_unbiased: var_unbiased.trace(),
            var_ols,
            bias2_ols,
            mse_ols,
            cov,
            var_unbiased,
        };
        parts.check_finite()?;
        Ok(parts)
    }

    /// Scalar parts with `tr Var(OLS) = t_mse_ols` and no bias term.
    pub fn from_traces(t_var_unbiased: f64, t_cov: f64, t_mse_ols: f64) -> Result<Self> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        Self::from_matrices(one(t_mse_ols), one(0.0), one(t_cov), one(t_var_unbiased))
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("trace of OLS MSE", self.t_mse_ols),
            ("trace of cross-covariance", self.t_cov),
            ("trace of unbiased-estimator variance", self.t_var_unbiased),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteMoments(name));
            }
        }
        Ok(())
    }

    fn quadratic(&self, pi: f64) -> f64 {
        let q = 1.0 - pi;
        pi * pi * self.t_mse_ols + 2.0 * pi * q * self.t_cov + q * q * self.t_var_unbiased
    }

    /// Full k x k empirical MSE matrix at `pi`.
    pub fn mse_matrix(&self, pi: f64) -> DMatrix<f64> {
        let q = 1.0 - pi;
        &self.mse_ols * (pi * pi) + &self.cov * (2.0 * pi * q) + &self.var_unbiased * (q * q)
    }
}

fn check_proportion(pi: f64) -> Result<()> {
    if (0.0..=1.0).contains(&pi) {
        Ok(())
    } else {
        Err(Error::InvalidProportion(pi))
    }
}

/// Trace of the empirical MSE of the combination at proportion `pi`.
pub fn empirical_mse_trace(parts: &MseParts, pi: f64) -> Result<f64> {
    check_proportion(pi)?;
    Ok(parts.quadratic(pi))
}

/// Closed-form minimizer of [`empirical_mse_trace`] over `[0, 1]`.
///
/// Returns `(pi, degenerate)`. A denominator within
/// `1e-12 * max(|t_var|, |t_mse_ols|, 1)` of zero leaves `pi`
/// unidentified; `pi = 0` (pure unbiased endpoint) is returned with the
/// flag set.
pub fn estimate_pi(parts: &MseParts) -> Result<(f64, bool)> {
    parts.check_finite()?;
    let (tv, tc, tm) = (parts.t_var_unbiased, parts.t_cov, parts.t_mse_ols);
    let denom = tv - 2.0 * tc + tm;
    let scale = tv.abs().max(tm.abs()).max(1.0);
    if denom.abs() <= DEGENERATE_TOL * scale {
        return Ok((0.0, true));
    }
    if denom < 0.0 {
        // Concave quadratic: the constrained minimum sits at an endpoint.
        let pi = if parts.quadratic(1.0) < parts.quadratic(0.0) { 1.0 } else { 0.0 };
        return Ok((pi, false));
    }
    Ok((((tv - tc) / denom).clamp(0.0, 1.0), false))
}

/// `pi a + (1 - pi) b`, elementwise.
pub fn combine(pi: f64, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.zip_map(b, |x, y| pi * x + (1.0 - pi) * y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnbiasedEstimator {
    Tsls,
    Jive,
}

impl UnbiasedEstimator {
    pub fn tag(self) -> EstimatorTag {
        match self {
            UnbiasedEstimator::Tsls => EstimatorTag::Tsls,
            UnbiasedEstimator::Jive => EstimatorTag::Jive,
        }
    }
}

/// How the proportion is estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum ClsChoice {
    /// OLS with TSLS; proportion from the closed-form empirical moments.
    Tsls,
    /// OLS with any unbiased endpoint; proportion from bootstrap moments.
    Bootstrap {
        unbiased: UnbiasedEstimator,
        plan: BootstrapPlan,
    },
}

impl ClsChoice {
    pub fn tag(&self) -> EstimatorTag {
        match self {
            ClsChoice::Tsls => EstimatorTag::ClsTsls,
            ClsChoice::Bootstrap {
                unbiased: UnbiasedEstimator::Tsls,
                ..
            } => EstimatorTag::ClsTsls,
            ClsChoice::Bootstrap {
                unbiased: UnbiasedEstimator::Jive,
                ..
            } => EstimatorTag::ClsJive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClsResult {
    pub beta_cls: DVector<f64>,
    pub pi_hat: f64,
    pub parts: MseParts,
    pub endpoint_ols: FitResult,
    pub endpoint_unbiased: FitResult,
    /// Trace of the empirical MSE at `pi_hat`.
    pub mse_at_pi: f64,
    pub degenerate: bool,
    /// `l < k + 2`: TSLS moments need not exist in finite samples.
    pub moment_caveat: bool,
    /// Bootstrap moments when the proportion came from resampling.
    pub bootstrap: Option<BootstrapMoments>,
}

impl ClsResult {
    pub fn tag(&self) -> EstimatorTag {
        match self.endpoint_unbiased.tag {
            EstimatorTag::Jive => EstimatorTag::ClsJive,
            _ => EstimatorTag::ClsTsls,
        }
    }
}

/// Closed-form CLS from already computed OLS and TSLS fits.
pub fn cls_from_fits(d: &Dataset, ols: FitResult, tsls: FitResult) -> Result<ClsResult> {
    let stats = pair_stats(d, &ols, &tsls)?;
    let parts = MseParts::from_matrices(
        ols.cov_beta.clone(),
        stats.bias2_ols,
        stats.cov_cross,
        tsls.cov_beta.clone(),
    )
    .map_err(|e| e.tagged(EstimatorTag::ClsTsls))?;
    let (pi_hat, degenerate) = estimate_pi(&parts).map_err(|e| e.tagged(EstimatorTag::ClsTsls))?;
    Ok(ClsResult {
        beta_cls: combine(pi_hat, &ols.beta, &tsls.beta),
        mse_at_pi: parts.quadratic(pi_hat),
        pi_hat,
        parts,
        endpoint_ols: ols,
        endpoint_unbiased: tsls,
        degenerate,
        moment_caveat: d.lacks_tsls_moments(),
        bootstrap: None,
    })
}

pub fn fit_cls(d: &Dataset, choice: &ClsChoice) -> Result<ClsResult> {
    fit_cls_with(d, choice, &Sequential)
}

pub fn fit_cls_with<E: Executor>(d: &Dataset, choice: &ClsChoice, exec: &E) -> Result<ClsResult> {
    match choice {
        ClsChoice::Tsls => cls_from_fits(d, fit_ols(d)?, fit_tsls(d)?),
        ClsChoice::Bootstrap { unbiased, plan } => {
            let ols = fit_ols(d)?;
            let endpoint = crate::bootstrap::fit_unbiased(d, *unbiased)?;
            let (pi_hat, moments) =
                bootstrap_pi_with(d, *unbiased, plan, exec).map_err(|e| e.tagged(choice.tag()))?;
            let parts = moments
                .mse_parts_star
                .clone()
                .expect("bootstrap_pi always fills the MSE decomposition");
            let degenerate = moments.degenerate;
            Ok(ClsResult {
                beta_cls: combine(pi_hat, &ols.beta, &endpoint.beta),
                mse_at_pi: parts.quadratic(pi_hat),
                pi_hat,
                parts,
                endpoint_ols: ols,
                endpoint_unbiased: endpoint,
                degenerate,
                moment_caveat: d.lacks_tsls_moments(),
                bootstrap: Some(moments),
            })
        }
    }
}
