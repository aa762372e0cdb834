//! Case-resampling bootstrap: the sampling variance of the CLS estimator
//! (with the proportion re-estimated on every replicate) and bootstrap
//! estimation of the proportion for endpoints without closed-form moments.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::cls::{combine, estimate_pi, fit_cls_with, ClsChoice, MseParts, UnbiasedEstimator};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_jive, fit_ols, fit_tsls, FitResult};
use crate::exec::{CompensatedSum, Executor, Sequential};
use crate::linalg::symmetrize;
use crate::rng::{derive_seed, index_below, stream, Domain};

pub const DEFAULT_REPS: usize = 100;

/// Slack allowed in the bootstrap optimality comparison.
pub const OPTIMALITY_TOL: f64 = 1e-10;

/// Replicate count and seed. Replicate `b` always draws from stream
/// `(seed, b)`, so index multisets do not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapPlan {
    pub reps: usize,
    pub seed: u64,
}

impl BootstrapPlan {
    pub fn new(reps: usize, seed: u64) -> Result<Self> {
        let plan = Self { reps, seed };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::InvalidPlan(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.reps
            )));
        }
        Ok(())
    }

    /// The `n` case indices, drawn with replacement, of replicate `b`.
    pub fn resample_indices(&self, b: usize, n: usize) -> Vec<usize> {
        let mut rng = stream(self.seed, Domain::Bootstrap, b as u64);
        (0..n).map(|_| index_below(&mut rng, n)).collect()
    }

    /// Plan for a bootstrap nested inside replicate or iteration `index`.
    pub fn nested(&self, index: usize) -> Self {
        Self {
            reps: self.reps,
            seed: derive_seed(self.seed, Domain::NestedBootstrap, index as u64),
        }
    }
}

/// Bootstrap distribution summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapMoments {
    /// Bootstrap mean of the combined estimator.
    pub mean: DVector<f64>,
    /// Bootstrap covariance of the combined estimator, divisor `B - 1`.
    pub cov: DMatrix<f64>,
    /// Bootstrap MSE decomposition, filled by [`bootstrap_pi`].
    pub mse_parts_star: Option<MseParts>,
    pub failures: usize,
    /// Successful replicate values of the combined estimator, in replicate order.
    pub replicates: Vec<DVector<f64>>,
    /// Per-replicate proportions, when each replicate estimated one.
    pub pi_replicates: Vec<f64>,
    pub ols_replicates: Vec<DVector<f64>>,
    pub unbiased_replicates: Vec<DVector<f64>>,
    /// The bootstrap proportion hit the degenerate-denominator rule.
    pub degenerate: bool,
}

impl BootstrapMoments {
    /// Mean and covariance (divisor `m - 1`) of `m >= 2` draws.
    pub fn from_replicates(replicates: Vec<DVector<f64>>, failures: usize) -> Self {
        let (mean, cov) = mean_and_cov(&replicates);
        Self {
            mean,
            cov,
            mse_parts_star: None,
            failures,
            replicates,
            pi_replicates: Vec::new(),
            ols_replicates: Vec::new(),
            unbiased_replicates: Vec::new(),
            degenerate: false,
        }
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.cov.diagonal().map(|v| libm::sqrt(v.max(0.0)))
    }
}

fn mean_of(draws: &[DVector<f64>]) -> DVector<f64> {
    let k = draws[0].len();
    let m = draws.len() as f64;
    DVector::from_fn(k, |j, _| {
        let mut s = CompensatedSum::default();
        for d in draws {
            s.add(d[j]);
        }
        s.value() / m
    })
}

/// `sum (a_b - mean_a)(c_b - mean_c)' / (m - 1)`.
fn cross_cov(a: &[DVector<f64>], mean_a: &DVector<f64>, c: &[DVector<f64>], mean_c: &DVector<f64>) -> DMatrix<f64> {
    let k = mean_a.len();
    let divisor = (a.len() - 1) as f64;
    DMatrix::from_fn(k, k, |i, j| {
        let mut s = CompensatedSum::default();
        for (x, y) in a.iter().zip(c) {
            s.add((x[i] - mean_a[i]) * (y[j] - mean_c[j]));
        }
        s.value() / divisor
    })
}

fn mean_and_cov(draws: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    assert!(draws.len() >= 2, "bootstrap moments need two or more draws");
    let mean = mean_of(draws);
    let cov = symmetrize(&cross_cov(draws, &mean, draws, &mean));
    (mean, cov)
}

pub fn fit_unbiased(d: &Dataset, which: UnbiasedEstimator) -> Result<FitResult> {
    match which {
        UnbiasedEstimator::Tsls => fit_tsls(d),
        UnbiasedEstimator::Jive => fit_jive(d),
    }
}

/// Run `statistic` on every replicate; drop and count failures, and abort
/// when more than half fail (or fewer than two succeed).
fn run_replicates<E, T, F>(d: &Dataset, plan: &BootstrapPlan, exec: &E, statistic: F) -> Result<(Vec<T>, usize)>
where
    E: Executor,
    T: Send,
    F: Fn(usize, &Dataset) -> Result<T> + Sync + Send,
{
    plan.validate()?;
    let n = d.n();
    let outcomes = exec.map_indexed(plan.reps, |b| {
        let sample = d.resample(&plan.resample_indices(b, n));
        statistic(b, &sample)
    });
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    let mut last = None;
    for outcome in outcomes {
        match outcome {
            Ok(v) => ok.push(v),
            Err(e) => {
                failures += 1;
                last = Some(e);
            }
        }
    }
    if 2 * failures > plan.reps || ok.len() < 2 {
        return Err(Error::BootstrapFailures {
            failures,
            reps: plan.reps,
            last: Box::new(last.unwrap_or(Error::InvalidPlan(format!("only {} usable replicates", ok.len())))),
        });
    }
    Ok((ok, failures))
}

/// Bootstrap distribution of an arbitrary vector-valued estimator.
pub fn bootstrap_statistic_with<E, F>(d: &Dataset, plan: &BootstrapPlan, exec: &E, statistic: F) -> Result<BootstrapMoments>
where
    E: Executor,
    F: Fn(&Dataset) -> Result<DVector<f64>> + Sync + Send,
{
    let (draws, failures) = run_replicates(d, plan, exec, |_, s| statistic(s))?;
    Ok(BootstrapMoments::from_replicates(draws, failures))
}

pub fn bootstrap_variance_cls(d: &Dataset, plan: &BootstrapPlan) -> Result<BootstrapMoments> {
    bootstrap_variance_cls_with(d, plan, &ClsChoice::Tsls, &Sequential)
}

/// Bootstrap variance of the CLS estimator, refitting the whole estimator
/// (proportion included) on each replicate. A bootstrap-proportion choice
/// nests an inner bootstrap seeded per outer replicate.
pub fn bootstrap_variance_cls_with<E: Executor>(
    d: &Dataset,
    plan: &BootstrapPlan,
    choice: &ClsChoice,
    exec: &E,
) -> Result<BootstrapMoments> {
    let (draws, failures) = run_replicates(d, plan, exec, |b, sample| {
        let inner = match choice {
            ClsChoice::Tsls => ClsChoice::Tsls,
            ClsChoice::Bootstrap { unbiased, plan } => ClsChoice::Bootstrap {
                unbiased: *unbiased,
                plan: plan.nested(b),
            },
        };
        fit_cls_with(sample, &inner, &Sequential).map(|r| (r.beta_cls, r.pi_hat))
    })?;
    let (betas, pis): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    let mut moments = BootstrapMoments::from_replicates(betas, failures);
    moments.pi_replicates = pis;
    Ok(moments)
}

pub fn bootstrap_pi(d: &Dataset, unbiased: UnbiasedEstimator, plan: &BootstrapPlan) -> Result<(f64, BootstrapMoments)> {
    bootstrap_pi_with(d, unbiased, plan, &Sequential)
}

/// Bootstrap proportion: OLS and the unbiased endpoint are refit on each
/// replicate, the bootstrap mean of the unbiased endpoint stands in for
/// the true parameter, and the closed-form minimizer is applied to the
/// resulting bootstrap MSE decomposition.
pub fn bootstrap_pi_with<E: Executor>(
    d: &Dataset,
    unbiased: UnbiasedEstimator,
    plan: &BootstrapPlan,
    exec: &E,
) -> Result<(f64, BootstrapMoments)> {
    let (pairs, failures) = run_replicates(d, plan, exec, |_, sample| {
        let ols = fit_ols(sample)?;
        let other = fit_unbiased(sample, unbiased)?;
        Ok((ols.beta, other.beta))
    })?;
    let (ols_draws, unb_draws): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let (mean_o, var_o) = mean_and_cov(&ols_draws);
    let (mean_u, var_u) = mean_and_cov(&unb_draws);
    let cov = symmetrize(&cross_cov(&ols_draws, &mean_o, &unb_draws, &mean_u));
    let bias = &mean_o - &mean_u;
    let parts = MseParts::from_matrices(var_o, &bias * bias.transpose(), cov, var_u)?;
    let (pi, degenerate) = estimate_pi(&parts)?;

    let combined: Vec<_> = ols_draws
        .iter()
        .zip(&unb_draws)
        .map(|(o, u)| combine(pi, o, u))
        .collect();
    let mut moments = BootstrapMoments::from_replicates(combined, failures);
    moments.mse_parts_star = Some(parts);
    moments.ols_replicates = ols_draws;
    moments.unbiased_replicates = unb_draws;
    moments.degenerate = degenerate;
    Ok((pi, moments))
}

/// Whether the combination at `pi_star` has bootstrap MSE trace no larger
/// than either endpoint's. Missing decomposition or an invalid proportion
/// yields `false`.
pub fn bootstrap_mse_optimality_check(moments: &BootstrapMoments, pi_star: f64) -> bool {
    let Some(parts) = &moments.mse_parts_star else {
        return false;
    };
    let f = |pi| crate::cls::empirical_mse_trace(parts, pi);
    match (f(pi_star), f(1.0), f(0.0)) {
        (Ok(at), Ok(ols), Ok(unb)) => at <= ols.min(unb) + OPTIMALITY_TOL,
        _ => false,
    }
}
