//! Synthetic data from the two standardized simulation models and the
//! Monte Carlo harness summarizing estimator bias, variance and MSE.
//!
//! Model I has a single instrument:
//!
//! ```text
//! y = x β + u α + ε,    ε ~ N(0, σ²_ε),  σ²_ε = 1 - β² - (1 + 2β) α²   (= 3/4 - 2α² at β = 1/2)
//! x = z γ + u α + δ,    δ ~ N(0, σ²_δ),  σ²_δ = 1 - (γ² + α²)
//! ```
//!
//! with `z, u ~ N(0, 1)`, so that `Var(x) = Var(y) = 1`. Model II replaces
//! `z γ` by `Σ_j z_j λ` over `l` independent instruments, `λ = γ / sqrt(l)`,
//! making `γ` the multiple correlation of `x` on the instruments.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::RngCore;

use crate::bootstrap::{bootstrap_pi_with, BootstrapPlan};
use crate::cls::{cls_from_fits, combine, UnbiasedEstimator};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_jive_with, fit_ols, fit_tsls_with, EstimatorTag, FitResult};
use crate::exec::{CompensatedSum, Executor, Sequential};
use crate::linalg::project_onto;
use crate::rng::{derive_seed, standard_normal, stream, Domain};

pub const DEFAULT_BETA: f64 = 0.5;

/// Tolerance on the analytic unit-variance identities.
const STANDARDIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// One instrument.
    I,
    /// `instruments` uncorrelated instruments of equal strength.
    II { instruments: usize },
}

impl Model {
    pub fn instruments(self) -> usize {
        match self {
            Model::I => 1,
            Model::II { instruments } => instruments,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Model::I => "I",
            Model::II { .. } => "II",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub model: Model,
    /// Confounding strength, `Cor(X, U)`.
    pub alpha: f64,
    /// Instrument strength (multiple correlation of `X` on the instruments).
    pub gamma: f64,
    pub n: usize,
    pub beta_true: f64,
    /// Monte Carlo iterations `T`.
    pub iterations: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn model_i(alpha: f64, gamma: f64, n: usize, iterations: usize, seed: u64) -> Result<Self> {
        Self {
            model: Model::I,
            alpha,
            gamma,
            n,
            beta_true: DEFAULT_BETA,
            iterations,
            seed,
        }
        .validated()
    }

    pub fn model_ii(alpha: f64, gamma: f64, instruments: usize, n: usize, iterations: usize, seed: u64) -> Result<Self> {
        Self {
            model: Model::II { instruments },
            alpha,
            gamma,
            n,
            beta_true: DEFAULT_BETA,
            iterations,
            seed,
        }
        .validated()
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta_true = beta;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidScenario(msg));
        let (a, g, b) = (self.alpha, self.gamma, self.beta_true);
        if !(a.is_finite() && g.is_finite() && b.is_finite()) {
            return bad(format!("alpha, gamma and beta must be finite (alpha = {a}, gamma = {g}, beta = {b})"));
        }
        if a < 0.0 {
            return bad(format!("alpha must satisfy alpha >= 0 (alpha = {a})"));
        }
        if self.sigma2_eps() <= 0.0 {
            return if b == DEFAULT_BETA {
                bad(format!("alpha must satisfy alpha < sqrt(3/8) ~ 0.6124 (alpha = {a})"))
            } else {
                bad(format!(
                    "alpha must satisfy (1 + 2 beta) alpha^2 < 1 - beta^2 (alpha = {a}, beta = {b})"
                ))
            };
        }
        if g <= 0.0 {
            return bad(format!("gamma must satisfy gamma > 0 (gamma = {g})"));
        }
        if self.sigma2_delta() <= 0.0 {
            return bad(format!(
                "gamma must satisfy gamma < sqrt(1 - alpha^2) ~ {:.4} (gamma = {g}, alpha = {a})",
                libm::sqrt(1.0 - a * a)
            ));
        }
        let l = self.model.instruments();
        if l == 0 {
            return bad(format!("model II needs at least one instrument (l = {l})"));
        }
        if self.n <= l {
            return bad(format!("n must exceed the instrument count (n = {}, l = {l})", self.n));
        }
        // Analytic marginal variances of X and Y.
        let var_x = g * g + a * a + self.sigma2_delta();
        let var_y = b * b + a * a + 2.0 * b * a * a + self.sigma2_eps();
        if (var_x - 1.0).abs() > STANDARDIZATION_TOL || (var_y - 1.0).abs() > STANDARDIZATION_TOL {
            return bad(format!("standardization failed: Var(X) = {var_x}, Var(Y) = {var_y}"));
        }
        Ok(())
    }

    pub fn instruments(&self) -> usize {
        self.model.instruments()
    }

    /// Structural error variance.
    pub fn sigma2_eps(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta_true);
        1.0 - b * b - (1.0 + 2.0 * b) * a * a
    }

    /// First-stage error variance `1 - (γ² + α²)`.
    pub fn sigma2_delta(&self) -> f64 {
        1.0 - (self.gamma * self.gamma + self.alpha * self.alpha)
    }

    /// Per-instrument coefficient `γ / sqrt(l)`.
    pub fn lambda(&self) -> f64 {
        self.gamma / libm::sqrt(self.instruments() as f64)
    }
}

/// Draw `n` cases. Per case the variates are taken in the order
/// `z_1..z_l, u, δ, ε`, so Model II with `l = 1` reproduces Model I.
fn draw_cases<R: RngCore + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    draw_with_confounder(spec, rng).map(|(d, _)| d)
}

/// Like [`draw`], also returning the unobserved confounder `u` of each case.
pub fn draw_with_confounder<R: RngCore + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<(Dataset, DVector<f64>)> {
    spec.validate()?;
    let (n, l) = (spec.n, spec.instruments());
    let lambda = spec.lambda();
    let sd_delta = libm::sqrt(spec.sigma2_delta());
    let sd_eps = libm::sqrt(spec.sigma2_eps());
    let mut z = DMatrix::zeros(n, l);
    let mut x = DMatrix::zeros(n, 1);
    let mut y = DVector::zeros(n);
    let mut confounder = DVector::zeros(n);
    for i in 0..n {
        let mut signal = 0.0;
        for j in 0..l {
            let zij = standard_normal(rng);
            z[(i, j)] = zij;
            signal += zij * lambda;
        }
        let u = standard_normal(rng);
        confounder[i] = u;
        let delta = sd_delta * standard_normal(rng);
        let eps = sd_eps * standard_normal(rng);
        let xi = signal + u * spec.alpha + delta;
        x[(i, 0)] = xi;
        y[i] = xi * spec.beta_true + u * spec.alpha + eps;
    }
    Ok((Dataset::new(y, x, z)?, confounder))
}

pub fn draw_model_i<R: RngCore + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    if spec.model != Model::I {
        return Err(Error::InvalidScenario(format!("expected model I, got model {}", spec.model.label())));
    }
    draw_cases(spec, rng)
}

pub fn draw_model_ii<R: RngCore + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    if !matches!(spec.model, Model::II { .. }) {
        return Err(Error::InvalidScenario("expected model II, got model I".into()));
    }
    draw_cases(spec, rng)
}

pub fn draw<R: RngCore + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    draw_cases(spec, rng)
}

/// Dataset of Monte Carlo iteration `t`.
pub fn draw_iteration(spec: &ScenarioSpec, t: usize) -> Result<Dataset> {
    draw(spec, &mut stream(spec.seed, Domain::Simulation, t as u64))
}

/// Monte Carlo summary of one estimator over the empirical distribution of
/// its successful iterations (divisor `m`, the success count).
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub tag: EstimatorTag,
    pub iterations: usize,
    pub failures: usize,
    pub mean: DVector<f64>,
    pub bias: DVector<f64>,
    pub variance: DMatrix<f64>,
    pub mse: DMatrix<f64>,
    /// Mean of `||b_t - β||`.
    pub mean_abs_error: f64,
    /// Estimates by iteration; `None` where the estimator failed.
    pub draws: Vec<Option<DVector<f64>>>,
}

impl McSummary {
    pub fn from_draws(tag: EstimatorTag, beta_true: &DVector<f64>, draws: Vec<Option<DVector<f64>>>) -> Result<Self> {
        let iterations = draws.len();
        let ok: Vec<&DVector<f64>> = draws.iter().flatten().collect();
        if ok.is_empty() {
            return Err(Error::AllIterationsFailed { tag, iterations });
        }
        let k = beta_true.len();
        let m = ok.len() as f64;
        let mean = DVector::from_fn(k, |j, _| {
            let mut s = CompensatedSum::default();
            ok.iter().for_each(|b| s.add(b[j]));
            s.value() / m
        });
        let second = |center: &DVector<f64>| {
            DMatrix::from_fn(k, k, |a, c| {
                let mut s = CompensatedSum::default();
                ok.iter().for_each(|b| s.add((b[a] - center[a]) * (b[c] - center[c])));
                s.value() / m
            })
        };
        let variance = second(&mean);
        let mse = second(beta_true);
        let mut abs_err = CompensatedSum::default();
        ok.iter().for_each(|b| abs_err.add((*b - beta_true).norm()));
        Ok(Self {
            tag,
            iterations,
            failures: iterations - ok.len(),
            bias: &mean - beta_true,
            mean,
            variance,
            mse,
            mean_abs_error: abs_err.value() / m,
            draws,
        })
    }

    pub fn successes(&self) -> usize {
        self.iterations - self.failures
    }

    /// `||bias||`, the square-rooted trace of the squared bias.
    pub fn abs_bias(&self) -> f64 {
        self.bias.norm()
    }

    pub fn sd(&self) -> f64 {
        libm::sqrt(self.variance.trace().max(0.0))
    }

    pub fn rmse(&self) -> f64 {
        libm::sqrt(self.mse.trace().max(0.0))
    }

    /// Monte Carlo standard error of the mean estimate.
    pub fn bias_std_error(&self) -> f64 {
        self.sd() / libm::sqrt(self.successes() as f64)
    }

    /// Reported statistics in output order.
    pub fn statistics(&self) -> [(&'static str, f64); 3] {
        [("bias", self.abs_bias()), ("sd", self.sd()), ("rmse", self.rmse())]
    }
}

#[derive(Default)]
struct IterationFits {
    ols: Option<Result<FitResult>>,
    tsls: Option<Result<FitResult>>,
    jive: Option<Result<FitResult>>,
}

fn estimate_iteration(
    spec: &ScenarioSpec,
    t: usize,
    estimators: &[EstimatorTag],
    bootstrap_reps: usize,
) -> Result<Vec<Option<DVector<f64>>>> {
    let d = draw_iteration(spec, t)?;
    let needs = |tags: &[EstimatorTag]| estimators.iter().any(|e| tags.contains(e));
    use EstimatorTag::*;
    let mut fits = IterationFits::default();
    if needs(&[Ols, ClsTsls, ClsJive]) {
        fits.ols = Some(fit_ols(&d));
    }
    if needs(&[Tsls, Jive, ClsTsls, ClsJive]) {
        match project_onto(d.z()) {
            Ok(proj) => {
                if needs(&[Tsls, ClsTsls]) {
                    fits.tsls = Some(fit_tsls_with(&d, &proj));
                }
                if needs(&[Jive, ClsJive]) {
                    fits.jive = Some(fit_jive_with(&d, &proj));
                }
            }
            Err(e) => {
                fits.tsls = Some(Err(e.clone()));
                fits.jive = Some(Err(e));
            }
        }
    }
    let beta = |f: &Option<Result<FitResult>>| f.as_ref().and_then(|r| r.as_ref().ok()).map(|r| r.beta.clone());
    let out = estimators
        .iter()
        .map(|tag| match tag {
            Ols => beta(&fits.ols),
            Tsls => beta(&fits.tsls),
            Jive => beta(&fits.jive),
            ClsTsls => match (&fits.ols, &fits.tsls) {
                (Some(Ok(o)), Some(Ok(s))) => cls_from_fits(&d, o.clone(), s.clone()).ok().map(|r| r.beta_cls),
                _ => None,
            },
            ClsJive => match (&fits.ols, &fits.jive) {
                (Some(Ok(o)), Some(Ok(j))) => {
                    let plan = BootstrapPlan {
                        reps: bootstrap_reps,
                        seed: derive_seed(spec.seed, Domain::NestedBootstrap, t as u64),
                    };
                    bootstrap_pi_with(&d, UnbiasedEstimator::Jive, &plan, &Sequential)
                        .ok()
                        .map(|(pi, _)| combine(pi, &o.beta, &j.beta))
                }
                _ => None,
            },
        })
        .collect();
    Ok(out)
}

/// Run `spec.iterations` independent draws and summarize each requested
/// estimator. `bootstrap_reps` sets B for CLS-JIVE. Iterations where an
/// estimator fails are excluded from that estimator's summary and counted.
pub fn run_monte_carlo<E: Executor>(
    spec: &ScenarioSpec,
    estimators: &[EstimatorTag],
    bootstrap_reps: usize,
    exec: &E,
) -> Result<Vec<McSummary>> {
    spec.validate()?;
    if spec.iterations < 2 {
        return Err(Error::InvalidScenario(format!(
            "Monte Carlo needs at least 2 iterations (T = {})",
            spec.iterations
        )));
    }
    if estimators.contains(&EstimatorTag::ClsJive) {
        BootstrapPlan::new(bootstrap_reps, spec.seed)?;
    }
    let per_iteration = exec.map_indexed(spec.iterations, |t| estimate_iteration(spec, t, estimators, bootstrap_reps));
    let mut columns: Vec<Vec<Option<DVector<f64>>>> =
        estimators.iter().map(|_| Vec::with_capacity(spec.iterations)).collect();
    for row in per_iteration {
        for (col, value) in columns.iter_mut().zip(row?) {
            col.push(value);
        }
    }
    let beta_true = DVector::from_element(1, spec.beta_true);
    estimators
        .iter()
        .zip(columns)
        .map(|(&tag, draws)| McSummary::from_draws(tag, &beta_true, draws))
        .collect()
}
