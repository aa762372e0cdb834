//! Argument parsing and the three commands. Each `cmd_*` function builds
//! its report without touching stdout so it can be driven from tests;
//! [`run`] handles output, the RMSE table and exit codes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use convexiv_core::bootstrap::{bootstrap_statistic_with, bootstrap_variance_cls_with, DEFAULT_REPS};
use convexiv_core::cls::{fit_cls_with, UnbiasedEstimator};
use convexiv_core::estimators::{fit_jive, fit_ols, fit_tsls};
use convexiv_core::simulation::{run_monte_carlo, DEFAULT_BETA};
use convexiv_core::{BootstrapPlan, ClsChoice, Dataset, EstimatorTag, ScenarioSpec};
use serde::Deserialize;

use crate::error::{exit, CliError};
use crate::io::{load_csv, ColumnSpec, IoError};
use crate::parallel::RayonExecutor;
use crate::report::{
    sorted, quantile, BootstrapReport, CoefficientSummary, DataEcho, Distribution, EstimateRecord, EstimateReport,
    Format, McRecord, Report, RunInfo, ScenarioEcho, ScenarioResult, SimulateReport,
};

#[derive(Debug, Parser)]
#[command(name = "convexiv", version, about = "OLS, TSLS, JIVE and their MSE-minimizing convex combination")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the selected estimators to a CSV dataset.
    Estimate(EstimateArgs),
    /// Monte Carlo study over a grid of simulated scenarios.
    Simulate(SimulateArgs),
    /// Bootstrap distribution of a CLS estimator on a CSV dataset.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Endogenous predictors (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub endogenous: Vec<String>,
    /// Exogenous covariates, used as their own instruments.
    #[arg(long, value_delimiter = ',')]
    pub exogenous: Vec<String>,
    /// Excluded instruments.
    #[arg(long, value_delimiter = ',', required = true)]
    pub instruments: Vec<String>,
    /// Add a constant column to predictors and instruments.
    #[arg(long)]
    pub intercept: bool,
}

impl DataArgs {
    pub fn column_spec(&self) -> ColumnSpec {
        ColumnSpec {
            response: self.response.clone(),
            endogenous: self.endogenous.clone(),
            exogenous: self.exogenous.clone(),
            instruments: self.instruments.clone(),
            intercept: self.intercept,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub bootstrap_reps: usize,
    /// Worker threads; 0 picks the number of cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn parse_tag(s: &str) -> Result<EstimatorTag, String> {
    EstimatorTag::parse(s).ok_or_else(|| {
        let known: Vec<_> = EstimatorTag::ALL.iter().map(|t| t.as_str()).collect();
        format!("unknown estimator {s:?} (expected one of {})", known.join(", "))
    })
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_tag, default_value = "ols,tsls,cls-tsls")]
    pub estimators: Vec<EstimatorTag>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    I,
    Ii,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::I)]
    pub model: ModelArg,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.4])]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5])]
    pub gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [100, 250, 500])]
    pub n: Vec<usize>,
    /// Number of instruments for model II.
    #[arg(long, default_value_t = 10)]
    pub instrument_count: usize,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    /// CSV with columns alpha, gamma, n (and optionally l); replaces the
    /// --alpha/--gamma/--n product.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_tag, default_value = "ols,tsls,jive,cls-tsls")]
    pub estimators: Vec<EstimatorTag>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    ClsTsls,
    ClsJive,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Variant::ClsTsls)]
    pub variant: Variant,
    #[command(flatten)]
    pub run: RunArgs,
}

fn executor(threads: usize) -> Result<RayonExecutor, CliError> {
    RayonExecutor::new(threads).map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn load(data: &DataArgs) -> Result<(Dataset, DataEcho), CliError> {
    let columns = data.column_spec();
    let parts = load_csv(&data.input, &columns)?;
    let d = parts.assemble().map_err(IoError::from)?;
    let echo = DataEcho {
        input: data.input.display().to_string(),
        columns,
        n: d.n(),
        k: d.k(),
        l: d.l(),
    };
    Ok((d, echo))
}

fn plan(run: &RunArgs) -> Result<BootstrapPlan, CliError> {
    Ok(BootstrapPlan::new(run.bootstrap_reps, run.seed)?)
}

const MOMENT_WARNING: &str = "fewer than k + 2 instruments: TSLS moments may not exist in finite samples";

fn failure_warning(failures: usize, reps: usize) -> String {
    format!("{failures} of {reps} bootstrap replicates failed and were dropped")
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<EstimateReport, CliError> {
    if args.estimators.is_empty() {
        return Err(CliError::Usage("no estimators selected".into()));
    }
    let (d, data) = load(&args.data)?;
    let exec = executor(args.run.threads)?;
    let plan = plan(&args.run)?;
    let terms = data.columns.terms();
    let caveat = d.lacks_tsls_moments();

    let mut results = Vec::with_capacity(args.estimators.len());
    for &tag in &args.estimators {
        let mut warnings = Vec::new();
        let record = |coefficients: Vec<f64>, std_errors: Vec<f64>, se_method, pi_hat, failures, warnings| EstimateRecord {
            estimator: tag.as_str().to_string(),
            terms: terms.clone(),
            coefficients,
            std_errors,
            se_method,
            pi_hat,
            bootstrap_failures: failures,
            warnings,
        };
        let rec = match tag {
            EstimatorTag::Ols | EstimatorTag::Tsls => {
                let fit = if tag == EstimatorTag::Ols { fit_ols(&d)? } else { fit_tsls(&d)? };
                if tag == EstimatorTag::Tsls && caveat {
                    warnings.push(MOMENT_WARNING.to_string());
                }
                record(fit.beta.as_slice().to_vec(), fit.std_errors().as_slice().to_vec(), "analytic", None, None, warnings)
            }
            EstimatorTag::Jive => {
                let fit = fit_jive(&d)?;
                let boot = bootstrap_statistic_with(&d, &plan, &exec, |s| fit_jive(s).map(|f| f.beta))?;
                if boot.failures > 0 {
                    warnings.push(failure_warning(boot.failures, plan.reps));
                }
                record(
                    fit.beta.as_slice().to_vec(),
                    boot.std_errors().as_slice().to_vec(),
                    "bootstrap",
                    None,
                    Some(boot.failures),
                    warnings,
                )
            }
            EstimatorTag::ClsTsls | EstimatorTag::ClsJive => {
                let choice = cls_choice(tag, &plan);
                let fit = fit_cls_with(&d, &choice, &exec)?;
                let boot = bootstrap_variance_cls_with(&d, &plan, &choice, &exec)?;
                if fit.moment_caveat {
                    warnings.push(MOMENT_WARNING.to_string());
                }
                if fit.degenerate {
                    warnings.push("MSE criterion is flat in the proportion; OLS endpoint reported".to_string());
                }
                let mut failures = boot.failures;
                if let Some(inner) = &fit.bootstrap {
                    failures += inner.failures;
                }
                if failures > 0 {
                    warnings.push(failure_warning(failures, plan.reps));
                }
                record(
                    fit.beta_cls.as_slice().to_vec(),
                    boot.std_errors().as_slice().to_vec(),
                    "bootstrap",
                    Some(fit.pi_hat),
                    Some(failures),
                    warnings,
                )
            }
        };
        results.push(rec);
    }
    Ok(EstimateReport {
        run: RunInfo::new("estimate", args.run.seed, args.run.bootstrap_reps, None),
        data,
        results,
    })
}

fn cls_choice(tag: EstimatorTag, plan: &BootstrapPlan) -> ClsChoice {
    match tag {
        EstimatorTag::ClsJive => ClsChoice::Bootstrap {
            unbiased: UnbiasedEstimator::Jive,
            plan: *plan,
        },
        _ => ClsChoice::Tsls,
    }
}

#[derive(Debug, Deserialize)]
struct GridRow {
    alpha: f64,
    gamma: f64,
    n: usize,
    #[serde(default)]
    l: Option<usize>,
}

/// Scenarios from the grid file or the --alpha × --gamma × --n product.
pub fn scenarios(args: &SimulateArgs) -> Result<Vec<ScenarioSpec>, CliError> {
    let mut cells = Vec::new();
    if let Some(path) = &args.grid {
        let file = File::open(path).map_err(|source| IoError::Open {
            path: path.clone(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        for row in reader.deserialize::<GridRow>() {
            let row = row.map_err(IoError::from)?;
            cells.push((row.alpha, row.gamma, row.n, row.l.unwrap_or(args.instrument_count)));
        }
        if cells.is_empty() {
            return Err(CliError::Usage(format!("grid file {} has no rows", path.display())));
        }
    } else {
        for &alpha in &args.alpha {
            for &gamma in &args.gamma {
                for &n in &args.n {
                    cells.push((alpha, gamma, n, args.instrument_count));
                }
            }
        }
    }
    cells
        .into_iter()
        .map(|(alpha, gamma, n, l)| {
            let spec = match args.model {
                ModelArg::I => ScenarioSpec::model_i(alpha, gamma, n, args.iterations, args.run.seed),
                ModelArg::Ii => ScenarioSpec::model_ii(alpha, gamma, l, n, args.iterations, args.run.seed),
            }?;
            Ok(spec.with_beta(args.beta)?)
        })
        .collect()
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateReport, CliError> {
    if args.estimators.is_empty() {
        return Err(CliError::Usage("no estimators selected".into()));
    }
    let specs = scenarios(args)?;
    let exec = executor(args.run.threads)?;
    let mut out = Vec::with_capacity(specs.len());
    for spec in &specs {
        let summaries = run_monte_carlo(spec, &args.estimators, args.run.bootstrap_reps, &exec)?;
        out.push(ScenarioResult {
            scenario: ScenarioEcho {
                model: spec.model.label(),
                alpha: spec.alpha,
                gamma: spec.gamma,
                n: spec.n,
                l: spec.instruments(),
                beta: spec.beta_true,
                iterations: spec.iterations,
                seed: spec.seed,
            },
            estimators: summaries
                .iter()
                .map(|s| McRecord {
                    estimator: s.tag.as_str().to_string(),
                    bias: s.bias[0],
                    sd: s.sd(),
                    rmse: s.rmse(),
                    mean: s.mean[0],
                    mc_std_error: s.bias_std_error(),
                    failures: s.failures,
                })
                .collect(),
        });
    }
    Ok(SimulateReport {
        run: RunInfo::new("simulate", args.run.seed, args.run.bootstrap_reps, Some(args.iterations)),
        scenarios: out,
    })
}

pub fn cmd_bootstrap(args: &BootstrapArgs) -> Result<BootstrapReport, CliError> {
    let (d, data) = load(&args.data)?;
    let exec = executor(args.run.threads)?;
    let plan = plan(&args.run)?;
    let tag = match args.variant {
        Variant::ClsTsls => EstimatorTag::ClsTsls,
        Variant::ClsJive => EstimatorTag::ClsJive,
    };
    let choice = cls_choice(tag, &plan);
    let fit = fit_cls_with(&d, &choice, &exec)?;
    let boot = bootstrap_variance_cls_with(&d, &plan, &choice, &exec)?;
    let sd = boot.std_errors();
    let coefficients = data
        .columns
        .terms()
        .into_iter()
        .enumerate()
        .map(|(j, term)| {
            let column: Vec<f64> = boot.replicates.iter().map(|r| r[j]).collect();
            let s = sorted(&column);
            CoefficientSummary {
                term,
                estimate: fit.beta_cls[j],
                mean: boot.mean[j],
                sd: sd[j],
                ci_lower: quantile(&s, 0.025),
                ci_upper: quantile(&s, 0.975),
            }
        })
        .collect();
    Ok(BootstrapReport {
        run: RunInfo::new("bootstrap", args.run.seed, args.run.bootstrap_reps, None),
        data,
        variant: tag.as_str().to_string(),
        pi_hat: fit.pi_hat,
        failures: boot.failures,
        coefficients,
        pi_star: Distribution::of(&boot.pi_replicates),
    })
}

fn emit<R: Report>(report: &R, run: &RunArgs) -> Result<(), CliError> {
    match &run.output {
        Some(path) => write_file(report, run.format, path),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            report.write(run.format, &mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn write_file<R: Report>(report: &R, format: Format, path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    report.write(format, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn rmse_table(report: &SimulateReport) -> String {
    let tags: Vec<&str> = report
        .scenarios
        .first()
        .map(|s| s.estimators.iter().map(|e| e.estimator.as_str()).collect())
        .unwrap_or_default();
    let mut out = format!("{:<5} {:>7} {:>7} {:>6} {:>4}", "model", "alpha", "gamma", "n", "l");
    for t in &tags {
        out.push_str(&format!(" {t:>10}"));
    }
    out.push('\n');
    for s in &report.scenarios {
        let sc = &s.scenario;
        out.push_str(&format!(
            "{:<5} {:>7.3} {:>7.3} {:>6} {:>4}",
            sc.model, sc.alpha, sc.gamma, sc.n, sc.l
        ));
        for e in &s.estimators {
            out.push_str(&format!(" {:>10.5}", e.rmse));
        }
        out.push('\n');
    }
    out
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Estimate(args) => emit(&cmd_estimate(args)?, &args.run),
        Command::Simulate(args) => {
            let report = cmd_simulate(args)?;
            emit(&report, &args.run)?;
            // Keep stdout machine-readable when it carries the results.
            let table = rmse_table(&report);
            if args.run.output.is_some() {
                print!("RMSE\n{table}");
            } else {
                eprint!("RMSE\n{table}");
            }
            Ok(())
        }
        Command::Bootstrap(args) => emit(&cmd_bootstrap(args)?, &args.run),
    }
}

/// One-line JSON error record for stderr.
pub fn error_line(e: &CliError) -> String {
    serde_json::json!({
        "error": {
            "kind": e.kind(),
            "exit_code": e.exit_code(),
            "message": e.to_string(),
        }
    })
    .to_string()
}

pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}
