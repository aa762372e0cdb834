//! Versioned output documents for the three commands, written either as
//! one JSON document or as a long-format CSV table. Every CSV row and the
//! JSON header carry the version, seed and replicate/iteration counts
//! needed to rerun the command.

use std::io::Write;

use serde::Serialize;

use crate::error::CliError;
use crate::io::ColumnSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Linear-interpolation (type 7) quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub schema: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub bootstrap_reps: usize,
    pub iterations: Option<usize>,
}

impl RunInfo {
    pub fn new(command: &'static str, seed: u64, bootstrap_reps: usize, iterations: Option<usize>) -> Self {
        Self {
            schema: match command {
                "estimate" => "convexiv.estimate/1",
                "simulate" => "convexiv.simulate/1",
                _ => "convexiv.bootstrap/1",
            },
            version: VERSION,
            command,
            seed,
            bootstrap_reps,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataEcho {
    pub input: String,
    pub columns: ColumnSpec,
    pub n: usize,
    pub k: usize,
    pub l: usize,
}

impl DataEcho {
    fn header() -> [&'static str; 10] {
        ["input", "response", "endogenous", "exogenous", "instruments", "intercept", "n", "k", "l", ""]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.input.clone(),
            self.columns.response.clone(),
            self.columns.endogenous.join(";"),
            self.columns.exogenous.join(";"),
            self.columns.instruments.join(";"),
            self.columns.intercept.to_string(),
            self.n.to_string(),
            self.k.to_string(),
            self.l.to_string(),
        ]
    }
}

fn run_header() -> [&'static str; 6] {
    ["schema", "version", "command", "seed", "bootstrap_reps", "iterations"]
}

fn run_cells(run: &RunInfo) -> Vec<String> {
    vec![
        run.schema.to_string(),
        run.version.to_string(),
        run.command.to_string(),
        run.seed.to_string(),
        run.bootstrap_reps.to_string(),
        run.iterations.map(|t| t.to_string()).unwrap_or_default(),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub estimator: String,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `analytic` or `bootstrap`.
    pub se_method: &'static str,
    pub pi_hat: Option<f64>,
    pub bootstrap_failures: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub run: RunInfo,
    pub data: DataEcho,
    pub results: Vec<EstimateRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEcho {
    pub model: &'static str,
    pub alpha: f64,
    pub gamma: f64,
    pub n: usize,
    pub l: usize,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McRecord {
    pub estimator: String,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub mean: f64,
    pub mc_std_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub scenario: ScenarioEcho,
    pub estimators: Vec<McRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub run: RunInfo,
    pub scenarios: Vec<ScenarioResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientSummary {
    pub term: String,
    pub estimate: f64,
    pub mean: f64,
    pub sd: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        let s = sorted(values);
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self {
            count: values.len(),
            mean,
            sd: var.sqrt(),
            min: s[0],
            q025: quantile(&s, 0.025),
            median: quantile(&s, 0.5),
            q975: quantile(&s, 0.975),
            max: s[s.len() - 1],
        }
    }

    fn rows(&self) -> [(&'static str, f64); 8] {
        [
            ("count", self.count as f64),
            ("mean", self.mean),
            ("sd", self.sd),
            ("min", self.min),
            ("q025", self.q025),
            ("median", self.median),
            ("q975", self.q975),
            ("max", self.max),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapReport {
    pub run: RunInfo,
    pub data: DataEcho,
    pub variant: String,
    pub pi_hat: f64,
    pub failures: usize,
    pub coefficients: Vec<CoefficientSummary>,
    pub pi_star: Distribution,
}

pub trait Report: Serialize {
    fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError>;

    fn write<W: Write>(&self, format: Format, mut out: W) -> Result<(), CliError> {
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, self)?;
                writeln!(out)?;
                Ok(())
            }
            Format::Csv => self.write_csv(out),
        }
    }
}

fn header_row(parts: &[&[&str]]) -> Vec<String> {
    parts
        .iter()
        .flat_map(|p| p.iter())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

impl Report for EstimateReport {
    fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header_row(&[
            &run_header(),
            &DataEcho::header(),
            &["estimator", "term", "estimate", "std_error", "se_method", "pi_hat", "bootstrap_failures", "warnings"],
        ]))?;
        let prefix: Vec<String> = run_cells(&self.run).into_iter().chain(self.data.cells()).collect();
        for r in &self.results {
            for (j, term) in r.terms.iter().enumerate() {
                let mut row = prefix.clone();
                row.extend([
                    r.estimator.clone(),
                    term.clone(),
                    num(r.coefficients[j]),
                    num(r.std_errors[j]),
                    r.se_method.to_string(),
                    opt_num(r.pi_hat),
                    r.bootstrap_failures.map(|f| f.to_string()).unwrap_or_default(),
                    r.warnings.join("; "),
                ]);
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl Report for SimulateReport {
    fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "version", "model", "alpha", "gamma", "n", "l", "beta", "T", "B", "seed", "estimator", "statistic", "value",
        ])?;
        for s in &self.scenarios {
            let sc = &s.scenario;
            for e in &s.estimators {
                for (stat, value) in [("bias", e.bias), ("sd", e.sd), ("rmse", e.rmse)] {
                    w.write_record([
                        VERSION.to_string(),
                        sc.model.to_string(),
                        format!("{:?}", sc.alpha),
                        format!("{:?}", sc.gamma),
                        sc.n.to_string(),
                        sc.l.to_string(),
                        format!("{:?}", sc.beta),
                        sc.iterations.to_string(),
                        self.run.bootstrap_reps.to_string(),
                        sc.seed.to_string(),
                        e.estimator.clone(),
                        stat.to_string(),
                        num(value),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl Report for BootstrapReport {
    fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header_row(&[
            &run_header(),
            &DataEcho::header(),
            &["variant", "failures", "section", "term", "statistic", "value"],
        ]))?;
        let mut prefix: Vec<String> = run_cells(&self.run).into_iter().chain(self.data.cells()).collect();
        prefix.extend([self.variant.clone(), self.failures.to_string()]);
        let mut emit = |section: &str, term: &str, stat: &str, value: f64| {
            let mut row = prefix.clone();
            row.extend([section.to_string(), term.to_string(), stat.to_string(), num(value)]);
            w.write_record(&row)
        };
        for c in &self.coefficients {
            for (stat, value) in [
                ("estimate", c.estimate),
                ("mean", c.mean),
                ("sd", c.sd),
                ("ci_lower", c.ci_lower),
                ("ci_upper", c.ci_upper),
            ] {
                emit("coefficient", &c.term, stat, value)?;
            }
        }
        emit("pi", "", "pi_hat", self.pi_hat)?;
        for (stat, value) in self.pi_star.rows() {
            emit("pi_star", "", stat, value)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, 0.08] {
            let s = num(v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 5.0);
        assert_eq!(quantile(&s, 0.025), 1.1);
    }

    #[test]
    fn distribution_summary() {
        let d = Distribution::of(&[0.2, 0.4, 0.6]);
        assert_eq!(d.count, 3);
        assert!((d.mean - 0.4).abs() < 1e-15);
        assert!((d.sd - 0.2).abs() < 1e-15);
        assert_eq!(d.median, 0.4);
    }
}
