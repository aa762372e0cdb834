//! Large-sample checks of the simulation designs and Monte Carlo summaries.

use convexiv_core::estimators::{fit_ols, EstimatorTag};
use convexiv_core::exec::Sequential;
use convexiv_core::rng::{stream, Domain};
use convexiv_core::simulation::{draw, run_monte_carlo};
use convexiv_core::{Dataset, ScenarioSpec};
use nalgebra::DMatrix;

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

#[test]
fn no_confounding_keeps_var_y_at_one() {
    let spec = ScenarioSpec::model_i(0.0, 0.3, 1_000_000, 1, 12).unwrap();
    assert_eq!(spec.sigma2_eps(), 0.75);
    let d = draw(&spec, &mut stream(12, Domain::Simulation, 0)).unwrap();
    let vy = variance(d.y().as_slice());
    assert!((vy - 1.0).abs() <= 0.01, "{vy}");
}

#[test]
fn model_ii_var_x_and_multiple_correlation() {
    let (alpha, gamma, l) = (0.4, 0.5, 10);
    let spec = ScenarioSpec::model_ii(alpha, gamma, l, 1_000_000, 1, 13).unwrap();
    let d = draw(&spec, &mut stream(13, Domain::Simulation, 0)).unwrap();
    let vx = variance(d.x().as_slice());
    assert!((vx - 1.0).abs() <= 0.01, "{vx}");

    // R of X on Z (the instruments are centred in the design).
    let fitted = Dataset::new(d.x().column(0).into_owned(), d.z().clone(), DMatrix::clone(d.z())).unwrap();
    let fit = fit_ols(&fitted).unwrap();
    let xhat = d.z() * &fit.beta;
    let r = (variance(xhat.as_slice()) / vx).sqrt();
    assert!((r - gamma).abs() <= 0.02, "{r}");
}

#[test]
fn no_confounding_means_no_bias() {
    let spec = ScenarioSpec::model_i(0.0, 0.5, 200, 2_000, 14).unwrap();
    let tags = [EstimatorTag::Ols, EstimatorTag::Tsls, EstimatorTag::ClsTsls];
    for s in run_monte_carlo(&spec, &tags, 0, &Sequential).unwrap() {
        assert!(s.abs_bias() < 3.0 * s.bias_std_error(), "{}: {} vs {}", s.tag, s.abs_bias(), s.bias_std_error());
    }
}

#[test]
fn ols_has_smaller_monte_carlo_variance_across_scenarios() {
    for (alpha, gamma, n) in [(0.0, 0.1, 100), (0.25, 0.3, 100), (0.4, 0.5, 250), (0.55, 0.7, 60)] {
        let spec = ScenarioSpec::model_i(alpha, gamma, n, 500, 15).unwrap();
        let s = run_monte_carlo(&spec, &[EstimatorTag::Ols, EstimatorTag::Tsls], 0, &Sequential).unwrap();
        assert!(s[0].variance[(0, 0)] <= s[1].variance[(0, 0)], "({alpha}, {gamma}, {n})");
    }
}

#[test]
fn jive_beats_tsls_with_many_strong_instruments() {
    let spec = ScenarioSpec::model_ii(0.4, 0.5, 10, 500, 10_000, 16).unwrap();
    let s = run_monte_carlo(&spec, &[EstimatorTag::Tsls, EstimatorTag::Jive], 0, &Sequential).unwrap();
    println!("RMSE TSLS {:.5} JIVE {:.5}", s[0].rmse(), s[1].rmse());
    assert!(s[1].rmse() < s[0].rmse());
}
