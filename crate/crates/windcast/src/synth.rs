//! Synthetic data generation from the model's own generative process, plus
//! independent closed-form oracles used to validate the Gibbs machinery.
//!
//! Covariates are simulated as positive AR(1) paths on the native 3 h knot
//! grid and spline-interpolated to hourly values with the same code the
//! ingest pipeline uses, so emitted CSV files reproduce the in-memory cases
//! exactly.

use chrono::{DateTime, Duration, TimeZone, Utc};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gwishart::PrecisionMatrix;
use crate::ingest::{self, ForecastCase, NwpGridRecord, ProductionRecord, TrainingWindow};
use crate::model::{transform, DesignMatrix, DEFAULT_POWERS};

/// Error-shape presets. `HeavyTailedErrors` swaps the Gaussian error vector
/// for a scaled Student-t to demonstrate the verification suite flagging
/// miscalibration; it is not part of the calibrated process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    WellSpecified,
    HeavyTailedErrors { df: f64 },
}

/// Configuration of the synthetic generator.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub t_len: usize,
    pub n_days: usize,
    /// Stacked coefficient blocks (intercept, x, x^3), length `3 * t_len`.
    pub beta_true: DVector<f64>,
    pub k_true: PrecisionMatrix,
    /// AR(1) coefficient of the wind-speed knot process (3 h resolution).
    pub knot_ar_coef: f64,
    pub knot_mean: f64,
    pub knot_innovation_sd: f64,
    pub start: DateTime<Utc>,
    pub seed: u64,
    pub scenario: Scenario,
}

impl SynthConfig {
    /// Wind-like defaults on a calibrated AR(1)-error process.
    pub fn calibrated(t_len: usize, n_days: usize, seed: u64) -> Self {
        let mut beta = DVector::zeros(3 * t_len);
        for t in 0..t_len {
            beta[t] = 2.0;
            beta[t_len + t] = 0.9;
            beta[2 * t_len + t] = 0.004;
        }
        SynthConfig {
            t_len,
            n_days,
            beta_true: beta,
            k_true: ar1_precision(t_len, 0.9, 1.2),
            knot_ar_coef: 0.75,
            knot_mean: 6.0,
            knot_innovation_sd: 1.6,
            start: Utc.with_ymd_and_hms(2011, 1, 1, 0, 0, 0).unwrap(),
            seed,
            scenario: Scenario::WellSpecified,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.beta_true.len() != 3 * self.t_len {
            return Err(Error::config(format!(
                "beta_true length {} != 3 * t_len {}",
                self.beta_true.len(),
                3 * self.t_len
            )));
        }
        if self.k_true.dim() != self.t_len {
            return Err(Error::config("k_true dimension must match t_len"));
        }
        if self.n_days == 0 || self.t_len == 0 {
            return Err(Error::config("n_days and t_len must be positive"));
        }
        if !(0.0..1.0).contains(&self.knot_ar_coef.abs()) {
            return Err(Error::config("knot AR coefficient must satisfy |a| < 1"));
        }
        Ok(())
    }
}

/// Precision matrix of a stationary AR(1) process with lag-one correlation
/// `phi` and the given marginal standard deviation (tridiagonal, band 1).
pub fn ar1_precision(t_len: usize, phi: f64, marginal_sd: f64) -> PrecisionMatrix {
    assert!(phi.abs() < 1.0, "|phi| must be < 1");
    assert!(marginal_sd > 0.0);
    if t_len == 1 {
        let k = DMatrix::from_element(1, 1, 1.0 / (marginal_sd * marginal_sd));
        return PrecisionMatrix::new(k, 1).unwrap();
    }
    let innov_var = marginal_sd * marginal_sd * (1.0 - phi * phi);
    let mut k = DMatrix::zeros(t_len, t_len);
    for i in 0..t_len {
        let interior = i > 0 && i + 1 < t_len;
        k[(i, i)] = if interior {
            (1.0 + phi * phi) / innov_var
        } else {
            1.0 / innov_var
        };
        if i + 1 < t_len {
            k[(i, i + 1)] = -phi / innov_var;
            k[(i + 1, i)] = -phi / innov_var;
        }
    }
    PrecisionMatrix::new(k, 1).expect("AR(1) precision is positive definite")
}

/// Simulate the wind-speed knot path for one day, clamped at zero.
fn simulate_knots<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> BTreeMap<u32, f64> {
    let stationary_sd =
        config.knot_innovation_sd / (1.0 - config.knot_ar_coef * config.knot_ar_coef).sqrt();
    let mut knots = BTreeMap::new();
    let mut level =
        config.knot_mean + stationary_sd * rng.sample::<f64, _>(StandardNormal);
    let mut lead = 0u32;
    loop {
        knots.insert(lead, level.max(0.0));
        // Cover [0, t_len] with the minimum knot count the spline accepts.
        if lead as usize >= config.t_len && knots.len() >= 4 {
            break;
        }
        lead += 3;
        level = config.knot_mean
            + config.knot_ar_coef * (level - config.knot_mean)
            + config.knot_innovation_sd * rng.sample::<f64, _>(StandardNormal);
    }
    knots
}

/// Draw one day's observation vector on the power scale.
fn simulate_power<R: Rng + ?Sized>(
    config: &SynthConfig,
    x_w: &DVector<f64>,
    chol_l: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let t = config.t_len;
    let design = DesignMatrix::new(x_w, &DEFAULT_POWERS);
    let mean = design.apply(&config.beta_true);
    let z = DVector::from_fn(t, |_, _| rng.sample(StandardNormal));
    let mut eps = crate::model::solve_lower_transpose(chol_l, &z);
    if let Scenario::HeavyTailedErrors { df } = config.scenario {
        let chi = ChiSquared::new(df).expect("valid degrees of freedom");
        let scale = (df / chi.sample(rng)).sqrt();
        eps *= scale;
    }
    DVector::from_fn(t, |i, _| (mean[i] + eps[i]).max(0.0).powi(3))
}

/// Generate daily forecast cases from the model's own process. Deterministic
/// given the seed.
pub fn generate(config: &SynthConfig) -> Result<Vec<ForecastCase>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let chol_l = config.k_true.cholesky().l();
    let mut cases = Vec::with_capacity(config.n_days);
    for day in 0..config.n_days {
        let knots = simulate_knots(config, &mut rng);
        let x_w = DVector::from_vec(ingest::interpolate_hourly(&knots, config.t_len)?);
        let y = simulate_power(config, &x_w, &chol_l, &mut rng);
        cases.push(ForecastCase {
            init_time: config.start + Duration::days(day as i64),
            x_w,
            y: Some(y),
        });
    }
    Ok(cases)
}

#[derive(Debug, Serialize)]
struct TruthRecord {
    t_len: usize,
    n_days: usize,
    seed: u64,
    beta_true: Vec<f64>,
    k_true_band: usize,
    k_true_entries: Vec<(usize, usize, f64)>,
    knot_ar_coef: f64,
    knot_mean: f64,
    knot_innovation_sd: f64,
}

/// Emit the generator's data in the ingest CSV formats (one grid point at
/// 52N, member 0, native 3 h steps) plus a `truth.json` with the generating
/// parameters. Requires `t_len <= 24` so that daily trajectories tile the
/// hourly production stream without overlap.
pub fn emit_csv(config: &SynthConfig, dir: &Path) -> Result<()> {
    if config.t_len > 24 {
        return Err(Error::config(
            "CSV emission needs t_len <= 24: daily 00 UTC origins would \
             overlap on a single hourly production stream",
        ));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let chol_l = config.k_true.cholesky().l();

    let mut nwp = Vec::new();
    let mut production = Vec::new();
    for day in 0..config.n_days {
        let init = config.start + Duration::days(day as i64);
        let knots = simulate_knots(config, &mut rng);
        let x_w = DVector::from_vec(ingest::interpolate_hourly(&knots, config.t_len)?);
        let y = simulate_power(config, &x_w, &chol_l, &mut rng);
        for (lead, v) in &knots {
            nwp.push(NwpGridRecord {
                init_time: init,
                lead_h: *lead,
                lat: 52.0,
                lon: 10.0,
                member: 0,
                ws100: *v,
            });
        }
        for t in 0..config.t_len {
            production.push(ProductionRecord {
                time: init + Duration::hours(t as i64 + 1),
                power_mw: y[t],
            });
        }
    }
    std::fs::create_dir_all(dir)?;
    ingest::write_nwp_csv(&dir.join("nwp.csv"), &nwp)?;
    ingest::write_production_csv(&dir.join("production.csv"), &production)?;
    let truth = TruthRecord {
        t_len: config.t_len,
        n_days: config.n_days,
        seed: config.seed,
        beta_true: config.beta_true.iter().copied().collect(),
        k_true_band: config.k_true.band(),
        k_true_entries: config.k_true.banded_entries().collect(),
        knot_ar_coef: config.knot_ar_coef,
        knot_mean: config.knot_mean,
        knot_innovation_sd: config.knot_innovation_sd,
    };
    let f = std::fs::File::create(dir.join("truth.json"))?;
    serde_json::to_writer_pretty(f, &truth)?;
    Ok(())
}

/// Closed-form normal-gamma posterior for the `T = 1`, independence-graph,
/// fixed-`n0` special case: an oracle for the Gibbs chain computed without
/// any of its machinery.
#[derive(Debug, Clone)]
pub struct ClosedFormPosteriorT1 {
    /// Posterior precision scale of the coefficients: `Diag(n0) + sum x x^T`.
    pub coef_precision_scale: DMatrix<f64>,
    pub coef_mean: DVector<f64>,
    /// Marginal posterior covariance of the coefficients.
    pub coef_cov: DMatrix<f64>,
    pub precision_shape: f64,
    pub precision_rate: f64,
    pub precision_mean: f64,
    pub precision_var: f64,
}

pub fn closed_form_posterior_t1(
    window: &TrainingWindow,
    n0: &[f64],
) -> Result<ClosedFormPosteriorT1> {
    closed_form_posterior_t1_from_cases(window.cases(), n0)
}

pub fn closed_form_posterior_t1_from_cases(
    cases: &[ForecastCase],
    n0: &[f64],
) -> Result<ClosedFormPosteriorT1> {
    let b = 1 + DEFAULT_POWERS.len();
    if n0.len() != b {
        return Err(Error::config(format!("n0 must have {b} entries")));
    }
    let mut lambda = DMatrix::from_diagonal(&DVector::from_row_slice(n0));
    let mut xy = DVector::zeros(b);
    let mut yy = 0.0;
    let n = cases.len();
    for case in cases {
        if case.len() != 1 {
            return Err(Error::config("closed-form oracle requires T = 1"));
        }
        let y = transform(case.y.as_ref().ok_or_else(|| {
            Error::data(format!("case {} has no observations", case.init_time))
        })?)?[0];
        let xv = case.x_w[0];
        let x = DVector::from_vec(vec![1.0, xv, xv.powi(3)]);
        lambda += &x * x.transpose();
        xy += x * y;
        yy += y * y;
    }
    let lambda_chol = nalgebra::Cholesky::new(lambda.clone())
        .ok_or_else(|| Error::numerical("coefficient precision scale not PD"))?;
    let mean = lambda_chol.solve(&xy);
    let rate = 0.5 * (1.0 + yy - mean.dot(&(&lambda * &mean)));
    let shape = 0.5 * (n as f64 + 3.0);
    // E[1/k] = rate / (shape - 1), finite whenever shape > 1.
    let inv_k_mean = rate / (shape - 1.0);
    Ok(ClosedFormPosteriorT1 {
        coef_cov: lambda_chol.inverse() * inv_k_mean,
        coef_precision_scale: lambda,
        coef_mean: mean,
        precision_shape: shape,
        precision_rate: rate,
        precision_mean: shape / rate,
        precision_var: shape / (rate * rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_design;
    use crate::stats;

    #[test]
    fn ar1_precision_inverts_to_ar1_covariance() {
        let t = 6;
        let (phi, sd) = (0.9, 1.2);
        let k = ar1_precision(t, phi, sd);
        let cov = k.inverse();
        for i in 0..t {
            for j in 0..t {
                let expected = sd * sd * phi.powi((i as i32 - j as i32).abs());
                assert!(
                    (cov[(i, j)] - expected).abs() < 1e-9,
                    "cov[{i},{j}] = {} vs {expected}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn generate_vanishing_noise_reproduces_mean_cubed() {
        let mut config = SynthConfig::calibrated(6, 3, 42);
        config.k_true = PrecisionMatrix::new(DMatrix::identity(6, 6) * 1e8, 0).unwrap();
        let cases = generate(&config).unwrap();
        for case in cases {
            let mean = build_design(&case.x_w).apply(&config.beta_true);
            let y = case.y.unwrap();
            for t in 0..6 {
                let expected = mean[t].max(0.0).powi(3);
                assert!(
                    (y[t] - expected).abs() < 1e-2 * expected.max(1.0),
                    "lead {t}: {} vs {expected}",
                    y[t]
                );
            }
        }
    }

    #[test]
    fn generate_zero_coefficients_concentrates_near_zero() {
        let mut config = SynthConfig::calibrated(8, 20, 43);
        config.beta_true = DVector::zeros(24);
        let cases = generate(&config).unwrap();
        let mut values = Vec::new();
        for case in cases {
            values.extend(case.y.unwrap().iter().copied());
        }
        // Half the cube-root-scale errors clamp to zero; the rest are small.
        let med = stats::median(&values);
        assert!(med < 1.0, "median {med}");
        assert!(stats::mean(&values) < 10.0);
    }

    #[test]
    fn generate_constant_covariate_hits_cube() {
        let mut config = SynthConfig::calibrated(6, 2, 44);
        config.knot_innovation_sd = 0.0;
        config.knot_mean = 5.0;
        config.k_true = PrecisionMatrix::new(DMatrix::identity(6, 6) * 1e10, 0).unwrap();
        let mut beta = DVector::zeros(18);
        for t in 0..6 {
            beta[6 + t] = 1.0;
        }
        config.beta_true = beta;
        let cases = generate(&config).unwrap();
        for case in cases {
            for t in 0..6 {
                assert!((case.x_w[t] - 5.0).abs() < 1e-12);
                let y = case.y.as_ref().unwrap()[t];
                assert!((y - 125.0).abs() < 0.1, "y = {y}");
            }
        }
    }

    #[test]
    fn generate_deterministic_given_seed() {
        let config = SynthConfig::calibrated(6, 5, 45);
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn emit_csv_round_trips_through_ingest() {
        let config = SynthConfig::calibrated(12, 4, 46);
        let dir = tempfile::tempdir().unwrap();
        emit_csv(&config, dir.path()).unwrap();

        let nwp = ingest::read_nwp_csv(&dir.path().join("nwp.csv")).unwrap();
        let production =
            ingest::read_production_csv(&dir.path().join("production.csv")).unwrap();
        let averaged = ingest::ensemble_mean(&nwp).unwrap();
        let by_cell = ingest::spatial_average(&averaged, 51.0).unwrap();
        let cases = ingest::assemble_cases(&by_cell, &production, 12).unwrap();

        let direct = generate(&config).unwrap();
        assert_eq!(cases.len(), direct.len());
        for (a, b) in cases.iter().zip(&direct) {
            assert_eq!(a.init_time, b.init_time);
            assert_eq!(a.x_w, b.x_w);
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn emit_csv_rejects_overlapping_trajectories() {
        let config = SynthConfig::calibrated(25, 3, 47);
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_csv(&config, dir.path()).is_err());
    }

    #[test]
    fn closed_form_zero_observations_returns_prior() {
        let post = closed_form_posterior_t1_from_cases(&[], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(post.precision_shape, 1.5);
        assert_eq!(post.precision_rate, 0.5);
        assert_eq!(post.precision_mean, 3.0);
        assert_eq!(post.coef_mean, DVector::zeros(3));
        assert_eq!(
            post.coef_precision_scale,
            DMatrix::identity(3, 3)
        );
    }

    #[test]
    fn closed_form_single_observation_by_hand() {
        let case = ForecastCase {
            init_time: Utc.with_ymd_and_hms(2012, 1, 1, 0, 0, 0).unwrap(),
            x_w: DVector::from_vec(vec![2.0]),
            y: Some(DVector::from_vec(vec![27.0])), // cube root 3
        };
        let n0 = [2.0, 1.0, 0.5];
        let post = closed_form_posterior_t1_from_cases(&[case], &n0).unwrap();
        // Lambda = Diag(n0) + x x^T with x = (1, 2, 8).
        let x = DVector::from_vec(vec![1.0, 2.0, 8.0]);
        let expected = DMatrix::from_diagonal(&DVector::from_row_slice(&n0)) + &x * x.transpose();
        assert_eq!(post.coef_precision_scale, expected);
        assert_eq!(post.precision_shape, 2.0);
        // mean solves Lambda mean = 3 x.
        let recovered = &expected * &post.coef_mean;
        for i in 0..3 {
            assert!((recovered[i] - 3.0 * x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn heavy_tail_scenario_inflates_extremes() {
        let t = 8;
        let mut base = SynthConfig::calibrated(t, 200, 48);
        base.scenario = Scenario::WellSpecified;
        let mut heavy = base.clone();
        heavy.scenario = Scenario::HeavyTailedErrors { df: 3.0 };
        let spread = |cases: Vec<ForecastCase>| {
            let mut residual_cubes = Vec::new();
            for c in cases {
                let mean = build_design(&c.x_w).apply(&base.beta_true);
                let y = c.y.unwrap();
                for i in 0..t {
                    residual_cubes.push((y[i].cbrt() - mean[i]).abs());
                }
            }
            stats::quantile(&residual_cubes, 0.999)
        };
        let q_base = spread(generate(&base).unwrap());
        let q_heavy = spread(generate(&heavy).unwrap());
        assert!(
            q_heavy > 1.5 * q_base,
            "tail quantile {q_heavy} vs {q_base}"
        );
    }
}
