//! Run orchestration: configuration, the fit / predict / rolling-backtest
//! workflow, checkpoints, score reports and leakage audits.
//!
//! A backtest fits one model per forecast day on the rolling window, draws a
//! predictive ensemble, optionally re-correlates it with a Gaussian copula
//! fitted on the window days' own out-of-sample PIT scores, and aggregates
//! verification scores. Days fan out to a worker pool; every random stream is
//! keyed by (base seed, day, purpose) so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::copula;
use crate::error::{Error, Result};
use crate::gwishart::Graph;
use crate::ingest::{self, ForecastCase, TrainingWindow};
use crate::model::{self, ModelConfig, PosteriorDraw, Postproc, PredictiveEnsemble};
use crate::verify::{self, ScoreAccumulator, ScoreReport};

/// Model variants: error/coefficient precision structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    IndErrors,
    FullyInd,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::IndErrors => "ind_errors",
            Variant::FullyInd => "fully_ind",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "ind_errors" => Ok(Variant::IndErrors),
            "fully_ind" => Ok(Variant::FullyInd),
            other => Err(Error::config(format!(
                "unknown variant {other} (expected full | ind_errors | fully_ind)"
            ))),
        }
    }

    pub fn all() -> [Variant; 3] {
        [Variant::Full, Variant::IndErrors, Variant::FullyInd]
    }
}

/// Complete run configuration. Defaults follow the reference experimental
/// setup: 72 h horizon, 100-day rolling window, latitude cut at 51 degrees.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub nwp_path: PathBuf,
    pub production_path: PathBuf,
    pub output_dir: PathBuf,
    pub t_len: usize,
    pub window_days: usize,
    pub lat_min: f64,
    pub variant: Variant,
    pub postproc: Postproc,
    pub n_gibbs: usize,
    pub n_burn: usize,
    pub m_pred: usize,
    /// Band of the latent copula graph (1 = AR(1)).
    pub copula_band: usize,
    /// Minimum number of cached out-of-sample score days before the copula
    /// stage is fitted for a target.
    pub copula_min_scores: usize,
    pub eval_start: Option<DateTime<Utc>>,
    pub eval_end: Option<DateTime<Utc>>,
    pub seed: u64,
    pub keep_ensembles: bool,
}

impl RunConfig {
    pub fn new(nwp: impl Into<PathBuf>, production: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            nwp_path: nwp.into(),
            production_path: production.into(),
            output_dir: out.into(),
            t_len: 72,
            window_days: 100,
            lat_min: 51.0,
            variant: Variant::Full,
            postproc: Postproc::None,
            n_gibbs: 3000,
            n_burn: 1000,
            m_pred: 999,
            copula_band: 1,
            copula_min_scores: 30,
            eval_start: None,
            eval_end: None,
            seed: 20110101,
            keep_ensembles: false,
        }
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        let mut mc = match self.variant {
            Variant::Full => ModelConfig::full(self.t_len),
            Variant::IndErrors => ModelConfig::ind_errors(self.t_len),
            Variant::FullyInd => ModelConfig::fully_ind(self.t_len),
        };
        mc.n_gibbs = self.n_gibbs;
        mc.n_burn = self.n_burn;
        mc.m_pred = self.m_pred;
        mc.seed = seed;
        mc
    }

    /// Hash over the statistically relevant settings (paths excluded so the
    /// same experiment hashes identically wherever it runs).
    pub fn config_hash(&self) -> String {
        let key = format!(
            "t={} window={} lat={} variant={} postproc={} gibbs={}/{} m={} band={} min_scores={} \
             eval=[{:?},{:?}] seed={}",
            self.t_len,
            self.window_days,
            self.lat_min,
            self.variant.as_str(),
            self.postproc.as_str(),
            self.n_gibbs,
            self.n_burn,
            self.m_pred,
            self.copula_band,
            self.copula_min_scores,
            self.eval_start,
            self.eval_end,
            self.seed
        );
        let mut hasher = Sha256::new();
        hasher.update(key.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Purpose tags for per-day random streams.
#[derive(Clone, Copy)]
enum StreamPurpose {
    Fit = 1,
    Predict = 2,
    Copula = 3,
    ScoreUnivariate = 4,
    ScoreCopula = 5,
}

fn day_seed(base: u64, init_time: DateTime<Utc>, purpose: StreamPurpose) -> u64 {
    let day = init_time.timestamp().div_euclid(86_400) as u64;
    splitmix64(base ^ day.wrapping_mul(0x9E3779B97F4A7C15) ^ (purpose as u64) << 56)
}

fn scoring_rng(base: u64, init_time: DateTime<Utc>, copula: bool) -> ChaCha8Rng {
    let purpose = if copula {
        StreamPurpose::ScoreCopula
    } else {
        StreamPurpose::ScoreUnivariate
    };
    ChaCha8Rng::seed_from_u64(day_seed(base, init_time, purpose))
}

/// Full ingest chain: NWP CSV -> ensemble mean -> spatial average -> hourly
/// interpolation -> production alignment.
pub fn load_cases(config: &RunConfig) -> Result<Vec<ForecastCase>> {
    let nwp = ingest::read_nwp_csv(&config.nwp_path)?;
    if nwp.is_empty() {
        return Err(Error::data(format!(
            "no NWP records in {}",
            config.nwp_path.display()
        )));
    }
    let production = ingest::read_production_csv(&config.production_path)?;
    let averaged = ingest::ensemble_mean(&nwp)?;
    let by_cell = ingest::spatial_average(&averaged, config.lat_min)?;
    ingest::assemble_cases(&by_cell, &production, config.t_len)
}

/// The training window for `target`: the most recent `window_days` observed
/// cases strictly preceding it.
fn window_for_target(
    observed: &[ForecastCase],
    target: &ForecastCase,
    window_days: usize,
) -> Result<TrainingWindow> {
    let preceding: Vec<ForecastCase> = observed
        .iter()
        .filter(|c| c.init_time < target.init_time)
        .cloned()
        .collect();
    if preceding.len() < window_days {
        let hint = if observed.len() > window_days {
            format!(
                "; earliest feasible target is {}",
                observed[window_days].init_time
            )
        } else {
            String::new()
        };
        return Err(Error::data(format!(
            "insufficient history for target {}: need {window_days} observed cases, have {}{hint}",
            target.init_time,
            preceding.len()
        )));
    }
    let start = preceding.len() - window_days;
    TrainingWindow::new(preceding[start..].to_vec(), target.clone())
}

/// Evenly thin retained draws down to `m`.
fn thin_draws(draws: Vec<PosteriorDraw>, m: usize) -> Vec<PosteriorDraw> {
    if draws.len() <= m {
        return draws;
    }
    let n = draws.len();
    (0..m).map(|i| draws[i * n / m].clone()).collect()
}

#[derive(Debug, Serialize)]
struct FitLog {
    init_time: DateTime<Utc>,
    variant: &'static str,
    n_draws: usize,
    n_train: usize,
    beta_mean_norm: f64,
    precision_diag_mean: f64,
    n0_mean: Vec<f64>,
    config_hash: String,
}

fn summarize_draws(draws: &[PosteriorDraw]) -> (f64, f64, Vec<f64>) {
    let n = draws.len() as f64;
    let beta_norm = draws.iter().map(|d| d.beta.norm()).sum::<f64>() / n;
    let diag_mean = draws
        .iter()
        .map(|d| d.k.matrix().diagonal().mean())
        .sum::<f64>()
        / n;
    let b = draws[0].n0.len();
    let mut n0 = vec![0.0; b];
    for d in draws {
        for (i, v) in d.n0.iter().enumerate() {
            n0[i] += v / n;
        }
    }
    (beta_norm, diag_mean, n0)
}

fn checkpoint_path(config: &RunConfig, init_time: DateTime<Utc>) -> PathBuf {
    config.output_dir.join("checkpoints").join(format!(
        "ckpt_{}_{}.csv",
        config.variant.as_str(),
        init_time.format("%Y%m%dT%H%M%SZ")
    ))
}

/// Fit the configured model for one forecast origin and write a posterior
/// checkpoint plus a fit log. Returns the checkpoint path.
pub fn run_fit(config: &RunConfig, init_time: DateTime<Utc>) -> Result<PathBuf> {
    let cases = load_cases(config)?;
    let observed: Vec<ForecastCase> = cases.iter().filter(|c| c.y.is_some()).cloned().collect();
    let target = cases
        .iter()
        .find(|c| c.init_time == init_time)
        .ok_or_else(|| Error::data(format!("no covariates for init time {init_time}")))?;
    let window = window_for_target(&observed, target, config.window_days)?;

    let seed = day_seed(config.seed, init_time, StreamPurpose::Fit);
    let mc = config.model_config(seed);
    let draws = thin_draws(model::gibbs_fit(&window, &mc)?, config.m_pred);

    let path = checkpoint_path(config, init_time);
    std::fs::create_dir_all(path.parent().unwrap())?;
    model::write_checkpoint(&path, &draws, seed)?;

    let (beta_mean_norm, precision_diag_mean, n0_mean) = summarize_draws(&draws);
    let log = FitLog {
        init_time,
        variant: config.variant.as_str(),
        n_draws: draws.len(),
        n_train: window.len(),
        beta_mean_norm,
        precision_diag_mean,
        n0_mean,
        config_hash: config.config_hash(),
    };
    let log_path = path.with_extension("log.json");
    serde_json::to_writer_pretty(std::fs::File::create(log_path)?, &log)?;
    Ok(path)
}

fn load_or_fit_draws(
    config: &RunConfig,
    observed: &[ForecastCase],
    target: &ForecastCase,
) -> Result<Vec<PosteriorDraw>> {
    let path = checkpoint_path(config, target.init_time);
    if path.exists() {
        return model::read_checkpoint(&path);
    }
    let window = window_for_target(observed, target, config.window_days)?;
    let seed = day_seed(config.seed, target.init_time, StreamPurpose::Fit);
    let mc = config.model_config(seed);
    Ok(thin_draws(model::gibbs_fit(&window, &mc)?, config.m_pred))
}

fn predict_for_target(
    config: &RunConfig,
    draws: &[PosteriorDraw],
    target: &ForecastCase,
) -> Result<PredictiveEnsemble> {
    let mc = config.model_config(0);
    let mut rng = ChaCha8Rng::seed_from_u64(day_seed(
        config.seed,
        target.init_time,
        StreamPurpose::Predict,
    ));
    model::predict(draws, &target.x_w, target.init_time, &mc, &mut rng)
}

/// Predict one forecast origin from its checkpoint (fitting it if absent).
/// Writes the univariate ensemble CSV and, with copula post-processing
/// configured, the re-correlated ensemble next to it. Returns the written
/// paths.
pub fn run_predict(config: &RunConfig, init_time: DateTime<Utc>) -> Result<Vec<PathBuf>> {
    let cases = load_cases(config)?;
    let observed: Vec<ForecastCase> = cases.iter().filter(|c| c.y.is_some()).cloned().collect();
    let target = cases
        .iter()
        .find(|c| c.init_time == init_time)
        .ok_or_else(|| Error::data(format!("no covariates for init time {init_time}")))?
        .clone();

    let draws = load_or_fit_draws(config, &observed, &target)?;
    let ensemble = predict_for_target(config, &draws, &target)?;

    let pred_dir = config.output_dir.join("predictions");
    std::fs::create_dir_all(&pred_dir)?;
    let stamp = init_time.format("%Y%m%dT%H%M%SZ");
    let univariate_path = pred_dir.join(format!("ens_{stamp}_univariate.csv"));
    model::write_ensemble_csv(&univariate_path, &ensemble)?;
    let mut written = vec![univariate_path];

    if config.postproc == Postproc::Copula {
        // Out-of-sample marginal predictions for the window days feed the
        // latent scores; each window day is fitted on its own earlier window.
        let window = window_for_target(&observed, &target, config.window_days)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for case in window.cases() {
            match load_or_fit_draws(config, &observed, case) {
                Ok(day_draws) => {
                    let day_ens = predict_for_target(config, &day_draws, case)?;
                    rows.push(copula::latent_score_row(
                        &day_ens,
                        case.y.as_ref().expect("window cases observed"),
                    ));
                }
                Err(e) => {
                    log::warn!(
                        "copula: skipping window day {} (no out-of-sample fit: {e})",
                        case.init_time
                    );
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::data(
                "copula stage needs at least one window day with an out-of-sample fit",
            ));
        }
        let scores = copula::scores_from_rows(&rows);
        let fit = copula::fit_copula(&scores, Graph::banded(config.t_len, config.copula_band))?;
        let mut rng = ChaCha8Rng::seed_from_u64(day_seed(
            config.seed,
            init_time,
            StreamPurpose::Copula,
        ));
        let recorrelated = copula::apply_copula(&fit, &ensemble, &mut rng)?;
        let copula_path = pred_dir.join(format!("ens_{stamp}_copula.csv"));
        model::write_ensemble_csv(&copula_path, &recorrelated)?;
        written.push(copula_path);
    }
    Ok(written)
}

/// One leakage-audit row: training data must end strictly before the target.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRecord {
    pub target_init: DateTime<Utc>,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub n_train: usize,
}

/// Backtest result for one (variant, postproc) combination.
pub struct ComboOutcome {
    pub variant: Variant,
    pub postproc: Postproc,
    pub report: ScoreReport,
    pub out_dir: PathBuf,
    pub scored_days: Vec<DateTime<Utc>>,
    pub skipped_days: Vec<(DateTime<Utc>, String)>,
    pub audit: Vec<AuditRecord>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    variant: &'a str,
    postproc: &'a str,
    config_hash: String,
    version: &'a str,
    t_len: usize,
    window_days: usize,
    n_days_scored: usize,
    seed: u64,
}

/// Per-day artifacts produced by the fit/predict phase.
struct DayArtifacts {
    init_time: DateTime<Utc>,
    ensemble: PredictiveEnsemble,
    score_row: Vec<f64>,
    audit: AuditRecord,
}

/// Rolling backtest over every eligible target day for the configured
/// (variant, postproc) pair.
pub fn run_backtest(config: &RunConfig) -> Result<ComboOutcome> {
    let combos = [(config.variant, config.postproc)];
    run_backtest_multi(config, &combos).map(|mut v| v.remove(0))
}

/// Backtest several (variant, postproc) combinations over the same data,
/// sharing one model fit per (variant, day).
pub fn run_backtest_multi(
    config: &RunConfig,
    combos: &[(Variant, Postproc)],
) -> Result<Vec<ComboOutcome>> {
    let cases = load_cases(config)?;
    let observed: Vec<ForecastCase> = cases.iter().filter(|c| c.y.is_some()).cloned().collect();
    if observed.len() <= config.window_days {
        return Err(Error::data(format!(
            "insufficient history: {} observed cases for window {}",
            observed.len(),
            config.window_days
        )));
    }
    let mut skipped_ingest: Vec<(DateTime<Utc>, String)> = cases
        .iter()
        .filter(|c| c.y.is_none())
        .map(|c| (c.init_time, "incomplete production".to_string()))
        .collect();
    skipped_ingest.sort_by_key(|s| s.0);

    // Eligible targets: observed cases with a full window of predecessors.
    let eligible: Vec<ForecastCase> = observed[config.window_days..].to_vec();
    let in_range = |t: DateTime<Utc>| {
        config.eval_start.is_none_or(|s| t >= s) && config.eval_end.is_none_or(|e| t <= e)
    };
    let eval: Vec<ForecastCase> = eligible
        .iter()
        .filter(|c| in_range(c.init_time))
        .cloned()
        .collect();
    if eval.is_empty() {
        return Err(Error::data("no eligible target days in the evaluation range"));
    }

    // Copula combos need out-of-sample scores for days preceding the first
    // evaluation target: predict (but do not score) up to window_days of
    // warm-up targets.
    let needs_copula = combos.iter().any(|(_, p)| *p == Postproc::Copula);
    let first_eval = eval[0].init_time;
    let warmup: Vec<ForecastCase> = if needs_copula {
        let before: Vec<&ForecastCase> = eligible
            .iter()
            .filter(|c| c.init_time < first_eval)
            .collect();
        let start = before.len().saturating_sub(config.window_days);
        before[start..].iter().map(|c| (*c).clone()).collect()
    } else {
        Vec::new()
    };

    let mut day_list: Vec<ForecastCase> = warmup;
    day_list.extend(eval.iter().cloned());
    let eval_start_idx = day_list.len() - eval.len();

    let mut outcomes = Vec::new();
    let mut variant_groups: BTreeMap<&str, Vec<(Variant, Postproc)>> = BTreeMap::new();
    for combo in combos {
        variant_groups
            .entry(combo.0.as_str())
            .or_default()
            .push(*combo);
    }

    for (_, group) in variant_groups {
        let variant = group[0].0;
        let mut vconfig = config.clone();
        vconfig.variant = variant;

        // Phase 1: fit + predict every needed day in parallel.
        let artifacts: Vec<DayArtifacts> = day_list
            .par_iter()
            .map(|target| -> Result<DayArtifacts> {
                let window = window_for_target(&observed, target, config.window_days)?;
                let window_start = window.cases().first().unwrap().init_time;
                let window_end = window.cases().last().unwrap().init_time;
                assert!(window_end < target.init_time, "training window leaks");
                let seed = day_seed(config.seed, target.init_time, StreamPurpose::Fit);
                let mc = vconfig.model_config(seed);
                let draws = thin_draws(model::gibbs_fit(&window, &mc)?, config.m_pred);
                let ensemble = predict_for_target(&vconfig, &draws, target)?;
                let score_row = copula::latent_score_row(
                    &ensemble,
                    target.y.as_ref().expect("eligible targets are observed"),
                );
                Ok(DayArtifacts {
                    init_time: target.init_time,
                    ensemble,
                    score_row,
                    audit: AuditRecord {
                        target_init: target.init_time,
                        window_start,
                        window_end,
                        n_train: window.len(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;

        // Phase 2: per combo, optionally re-correlate, then score in day order.
        for (variant, postproc) in &group {
            let mut acc = ScoreAccumulator::new(config.t_len);
            let mut scored_days = Vec::new();
            let mut skipped = skipped_ingest.clone();

            let day_ensembles: Vec<Option<PredictiveEnsemble>> = artifacts
                [eval_start_idx..]
                .par_iter()
                .enumerate()
                .map(|(offset, day)| -> Result<Option<PredictiveEnsemble>> {
                    let idx = eval_start_idx + offset;
                    match postproc {
                        Postproc::None => Ok(Some(day.ensemble.clone())),
                        Postproc::Copula => {
                            let lo = idx.saturating_sub(config.window_days);
                            let rows: Vec<Vec<f64>> = artifacts[lo..idx]
                                .iter()
                                .map(|d| d.score_row.clone())
                                .collect();
                            if rows.len() < config.copula_min_scores.max(1) {
                                return Ok(None);
                            }
                            let scores = copula::scores_from_rows(&rows);
                            let fit = copula::fit_copula(
                                &scores,
                                Graph::banded(config.t_len, config.copula_band),
                            )?;
                            let mut rng = ChaCha8Rng::seed_from_u64(day_seed(
                                config.seed,
                                day.init_time,
                                StreamPurpose::Copula,
                            ));
                            Ok(Some(copula::apply_copula(&fit, &day.ensemble, &mut rng)?))
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;

            let mut audit = Vec::new();
            for (day, maybe_ens) in artifacts[eval_start_idx..].iter().zip(day_ensembles) {
                let Some(ensemble) = maybe_ens else {
                    skipped.push((
                        day.init_time,
                        format!(
                            "fewer than {} out-of-sample score days for the copula stage",
                            config.copula_min_scores
                        ),
                    ));
                    continue;
                };
                let target = eval
                    .iter()
                    .find(|c| c.init_time == day.init_time)
                    .expect("scored day is an eval target");
                let mut rng = scoring_rng(
                    config.seed,
                    day.init_time,
                    *postproc == Postproc::Copula,
                );
                acc.add_case(&ensemble, target.y.as_ref().unwrap(), &mut rng);
                scored_days.push(day.init_time);
                audit.push(day.audit.clone());

                if config.keep_ensembles {
                    let dir = combo_dir(config, *variant, *postproc).join("predictions");
                    std::fs::create_dir_all(&dir)?;
                    let stamp = day.init_time.format("%Y%m%dT%H%M%SZ");
                    model::write_ensemble_csv(&dir.join(format!("ens_{stamp}.csv")), &ensemble)?;
                }
            }
            if acc.n_cases() == 0 {
                return Err(Error::data(format!(
                    "no scored days for {} {}; check history and copula_min_scores",
                    variant.as_str(),
                    postproc.as_str()
                )));
            }
            let report = acc.finalize();
            let out_dir = combo_dir(config, *variant, *postproc);
            write_combo_outputs(config, *variant, *postproc, &report, &audit, &skipped)?;
            outcomes.push(ComboOutcome {
                variant: *variant,
                postproc: *postproc,
                report,
                out_dir,
                scored_days,
                skipped_days: skipped,
                audit,
            });
        }
    }
    // Restore caller-requested combo order.
    outcomes.sort_by_key(|o| {
        combos
            .iter()
            .position(|c| c.0 == o.variant && c.1 == o.postproc)
            .unwrap()
    });
    Ok(outcomes)
}

fn combo_dir(config: &RunConfig, variant: Variant, postproc: Postproc) -> PathBuf {
    config
        .output_dir
        .join(format!("{}_{}", variant.as_str(), postproc.as_str()))
}

pub const AUDIT_CSV_HEADER: &str = "target_init,window_start,window_end,n_train";
pub const SKIPPED_CSV_HEADER: &str = "init_time,reason";

fn write_combo_outputs(
    config: &RunConfig,
    variant: Variant,
    postproc: Postproc,
    report: &ScoreReport,
    audit: &[AuditRecord],
    skipped: &[(DateTime<Utc>, String)],
) -> Result<()> {
    let dir = combo_dir(config, variant, postproc);
    std::fs::create_dir_all(&dir)?;
    verify::write_report(&dir, report)?;

    let manifest = Manifest {
        variant: variant.as_str(),
        postproc: postproc.as_str(),
        config_hash: config.config_hash(),
        version: env!("CARGO_PKG_VERSION"),
        t_len: config.t_len,
        window_days: config.window_days,
        n_days_scored: report.n_cases,
        seed: config.seed,
    };
    serde_json::to_writer_pretty(std::fs::File::create(dir.join("manifest.json"))?, &manifest)?;

    let mut f = std::fs::File::create(dir.join("leakage_audit.csv"))?;
    writeln!(f, "{AUDIT_CSV_HEADER}")?;
    for a in audit {
        writeln!(
            f,
            "{},{},{},{}",
            a.target_init.to_rfc3339(),
            a.window_start.to_rfc3339(),
            a.window_end.to_rfc3339(),
            a.n_train
        )?;
    }

    let mut f = std::fs::File::create(dir.join("skipped_days.csv"))?;
    writeln!(f, "{SKIPPED_CSV_HEADER}")?;
    for (t, reason) in skipped {
        writeln!(f, "{},{reason}", t.to_rfc3339())?;
    }
    Ok(())
}

/// Score stored ensemble CSVs against a production series.
pub fn run_verify(
    forecast_dir: &Path,
    production_path: &Path,
    out_dir: &Path,
    seed: u64,
) -> Result<ScoreReport> {
    let production = ingest::read_production_csv(production_path)?;
    let series: BTreeMap<DateTime<Utc>, f64> =
        production.iter().map(|r| (r.time, r.power_mw)).collect();

    let mut paths: Vec<PathBuf> = std::fs::read_dir(forecast_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("ens_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::data(format!(
            "no ensemble files (ens_*.csv) in {}",
            forecast_dir.display()
        )));
    }

    let mut acc: Option<ScoreAccumulator> = None;
    for path in &paths {
        let ensemble = model::read_ensemble_csv(path)?;
        let t_len = ensemble.t_len();
        let mut y = DVector::zeros(t_len);
        let mut complete = true;
        for t in 0..t_len {
            match series.get(&(ensemble.init_time + chrono::Duration::hours(t as i64 + 1))) {
                Some(p) => y[t] = *p,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            log::warn!(
                "verify: skipping {} (incomplete production for {})",
                path.display(),
                ensemble.init_time
            );
            continue;
        }
        let acc = acc.get_or_insert_with(|| ScoreAccumulator::new(t_len));
        let mut rng = scoring_rng(seed, ensemble.init_time, false);
        acc.add_case(&ensemble, &y, &mut rng);
    }
    let acc = acc.ok_or_else(|| Error::data("no ensemble could be scored"))?;
    let report = acc.finalize();
    verify::write_report(out_dir, &report)?;
    Ok(report)
}
