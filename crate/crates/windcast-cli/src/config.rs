//! TOML run configuration and command-line overrides. File values fill in
//! defaults; explicit flags win over the file.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::Deserialize;
use windcast::model::Postproc;
use windcast::pipeline::{RunConfig, Variant};
use windcast::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub gibbs: GibbsSection,
    #[serde(default)]
    pub copula: CopulaSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub nwp: Option<PathBuf>,
    pub production: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub t: Option<usize>,
    pub window_days: Option<usize>,
    pub lat_min: Option<f64>,
    pub variant: Option<Variant>,
    pub postproc: Option<String>,
    pub eval_start: Option<String>,
    pub eval_end: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSection {
    pub n_iter: Option<usize>,
    pub n_burn: Option<usize>,
    pub m_pred: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaSection {
    pub band: Option<usize>,
    pub min_scores: Option<usize>,
}

/// Accepts RFC 3339 timestamps or bare dates (midnight UTC).
pub fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let padded = format!("{s}T00:00:00Z");
    DateTime::parse_from_rfc3339(&padded)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::config(format!("cannot parse time {s:?}: {e}")))
}

pub fn parse_postproc(s: &str) -> Result<Postproc> {
    match s {
        "none" => Ok(Postproc::None),
        "copula" => Ok(Postproc::Copula),
        other => Err(Error::config(format!(
            "unknown postproc {other} (expected none | copula)"
        ))),
    }
}

pub fn load_config_file(path: Option<&PathBuf>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| Error::config(format!("invalid config {}: {e}", p.display())))
        }
    }
}

/// Command-line overrides shared by the data-driven subcommands.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonOpts {
    /// NWP forecast CSV (init_time,lead_h,lat,lon,member,ws100)
    #[arg(long)]
    pub nwp: Option<PathBuf>,
    /// Hourly production CSV (time,power_mw)
    #[arg(long)]
    pub production: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trajectory length in hours
    #[arg(long)]
    pub t: Option<usize>,
    /// Rolling training window length in days
    #[arg(long)]
    pub window_days: Option<usize>,
    /// Keep grid points with latitude strictly above this
    #[arg(long)]
    pub lat_min: Option<f64>,
    /// Model variant: full | ind_errors | fully_ind
    #[arg(long)]
    pub variant: Option<String>,
    /// Post-processing: none | copula
    #[arg(long)]
    pub postproc: Option<String>,
    /// Total Gibbs iterations
    #[arg(long)]
    pub n_gibbs: Option<usize>,
    /// Burn-in iterations
    #[arg(long)]
    pub n_burn: Option<usize>,
    /// Predictive ensemble size
    #[arg(long)]
    pub m_pred: Option<usize>,
    /// Latent copula graph band (1 = AR(1))
    #[arg(long)]
    pub copula_band: Option<usize>,
    /// Minimum cached score days before the copula stage runs
    #[arg(long)]
    pub copula_min_scores: Option<usize>,
    /// First evaluated target day (RFC 3339 or YYYY-MM-DD)
    #[arg(long)]
    pub eval_start: Option<String>,
    /// Last evaluated target day (RFC 3339 or YYYY-MM-DD)
    #[arg(long)]
    pub eval_end: Option<String>,
    /// Base random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write per-day ensemble CSVs during backtests
    #[arg(long, default_value_t = false)]
    pub keep_ensembles: bool,
}

/// Merge: defaults < config file < command-line flags.
pub fn resolve(file: &ConfigFile, opts: &CommonOpts) -> Result<RunConfig> {
    let nwp = opts
        .nwp
        .clone()
        .or_else(|| file.paths.nwp.clone())
        .ok_or_else(|| Error::config("missing NWP path (--nwp or [paths] nwp)"))?;
    let production = opts
        .production
        .clone()
        .or_else(|| file.paths.production.clone())
        .ok_or_else(|| Error::config("missing production path (--production or [paths] production)"))?;
    let out = opts
        .out
        .clone()
        .or_else(|| file.paths.output.clone())
        .ok_or_else(|| Error::config("missing output directory (--out or [paths] output)"))?;

    let mut config = RunConfig::new(nwp, production, out);
    if let Some(v) = opts.t.or(file.experiment.t) {
        config.t_len = v;
    }
    if let Some(v) = opts.window_days.or(file.experiment.window_days) {
        config.window_days = v;
    }
    if let Some(v) = opts.lat_min.or(file.experiment.lat_min) {
        config.lat_min = v;
    }
    config.variant = match (&opts.variant, file.experiment.variant) {
        (Some(s), _) => Variant::parse(s)?,
        (None, Some(v)) => v,
        (None, None) => config.variant,
    };
    config.postproc = match (&opts.postproc, &file.experiment.postproc) {
        (Some(s), _) => parse_postproc(s)?,
        (None, Some(s)) => parse_postproc(s)?,
        (None, None) => config.postproc,
    };
    if let Some(v) = opts.n_gibbs.or(file.gibbs.n_iter) {
        config.n_gibbs = v;
    }
    if let Some(v) = opts.n_burn.or(file.gibbs.n_burn) {
        config.n_burn = v;
    }
    if let Some(v) = opts.m_pred.or(file.gibbs.m_pred) {
        config.m_pred = v;
    }
    if let Some(v) = opts.copula_band.or(file.copula.band) {
        config.copula_band = v;
    }
    if let Some(v) = opts.copula_min_scores.or(file.copula.min_scores) {
        config.copula_min_scores = v;
    }
    config.eval_start = match (&opts.eval_start, &file.experiment.eval_start) {
        (Some(s), _) => Some(parse_time(s)?),
        (None, Some(s)) => Some(parse_time(s)?),
        (None, None) => None,
    };
    config.eval_end = match (&opts.eval_end, &file.experiment.eval_end) {
        (Some(s), _) => Some(parse_time(s)?),
        (None, Some(s)) => Some(parse_time(s)?),
        (None, None) => None,
    };
    if let Some(v) = opts.seed.or(file.experiment.seed) {
        config.seed = v;
    }
    config.keep_ensembles = opts.keep_ensembles;

    if config.n_gibbs <= config.n_burn {
        return Err(Error::config(format!(
            "n_gibbs {} must exceed n_burn {}",
            config.n_gibbs, config.n_burn
        )));
    }
    if config.t_len == 0 || config.window_days == 0 {
        return Err(Error::config("t and window_days must be positive"));
    }
    Ok(config)
}
