//! Data ingestion: gridded NWP wind-speed forecasts and hourly production
//! records become aligned (covariate, observation) forecast cases with
//! rolling training windows.
//!
//! Processing order mirrors the preprocessing chain: ensemble mean over
//! members, latitude-filtered spatial mean, spline interpolation of the 3-6 h
//! native steps to hourly resolution (clamped at zero), and alignment with
//! the hourly production series.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One grid-point value from an NWP forecast file. `member` 0 denotes an
/// already ensemble-averaged input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NwpGridRecord {
    pub init_time: DateTime<Utc>,
    pub lead_h: u32,
    pub lat: f64,
    pub lon: f64,
    pub member: u32,
    pub ws100: f64,
}

/// One hourly production observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionRecord {
    pub time: DateTime<Utc>,
    pub power_mw: f64,
}

/// Aligned covariate/observation pair for one forecast origin: hourly
/// spatially averaged wind-speed forecasts for leads `1..=T` and, when
/// available, the observed production over the same hours.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCase {
    pub init_time: DateTime<Utc>,
    pub x_w: DVector<f64>,
    pub y: Option<DVector<f64>>,
}

impl ForecastCase {
    pub fn len(&self) -> usize {
        self.x_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_w.len() == 0
    }
}

/// A rolling training set: `cases` (all observed) strictly precede `target`.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    cases: Vec<ForecastCase>,
    target: ForecastCase,
}

impl TrainingWindow {
    pub fn new(cases: Vec<ForecastCase>, target: ForecastCase) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::data("training window needs at least one case"));
        }
        let t_len = target.len();
        for c in &cases {
            if c.len() != t_len {
                return Err(Error::data(format!(
                    "case {} has length {} but target expects {}",
                    c.init_time,
                    c.len(),
                    t_len
                )));
            }
            if c.y.is_none() {
                return Err(Error::data(format!(
                    "training case {} has no observations",
                    c.init_time
                )));
            }
            if c.init_time >= target.init_time {
                return Err(Error::data(format!(
                    "training case {} does not precede target {}",
                    c.init_time, target.init_time
                )));
            }
        }
        Ok(TrainingWindow { cases, target })
    }

    pub fn cases(&self) -> &[ForecastCase] {
        &self.cases
    }

    pub fn target(&self) -> &ForecastCase {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn trajectory_len(&self) -> usize {
        self.target.len()
    }
}

fn grid_key(r: &NwpGridRecord) -> (DateTime<Utc>, u32, u64, u64) {
    (r.init_time, r.lead_h, r.lat.to_bits(), r.lon.to_bits())
}

/// Collapse an ensemble to its per-cell arithmetic mean (member 0 output).
/// Input that is already member-0 passes through unchanged. Every cell must
/// carry the same member set.
pub fn ensemble_mean(records: &[NwpGridRecord]) -> Result<Vec<NwpGridRecord>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let members: BTreeSet<u32> = records.iter().map(|r| r.member).collect();
    if members.contains(&0) {
        if members.len() > 1 {
            return Err(Error::data(
                "input mixes member 0 (ensemble mean) with raw ensemble members",
            ));
        }
        return Ok(records.to_vec());
    }

    let mut cells: BTreeMap<(DateTime<Utc>, u32, u64, u64), BTreeMap<u32, f64>> = BTreeMap::new();
    for r in records {
        if r.ws100 < 0.0 || !r.ws100.is_finite() {
            return Err(Error::data(format!(
                "invalid wind speed {} at init {} lead {}",
                r.ws100, r.init_time, r.lead_h
            )));
        }
        let cell = cells.entry(grid_key(r)).or_default();
        if cell.insert(r.member, r.ws100).is_some() {
            return Err(Error::data(format!(
                "duplicate member {} at init {} lead {} lat {} lon {}",
                r.member, r.init_time, r.lead_h, r.lat, r.lon
            )));
        }
    }

    let mut out = Vec::with_capacity(cells.len());
    for ((init_time, lead_h, lat_bits, lon_bits), cell) in &cells {
        if cell.len() != members.len() {
            let missing: Vec<String> = members
                .iter()
                .filter(|m| !cell.contains_key(m))
                .map(|m| m.to_string())
                .collect();
            return Err(Error::data(format!(
                "missing member(s) {} at init {} lead {} lat {} lon {}",
                missing.join(","),
                init_time,
                lead_h,
                f64::from_bits(*lat_bits),
                f64::from_bits(*lon_bits)
            )));
        }
        out.push(NwpGridRecord {
            init_time: *init_time,
            lead_h: *lead_h,
            lat: f64::from_bits(*lat_bits),
            lon: f64::from_bits(*lon_bits),
            member: 0,
            ws100: cell.values().sum::<f64>() / cell.len() as f64,
        });
    }
    Ok(out)
}

/// Unweighted mean wind speed over grid points strictly north of `lat_min`,
/// per (init_time, lead_h). Input must be ensemble-averaged (member 0).
pub fn spatial_average(
    records: &[NwpGridRecord],
    lat_min: f64,
) -> Result<BTreeMap<(DateTime<Utc>, u32), f64>> {
    let mut sums: BTreeMap<(DateTime<Utc>, u32), (f64, usize)> = BTreeMap::new();
    let mut all_keys: BTreeSet<(DateTime<Utc>, u32)> = BTreeSet::new();
    for r in records {
        if r.member != 0 {
            return Err(Error::data(
                "spatial average expects ensemble-averaged (member 0) records",
            ));
        }
        all_keys.insert((r.init_time, r.lead_h));
        if r.lat > lat_min {
            let e = sums.entry((r.init_time, r.lead_h)).or_insert((0.0, 0));
            e.0 += r.ws100;
            e.1 += 1;
        }
    }
    for key in &all_keys {
        if !sums.contains_key(key) {
            return Err(Error::data(format!(
                "no grid points north of {lat_min} at init {} lead {}",
                key.0, key.1
            )));
        }
    }
    Ok(sums
        .into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect())
}

/// Natural cubic spline through `(lead_h, value)` knots, evaluated at lead
/// hours `1..=t_len` and clamped below at zero. Knot values at knot hours are
/// reproduced exactly before clamping. Knots must step uniformly by 3 or 6
/// hours and cover `[1, t_len]` (no extrapolation).
pub fn interpolate_hourly(knots: &BTreeMap<u32, f64>, t_len: usize) -> Result<Vec<f64>> {
    if knots.len() < 4 {
        return Err(Error::data(format!(
            "spline needs at least 4 knots, got {}",
            knots.len()
        )));
    }
    let hours: Vec<u32> = knots.keys().copied().collect();
    let step = hours[1] - hours[0];
    if step != 3 && step != 6 {
        return Err(Error::data(format!(
            "unsupported native step {step} h (expected 3 or 6)"
        )));
    }
    for w in hours.windows(2) {
        if w[1] - w[0] != step {
            return Err(Error::data(format!(
                "irregular knot spacing between lead {} and {}",
                w[0], w[1]
            )));
        }
    }
    let first = hours[0];
    let last = *hours.last().unwrap();
    if first > 1 || (last as usize) < t_len {
        return Err(Error::data(format!(
            "knots cover [{first}, {last}] but hours [1, {t_len}] are required"
        )));
    }

    let values: Vec<f64> = knots.values().copied().collect();
    for (h, v) in knots {
        if !v.is_finite() {
            return Err(Error::data(format!("non-finite knot value at lead {h}")));
        }
    }
    let second_derivs = natural_spline_second_derivatives(&hours, &values);

    let mut out = Vec::with_capacity(t_len);
    let h = step as f64;
    for hour in 1..=t_len as u32 {
        let seg = ((hour - first) / step).min(hours.len() as u32 - 2) as usize;
        let x0 = hours[seg] as f64;
        let a = (hours[seg + 1] as f64 - hour as f64) / h;
        let b = (hour as f64 - x0) / h;
        let v = a * values[seg]
            + b * values[seg + 1]
            + ((a.powi(3) - a) * second_derivs[seg] + (b.powi(3) - b) * second_derivs[seg + 1])
                * h
                * h
                / 6.0;
        out.push(v.max(0.0));
    }
    Ok(out)
}

/// Second derivatives of the natural cubic spline (zero at both ends) via the
/// Thomas algorithm on the uniform-spacing tridiagonal system.
fn natural_spline_second_derivatives(hours: &[u32], values: &[f64]) -> Vec<f64> {
    let n = hours.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = hours
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    let interior = n - 2;
    let mut diag = vec![0.0; interior];
    let mut upper = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    for i in 0..interior {
        let k = i + 1;
        diag[i] = (h[k - 1] + h[k]) / 3.0;
        upper[i] = h[k] / 6.0;
        rhs[i] = (values[k + 1] - values[k]) / h[k] - (values[k] - values[k - 1]) / h[k - 1];
    }
    // Forward sweep (sub-diagonal equals the previous upper by symmetry).
    for i in 1..interior {
        let w = h[i] / 6.0 / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[interior] = rhs[interior - 1] / diag[interior - 1];
    for i in (1..interior).rev() {
        m[i] = (rhs[i - 1] - upper[i - 1] * m[i + 1]) / diag[i - 1];
    }
    m
}

/// Rolling windows: for every case with at least `window_days` predecessors,
/// pair it (as target) with exactly the `window_days` immediately preceding
/// cases. Preceding cases must carry observations.
pub fn build_windows(cases: &[ForecastCase], window_days: usize) -> Result<Vec<TrainingWindow>> {
    if window_days == 0 {
        return Err(Error::config("window length must be positive"));
    }
    for w in cases.windows(2) {
        if w[0].init_time >= w[1].init_time {
            return Err(Error::data(format!(
                "cases not strictly increasing at {}",
                w[1].init_time
            )));
        }
    }
    let mut out = Vec::new();
    for i in window_days..cases.len() {
        let window = cases[i - window_days..i].to_vec();
        out.push(TrainingWindow::new(window, cases[i].clone())?);
    }
    Ok(out)
}

/// Build forecast cases from per-(init, lead) spatial averages and the hourly
/// production series. Cases with incomplete production keep `y = None` (usable
/// as prediction targets only); the gaps are logged.
pub fn assemble_cases(
    averages: &BTreeMap<(DateTime<Utc>, u32), f64>,
    production: &[ProductionRecord],
    t_len: usize,
) -> Result<Vec<ForecastCase>> {
    let mut by_init: BTreeMap<DateTime<Utc>, BTreeMap<u32, f64>> = BTreeMap::new();
    for ((init, lead), v) in averages {
        by_init.entry(*init).or_default().insert(*lead, *v);
    }
    let mut series: BTreeMap<DateTime<Utc>, f64> = BTreeMap::new();
    for (i, r) in production.iter().enumerate() {
        if r.power_mw < 0.0 || !r.power_mw.is_finite() {
            return Err(Error::data(format!(
                "invalid production {} at {}",
                r.power_mw, r.time
            )));
        }
        if i > 0 {
            let prev = production[i - 1].time;
            if r.time <= prev {
                return Err(Error::data(format!(
                    "production timestamps not increasing at {}",
                    r.time
                )));
            }
        }
        series.insert(r.time, r.power_mw);
    }

    let mut cases = Vec::new();
    for (init, knots) in &by_init {
        let x_w = DVector::from_vec(interpolate_hourly(knots, t_len)?);
        let mut y = Vec::with_capacity(t_len);
        let mut complete = true;
        for t in 1..=t_len as i64 {
            match series.get(&(*init + Duration::hours(t))) {
                Some(p) => y.push(*p),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            log::warn!("case {init}: incomplete production, kept without observations");
        }
        cases.push(ForecastCase {
            init_time: *init,
            x_w,
            y: complete.then(|| DVector::from_vec(y)),
        });
    }
    Ok(cases)
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

pub const NWP_CSV_HEADER: &str = "init_time,lead_h,lat,lon,member,ws100";
pub const PRODUCTION_CSV_HEADER: &str = "time,power_mw";
pub const CASE_CSV_HEADER: &str = "lead_h,ws_mean,power_mw";

pub fn read_nwp_csv(path: &Path) -> Result<Vec<NwpGridRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_nwp_csv(path: &Path, records: &[NwpGridRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_production_csv(path: &Path) -> Result<Vec<ProductionRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_production_csv(path: &Path, records: &[ProductionRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// One cached case per file: `lead_h,ws_mean[,power_mw]`. The power column is
/// present only when the case carries observations.
pub fn write_case_csv(path: &Path, case: &ForecastCase) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# init_time={}", case.init_time.to_rfc3339())?;
    if case.y.is_some() {
        writeln!(f, "{CASE_CSV_HEADER}")?;
    } else {
        writeln!(f, "lead_h,ws_mean")?;
    }
    for t in 0..case.len() {
        match &case.y {
            Some(y) => writeln!(f, "{},{},{}", t + 1, case.x_w[t], y[t])?,
            None => writeln!(f, "{},{}", t + 1, case.x_w[t])?,
        }
    }
    Ok(())
}

pub fn read_case_csv(path: &Path) -> Result<ForecastCase> {
    let content = std::fs::read_to_string(path)?;
    let mut init_time = None;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut has_power = false;
    for (i, line) in content.lines().enumerate() {
        if let Some(meta) = line.strip_prefix("# init_time=") {
            init_time = Some(
                DateTime::parse_from_rfc3339(meta.trim())
                    .map_err(|e| Error::data(format!("bad init_time metadata: {e}")))?
                    .with_timezone(&Utc),
            );
            continue;
        }
        if line.starts_with("lead_h") {
            has_power = line.split(',').count() == 3;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|e| Error::data(format!("line {}: {e}", i + 1)))
        };
        x.push(parse(fields[1])?);
        if has_power {
            y.push(parse(fields[2])?);
        }
    }
    let init_time = init_time.ok_or_else(|| Error::data("case file missing init_time"))?;
    Ok(ForecastCase {
        init_time,
        x_w: DVector::from_vec(x),
        y: has_power.then(|| DVector::from_vec(y)),
    })
}
