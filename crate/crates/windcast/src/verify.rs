//! Forecast verification: randomized PIT, central prediction intervals,
//! MAE/RMSE/CRPS, band-depth pre-ranks with multivariate rank histograms, and
//! day-aggregated score tables.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::PredictiveEnsemble;
use crate::stats;

/// Number of PIT histogram bins.
pub const PIT_BINS: usize = 20;

/// Nominal central prediction interval level for the report tables.
pub const REPORT_INTERVAL_LEVEL: f64 = 0.8;

/// Randomized probability integral transform of `y` against an ensemble
/// margin of `m - 1` members: uniform on the rank interval so that
/// exchangeable (members, y) give an exactly uniform PIT.
pub fn pit<R: Rng + ?Sized>(members: &[f64], y: f64, rng: &mut R) -> f64 {
    let m = members.len() + 1;
    let below = members.iter().filter(|&&v| v < y).count();
    let not_above = members.iter().filter(|&&v| v <= y).count();
    let u: f64 = rng.gen();
    (below as f64 + (not_above - below + 1) as f64 * u) / m as f64
}

/// Central prediction interval at `level`: covered iff `y` lies inside
/// (inclusive), width is the quantile spread.
pub fn interval_coverage_width(members: &[f64], y: f64, level: f64) -> (bool, f64) {
    assert!(members.len() >= 10, "interval needs at least 10 members");
    assert!((0.0..1.0).contains(&level) && level > 0.0);
    let alpha = (1.0 - level) / 2.0;
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = stats::quantile_sorted(&sorted, alpha);
    let hi = stats::quantile_sorted(&sorted, 1.0 - alpha);
    (y >= lo && y <= hi, hi - lo)
}

/// Ensemble CRPS estimator
/// `(1/m) sum |x_i - y| - (1/(2 m^2)) sum_{i,j} |x_i - x_j|`,
/// with the pairwise term computed in O(m log m) from the sorted sample.
pub fn crps(members: &[f64], y: f64) -> f64 {
    let m = members.len();
    assert!(m >= 2, "CRPS needs at least two members");
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t1 = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
    // sum_{i<j} (x_(j) - x_(i)) = sum_k x_(k) (2k - m - 1), k 1-based.
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| x * (2.0 * (k + 1) as f64 - m as f64 - 1.0))
        .sum();
    t1 - pair_sum / (m as f64 * m as f64)
}

/// Absolute error of the ensemble median and squared error of the ensemble
/// mean.
pub fn mae_rmse(members: &[f64], y: f64) -> (f64, f64) {
    assert!(!members.is_empty());
    let abs_err = (stats::median(members) - y).abs();
    let sq_err = (stats::mean(members) - y).powi(2);
    (abs_err, sq_err)
}

/// Band-depth pre-ranks of all `m` pooled trajectories (rows). Exact value
/// ties within a margin are ordered by row index, an offset below any
/// meaningful scale.
fn band_depth_preranks(pool: &[&[f64]]) -> Vec<f64> {
    let m = pool.len();
    let t_len = pool[0].len();
    let mut term_sums = vec![0.0f64; m];
    let mut order: Vec<usize> = (0..m).collect();
    for t in 0..t_len {
        order.sort_by(|&a, &b| {
            pool[a][t]
                .partial_cmp(&pool[b][t])
                .unwrap()
                .then(a.cmp(&b))
        });
        for (pos, &idx) in order.iter().enumerate() {
            let rank = (pos + 1) as f64;
            term_sums[idx] += (m as f64 - rank) * (rank - 1.0);
        }
    }
    term_sums
        .iter()
        .map(|s| s / t_len as f64 + (m as f64 - 1.0))
        .collect()
}

/// Band-depth pre-rank of `trajectory` within the pool of itself and the
/// ensemble rows: `(1/T) sum_t [m - rank(y_t)][rank(y_t) - 1] + (m - 1)`.
pub fn band_depth_prerank(trajectory: &[f64], ensemble: &[Vec<f64>]) -> f64 {
    let mut pool: Vec<&[f64]> = ensemble.iter().map(|r| r.as_slice()).collect();
    pool.push(trajectory);
    *band_depth_preranks(&pool).last().unwrap()
}

/// Multivariate rank of `y` among the pooled trajectories: the univariate
/// rank of its band-depth pre-rank, ties broken uniformly at random. Returns
/// a rank in `1..=m` with `m = samples.len() + 1`.
pub fn multivariate_rank<R: Rng + ?Sized>(
    y: &[f64],
    samples: &[Vec<f64>],
    rng: &mut R,
) -> usize {
    let mut pool: Vec<&[f64]> = samples.iter().map(|r| r.as_slice()).collect();
    pool.push(y);
    let rho = band_depth_preranks(&pool);
    let rho_y = *rho.last().unwrap();
    let below = rho[..rho.len() - 1].iter().filter(|&&v| v < rho_y).count();
    let ties = rho[..rho.len() - 1]
        .iter()
        .filter(|&&v| v == rho_y)
        .count();
    below + 1 + rng.gen_range(0..=ties)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Functional {
    Sum,
    Max,
}

impl Functional {
    fn apply(&self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Functional::Sum => values.sum(),
            Functional::Max => values.fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Functional::Sum => "sum",
            Functional::Max => "max",
        }
    }
}

/// Scores of a trajectory functional (total or maximum over the horizon) for
/// one forecast case: `(abs_err, sq_err, crps)` of the induced univariate
/// ensemble.
pub fn functional_scores(
    ensemble: &PredictiveEnsemble,
    y: &DVector<f64>,
    functional: Functional,
) -> (f64, f64, f64) {
    assert_eq!(ensemble.t_len(), y.len());
    let reduced: Vec<f64> = (0..ensemble.n_trajectories())
        .map(|r| functional.apply(ensemble.trajectories.row(r).iter().copied()))
        .collect();
    let y_reduced = functional.apply(y.iter().copied());
    let (abs_err, sq_err) = mae_rmse(&reduced, y_reduced);
    (abs_err, sq_err, crps(&reduced, y_reduced))
}

/// Day-block aggregate over a 24-lead window.
#[derive(Debug, Clone, Serialize)]
pub struct DayScores {
    pub day: usize,
    pub mae: f64,
    pub rmse: f64,
    pub crps: f64,
    pub coverage: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalReport {
    pub functional: Functional,
    pub mae: f64,
    pub rmse: f64,
    pub crps: f64,
}

/// Aggregated verification results over a set of forecast cases.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub t_len: usize,
    pub n_cases: usize,
    pub per_lead_mae: Vec<f64>,
    pub per_lead_rmse: Vec<f64>,
    pub per_lead_crps: Vec<f64>,
    pub per_day: Vec<DayScores>,
    pub pit_hist: Vec<u64>,
    pub pit_values: Vec<f64>,
    /// One multivariate rank per case, each in `1..=m_ranks`.
    pub mv_ranks: Vec<usize>,
    pub mvrank_hist: Vec<u64>,
    pub m_ranks: usize,
    pub functionals: Vec<FunctionalReport>,
}

/// Streaming accumulator: feed one (ensemble, observation) case at a time.
pub struct ScoreAccumulator {
    t_len: usize,
    n_cases: usize,
    abs_err: Vec<f64>,
    sq_err: Vec<f64>,
    crps_sum: Vec<f64>,
    covered: Vec<f64>,
    width: Vec<f64>,
    pit_values: Vec<f64>,
    mv_ranks: Vec<usize>,
    m_ranks: Option<usize>,
    sum_scores: (f64, f64, f64),
    max_scores: (f64, f64, f64),
}

impl ScoreAccumulator {
    pub fn new(t_len: usize) -> Self {
        ScoreAccumulator {
            t_len,
            n_cases: 0,
            abs_err: vec![0.0; t_len],
            sq_err: vec![0.0; t_len],
            crps_sum: vec![0.0; t_len],
            covered: vec![0.0; t_len],
            width: vec![0.0; t_len],
            pit_values: Vec::new(),
            mv_ranks: Vec::new(),
            m_ranks: None,
            sum_scores: (0.0, 0.0, 0.0),
            max_scores: (0.0, 0.0, 0.0),
        }
    }

    pub fn add_case<R: Rng + ?Sized>(
        &mut self,
        ensemble: &PredictiveEnsemble,
        y: &DVector<f64>,
        rng: &mut R,
    ) {
        assert_eq!(ensemble.t_len(), self.t_len);
        assert_eq!(y.len(), self.t_len);
        let m = ensemble.n_trajectories() + 1;
        match self.m_ranks {
            None => self.m_ranks = Some(m),
            Some(prev) => assert_eq!(prev, m, "ensemble size changed between cases"),
        }
        for t in 0..self.t_len {
            let margin = ensemble.margin(t);
            let (abs_err, sq_err) = mae_rmse(&margin, y[t]);
            self.abs_err[t] += abs_err;
            self.sq_err[t] += sq_err;
            self.crps_sum[t] += crps(&margin, y[t]);
            let (cov, w) = interval_coverage_width(&margin, y[t], REPORT_INTERVAL_LEVEL);
            self.covered[t] += cov as u8 as f64;
            self.width[t] += w;
            self.pit_values.push(pit(&margin, y[t], rng));
        }
        let samples: Vec<Vec<f64>> = (0..ensemble.n_trajectories())
            .map(|r| ensemble.trajectories.row(r).iter().copied().collect())
            .collect();
        let y_vec: Vec<f64> = y.iter().copied().collect();
        self.mv_ranks.push(multivariate_rank(&y_vec, &samples, rng));

        for (functional, acc) in [
            (Functional::Sum, &mut self.sum_scores),
            (Functional::Max, &mut self.max_scores),
        ] {
            let (a, s, c) = functional_scores(ensemble, y, functional);
            acc.0 += a;
            acc.1 += s;
            acc.2 += c;
        }
        self.n_cases += 1;
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    pub fn finalize(self) -> ScoreReport {
        let n = self.n_cases.max(1) as f64;
        let t_len = self.t_len;
        let per_lead_mae: Vec<f64> = self.abs_err.iter().map(|v| v / n).collect();
        let per_lead_rmse: Vec<f64> = self.sq_err.iter().map(|v| (v / n).sqrt()).collect();
        let per_lead_crps: Vec<f64> = self.crps_sum.iter().map(|v| v / n).collect();

        let mut per_day = Vec::new();
        let mut start = 0usize;
        let mut day = 1usize;
        while start < t_len {
            let end = (start + 24).min(t_len);
            let leads = end - start;
            let mean_over = |v: &[f64]| v[start..end].iter().sum::<f64>() / leads as f64 / n;
            per_day.push(DayScores {
                day,
                mae: mean_over(&self.abs_err),
                rmse: (mean_over(&self.sq_err)).sqrt(),
                crps: mean_over(&self.crps_sum),
                coverage: mean_over(&self.covered),
                width: mean_over(&self.width),
            });
            start = end;
            day += 1;
        }

        let m_ranks = self.m_ranks.unwrap_or(1);
        let mut mvrank_hist = vec![0u64; m_ranks];
        for &r in &self.mv_ranks {
            mvrank_hist[r - 1] += 1;
        }
        let functionals = vec![
            FunctionalReport {
                functional: Functional::Sum,
                mae: self.sum_scores.0 / n,
                rmse: (self.sum_scores.1 / n).sqrt(),
                crps: self.sum_scores.2 / n,
            },
            FunctionalReport {
                functional: Functional::Max,
                mae: self.max_scores.0 / n,
                rmse: (self.max_scores.1 / n).sqrt(),
                crps: self.max_scores.2 / n,
            },
        ];
        ScoreReport {
            t_len,
            n_cases: self.n_cases,
            per_lead_mae,
            per_lead_rmse,
            per_lead_crps,
            per_day,
            pit_hist: stats::histogram_unit(&self.pit_values, PIT_BINS),
            pit_values: self.pit_values,
            mv_ranks: self.mv_ranks,
            mvrank_hist,
            m_ranks,
            functionals,
        }
    }
}

pub const DAILY_SCORES_HEADER: &str = "day,mae_mw,rmse_mw,crps_mw,coverage80,width80_mw";
pub const PER_LEAD_SCORES_HEADER: &str = "lead_h,mae_mw,rmse_mw,crps_mw";
pub const PIT_HIST_HEADER: &str = "bin,lower,upper,count";
pub const MVRANK_HIST_HEADER: &str = "rank,count";
pub const FUNCTIONAL_SCORES_HEADER: &str = "functional,mae_mw,rmse_mw,crps_mw";

/// Emit the report as the documented CSV tables plus a JSON summary.
pub fn write_report(dir: &Path, report: &ScoreReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("scores_daily.csv"))?;
    writeln!(f, "{DAILY_SCORES_HEADER}")?;
    for d in &report.per_day {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            d.day, d.mae, d.rmse, d.crps, d.coverage, d.width
        )?;
    }

    let mut f = std::fs::File::create(dir.join("scores_per_lead.csv"))?;
    writeln!(f, "{PER_LEAD_SCORES_HEADER}")?;
    for t in 0..report.t_len {
        writeln!(
            f,
            "{},{},{},{}",
            t + 1,
            report.per_lead_mae[t],
            report.per_lead_rmse[t],
            report.per_lead_crps[t]
        )?;
    }

    let mut f = std::fs::File::create(dir.join("pit_hist.csv"))?;
    writeln!(f, "{PIT_HIST_HEADER}")?;
    for (b, count) in report.pit_hist.iter().enumerate() {
        let lower = b as f64 / PIT_BINS as f64;
        let upper = (b + 1) as f64 / PIT_BINS as f64;
        writeln!(f, "{b},{lower},{upper},{count}")?;
    }

    let mut f = std::fs::File::create(dir.join("mvrank_hist.csv"))?;
    writeln!(f, "{MVRANK_HIST_HEADER}")?;
    for (r, count) in report.mvrank_hist.iter().enumerate() {
        writeln!(f, "{},{count}", r + 1)?;
    }

    let mut f = std::fs::File::create(dir.join("functional_scores.csv"))?;
    writeln!(f, "{FUNCTIONAL_SCORES_HEADER}")?;
    for fr in &report.functionals {
        writeln!(
            f,
            "{},{},{},{}",
            fr.functional.as_str(),
            fr.mae,
            fr.rmse,
            fr.crps
        )?;
    }

    let f = std::fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(f, report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Postproc;
    use chrono::{TimeZone, Utc};
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn pit_boundary_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let members: Vec<f64> = (1..=9).map(|i| i as f64).collect(); // m = 10
        for _ in 0..2000 {
            let low = pit(&members, 0.0, &mut rng);
            assert!((0.0..=0.1).contains(&low), "low PIT {low}");
            let high = pit(&members, 100.0, &mut rng);
            assert!((0.9..=1.0).contains(&high), "high PIT {high}");
        }
    }

    #[test]
    fn pit_uniform_under_exchangeability() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut pits = Vec::new();
        for _ in 0..4000 {
            let members: Vec<f64> = (0..19).map(|_| rng.sample(StandardNormal)).collect();
            let y: f64 = rng.sample(StandardNormal);
            pits.push(pit(&members, y, &mut rng));
        }
        let (_, p) = stats::ks_uniform(&pits);
        assert!(p > 0.01, "PIT uniformity rejected, p = {p}");
    }

    #[test]
    fn interval_examples() {
        let degenerate = vec![7.0; 50];
        let (covered, width) = interval_coverage_width(&degenerate, 7.0, 0.8);
        assert!(covered);
        assert_eq!(width, 0.0);

        let members: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let (covered, width) = interval_coverage_width(&members, 500.0, 0.8);
        assert!(covered);
        assert!((width - 799.2).abs() < 1e-9, "width {width}");
        assert!((width - 800.0).abs() < 1.0);
        let (covered_low, _) = interval_coverage_width(&members, 50.0, 0.8);
        assert!(!covered_low);
    }

    #[test]
    fn coverage_monotone_in_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut cov80 = 0usize;
        let mut cov90 = 0usize;
        for _ in 0..500 {
            let members: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
            let y: f64 = 2.0 * rng.sample::<f64, _>(StandardNormal);
            cov80 += interval_coverage_width(&members, y, 0.8).0 as usize;
            cov90 += interval_coverage_width(&members, y, 0.9).0 as usize;
        }
        assert!(cov90 >= cov80);
    }

    #[test]
    fn crps_examples() {
        assert_eq!(crps(&[5.0, 5.0, 5.0], 5.0), 0.0);
        let v = crps(&[0.0, 2.0], 1.0);
        assert!((v - 0.5).abs() < 1e-12, "crps {v}");
    }

    #[test]
    fn crps_gaussian_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let members: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let v = crps(&members, 0.0);
        let expected = (2.0 / std::f64::consts::PI).sqrt() - 1.0 / std::f64::consts::PI.sqrt();
        assert!((v - expected).abs() < 0.003, "crps {v} vs {expected}");
    }

    /// Independent oracle: exact integration of (F(z) - 1{z >= y})^2 over the
    /// empirical CDF's piecewise-constant segments.
    fn crps_cdf_quadrature(members: &[f64], y: f64) -> f64 {
        let m = members.len() as f64;
        let mut points = members.to_vec();
        points.push(y);
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sorted_members = members.to_vec();
        sorted_members.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut total = 0.0;
        for w in points.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let f = sorted_members.partition_point(|v| *v <= lo) as f64 / m;
            let h = if lo >= y { 1.0 } else { 0.0 };
            total += (f - h).powi(2) * (hi - lo);
        }
        total
    }

    #[test]
    fn crps_estimator_equals_cdf_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..100 {
            let m = rng.gen_range(2..=20);
            let members: Vec<f64> = (0..m)
                .map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let y: f64 = 10.0 * rng.sample::<f64, _>(StandardNormal);
            let est = crps(&members, y);
            let oracle = crps_cdf_quadrature(&members, y);
            assert!(
                (est - oracle).abs() <= 1e-6 * oracle.abs().max(1e-12),
                "estimator {est} vs quadrature {oracle}"
            );
        }
    }

    #[test]
    fn crps_bounded_by_mean_absolute_deviation() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..200 {
            let m = rng.gen_range(2..=30);
            let members: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let y: f64 = rng.sample(StandardNormal);
            let bound = members.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
            assert!(crps(&members, y) <= bound + 1e-12);
        }
    }

    #[test]
    fn mae_rmse_examples() {
        assert_eq!(mae_rmse(&[1.0, 2.0, 3.0], 2.0), (0.0, 0.0));
        assert_eq!(mae_rmse(&[0.0, 10.0], 0.0), (5.0, 25.0));
    }

    #[test]
    fn band_depth_boundary_values() {
        let m = 11;
        let ensemble: Vec<Vec<f64>> = (0..m - 1)
            .map(|i| vec![i as f64 + 10.0; 4])
            .collect();
        // Below all members at every lead: rank 1 everywhere.
        assert_eq!(band_depth_prerank(&[0.0; 4], &ensemble), (m - 1) as f64);
        // Above all members: rank m everywhere.
        assert_eq!(band_depth_prerank(&[99.0; 4], &ensemble), (m - 1) as f64);
    }

    #[test]
    fn band_depth_hand_example() {
        // m = 3, T = 2, observation at rank 2 in both margins.
        let ensemble = vec![vec![1.0, 1.0], vec![3.0, 3.0]];
        let rho = band_depth_prerank(&[2.0, 2.0], &ensemble);
        assert_eq!(rho, 3.0);
    }

    #[test]
    fn multivariate_rank_uniform_under_exchangeability() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let m = 20;
        let t_len = 6;
        let n_cases = 4000;
        let mut counts = vec![0u64; m];
        for _ in 0..n_cases {
            let samples: Vec<Vec<f64>> = (0..m - 1)
                .map(|_| (0..t_len).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let y: Vec<f64> = (0..t_len).map(|_| rng.sample(StandardNormal)).collect();
            counts[multivariate_rank(&y, &samples, &mut rng) - 1] += 1;
        }
        let (_, p) = stats::chi2_uniform(&counts);
        assert!(p > 0.01, "rank uniformity rejected, p = {p}");
    }

    #[test]
    fn multivariate_rank_far_outlier_hits_boundary_prerank() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let samples: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..5).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y = vec![1e6; 5];
        let rho_y = band_depth_prerank(&y, &samples);
        assert_eq!(rho_y, 9.0);
        // All interior samples have larger pre-ranks, so the outlier ranks
        // first unless another sample also sits on the boundary.
        let rank = multivariate_rank(&y, &samples, &mut rng);
        assert!(rank <= 2, "rank {rank}");
    }

    #[test]
    fn multivariate_rank_two_member_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let mut counts = [0u64; 2];
        for _ in 0..4000 {
            let samples = vec![(0..4)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect::<Vec<f64>>()];
            let y: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            counts[multivariate_rank(&y, &samples, &mut rng) - 1] += 1;
        }
        let (_, p) = stats::chi2_uniform(&counts);
        assert!(p > 0.01, "p = {p}");
    }

    fn toy_ensemble(rows: Vec<Vec<f64>>) -> PredictiveEnsemble {
        let m = rows.len();
        let t = rows[0].len();
        PredictiveEnsemble {
            init_time: Utc.with_ymd_and_hms(2012, 7, 1, 0, 0, 0).unwrap(),
            trajectories: DMatrix::from_fn(m, t, |i, j| rows[i][j]),
            postproc: Postproc::None,
        }
    }

    #[test]
    fn functional_scores_examples() {
        let ens = toy_ensemble(vec![vec![1.0, 1.0], vec![3.0, 3.0]]);
        let y = DVector::from_vec(vec![2.0, 2.0]);
        let (_, _, crps_sum) = functional_scores(&ens, &y, Functional::Sum);
        assert!((crps_sum - 1.0).abs() < 1e-12, "sum CRPS {crps_sum}");

        let degenerate = toy_ensemble(vec![vec![2.0, 5.0]; 4]);
        let y = DVector::from_vec(vec![2.0, 5.0]);
        let (mae, sq, c) = functional_scores(&degenerate, &y, Functional::Max);
        assert_eq!((mae, sq, c), (0.0, 0.0, 0.0));
    }

    #[test]
    fn report_histograms_count_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let t_len = 30; // two day blocks: 24 + 6
        let mut acc = ScoreAccumulator::new(t_len);
        let n_cases = 25;
        for _ in 0..n_cases {
            let rows: Vec<Vec<f64>> = (0..40)
                .map(|_| {
                    (0..t_len)
                        .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                        .collect()
                })
                .collect();
            let y = DVector::from_fn(t_len, |_, _| rng.sample::<f64, _>(StandardNormal).powi(2));
            acc.add_case(&toy_ensemble(rows), &y, &mut rng);
        }
        let report = acc.finalize();
        assert_eq!(report.n_cases, n_cases);
        assert_eq!(report.per_day.len(), 2);
        assert_eq!(
            report.pit_hist.iter().sum::<u64>(),
            (n_cases * t_len) as u64
        );
        assert_eq!(report.mvrank_hist.iter().sum::<u64>(), n_cases as u64);
        assert_eq!(report.m_ranks, 41);
        for d in &report.per_day {
            assert!((0.0..=1.0).contains(&d.coverage));
            assert!(d.mae >= 0.0 && d.rmse >= 0.0 && d.crps >= 0.0);
        }
    }

    #[test]
    fn report_csv_headers_golden() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut acc = ScoreAccumulator::new(2);
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64 + 1.0]).collect();
        acc.add_case(
            &toy_ensemble(rows),
            &DVector::from_vec(vec![5.0, 6.0]),
            &mut rng,
        );
        let report = acc.finalize();
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &report).unwrap();
        let read_first = |name: &str| {
            std::fs::read_to_string(dir.path().join(name))
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string()
        };
        assert_eq!(read_first("scores_daily.csv"), DAILY_SCORES_HEADER);
        assert_eq!(read_first("scores_per_lead.csv"), PER_LEAD_SCORES_HEADER);
        assert_eq!(read_first("pit_hist.csv"), PIT_HIST_HEADER);
        assert_eq!(read_first("mvrank_hist.csv"), MVRANK_HIST_HEADER);
        assert_eq!(read_first("functional_scores.csv"), FUNCTIONAL_SCORES_HEADER);
        assert!(dir.path().join("summary.json").exists());
    }
}
