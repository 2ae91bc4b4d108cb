//! Two-stage Gaussian copula post-processing: probit-transform training
//! observations through their marginal predictive CDFs, fit a banded latent
//! precision, and re-correlate marginal predictive samples.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gwishart::{self, GWishartParams, Graph};
use crate::model::{marginal_cdf, solve_lower_transpose, Postproc, PredictiveEnsemble};
use crate::stats::{normal_cdf, normal_quantile};

/// Latent Gaussian observations `z[n, t] = probit(F_tn(y_tn))`.
#[derive(Debug, Clone)]
pub struct LatentScores {
    /// `N x T`.
    pub z: DMatrix<f64>,
}

impl LatentScores {
    pub fn n_cases(&self) -> usize {
        self.z.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.z.ncols()
    }
}

/// Posterior over the latent precision `K_z` plus the score cross-product.
#[derive(Debug, Clone)]
pub struct CopulaFit {
    pub posterior: GWishartParams,
    pub cross_product: DMatrix<f64>,
}

/// One case's probit-transformed PIT values, with the PIT clipped to
/// `[1/(2m), 1 - 1/(2m)]` so every score is finite.
pub fn latent_score_row(ensemble: &PredictiveEnsemble, y: &DVector<f64>) -> Vec<f64> {
    let m = ensemble.n_trajectories() as f64;
    let clip = 1.0 / (2.0 * m);
    (0..ensemble.t_len())
        .map(|t| {
            let pit = marginal_cdf(ensemble, t, y[t]).clamp(clip, 1.0 - clip);
            normal_quantile(pit)
        })
        .collect()
}

/// Stack per-case score rows into a score matrix.
pub fn scores_from_rows(rows: &[Vec<f64>]) -> LatentScores {
    assert!(!rows.is_empty());
    let t_len = rows[0].len();
    LatentScores {
        z: DMatrix::from_fn(rows.len(), t_len, |i, j| rows[i][j]),
    }
}

/// Probit-transformed PIT values for out-of-sample (ensemble, observation)
/// pairs.
pub fn latent_scores(pairs: &[(&PredictiveEnsemble, &DVector<f64>)]) -> Result<LatentScores> {
    if pairs.is_empty() {
        return Err(Error::data("latent scores need at least one case"));
    }
    let t_len = pairs[0].0.t_len();
    let mut rows = Vec::with_capacity(pairs.len());
    for (n, (ensemble, y)) in pairs.iter().enumerate() {
        if ensemble.t_len() != t_len || y.len() != t_len {
            return Err(Error::data(format!(
                "case {n}: trajectory lengths disagree ({} vs {t_len})",
                ensemble.t_len()
            )));
        }
        rows.push(latent_score_row(ensemble, y));
    }
    Ok(scores_from_rows(&rows))
}

/// Conjugate posterior for the latent precision from the score cross-product
/// `U = sum_n z_n z_n^T`.
pub fn fit_copula(scores: &LatentScores, graph: Graph) -> Result<CopulaFit> {
    if graph.dim() != scores.t_len() {
        return Err(Error::config(format!(
            "graph dimension {} != score dimension {}",
            graph.dim(),
            scores.t_len()
        )));
    }
    let u = scores.z.transpose() * &scores.z;
    let u = (&u + u.transpose()) * 0.5;
    let prior = GWishartParams::unit(3.0, graph);
    let posterior = gwishart::posterior_update(&prior, scores.n_cases(), &u)?;
    Ok(CopulaFit {
        posterior,
        cross_product: u,
    })
}

/// Proportion of sorted sample values `<= y`.
pub fn empirical_cdf(sorted: &[f64], y: f64) -> f64 {
    let count = sorted.partition_point(|v| *v <= y);
    count as f64 / sorted.len() as f64
}

/// Generalized inverse of the empirical CDF on a finite ensemble: the largest
/// member whose strictly-below mass does not exceed `u` (ties resolve to the
/// largest qualifying member). Satisfies `F(inverse(u)) >= u`.
pub fn generalized_inverse(sorted: &[f64], u: f64) -> f64 {
    let m = sorted.len();
    assert!(m > 0);
    assert!((0.0..=1.0).contains(&u), "quantile level {u}");
    let idx = ((u * m as f64).ceil() as usize).clamp(1, m);
    sorted[idx - 1]
}

/// One draw of the normalized latent Gaussian vector: sample `K_z` from the
/// posterior, draw `z* ~ N(0, K_z^{-1})` and scale each coordinate to unit
/// marginal variance. A failed positive-definiteness check is retried once.
fn sample_normalized_latent<R: Rng + ?Sized>(
    fit: &CopulaFit,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let k_z = match gwishart::sample_gwishart(&fit.posterior, rng) {
        Ok(k) => k,
        Err(_) => gwishart::sample_gwishart(&fit.posterior, rng)
            .map_err(|e| Error::numerical(format!("latent precision draw failed twice: {e}")))?,
    };
    let t = k_z.dim();
    let chol = k_z.cholesky();
    let cov = chol.inverse();
    let w = DVector::from_fn(t, |_, _| rng.sample(StandardNormal));
    let z_star = solve_lower_transpose(&chol.l(), &w);
    Ok(DVector::from_fn(t, |i, _| z_star[i] / cov[(i, i)].sqrt()))
}

/// One re-correlated trajectory: latent draw mapped through the generalized
/// inverses of the per-lead marginal ensembles (`margins[t]` ascending).
pub fn resample_trajectory<R: Rng + ?Sized>(
    fit: &CopulaFit,
    margins: &[Vec<f64>],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let t_len = fit.posterior.graph.dim();
    if margins.len() != t_len {
        return Err(Error::config(format!(
            "{} margins supplied for latent dimension {t_len}",
            margins.len()
        )));
    }
    let z = sample_normalized_latent(fit, rng)?;
    Ok(DVector::from_fn(t_len, |t, _| {
        generalized_inverse(&margins[t], normal_cdf(z[t]))
    }))
}

/// Replace an ensemble's dependence structure: resample every trajectory from
/// the fitted copula over the ensemble's own margins.
pub fn apply_copula<R: Rng + ?Sized>(
    fit: &CopulaFit,
    univariate: &PredictiveEnsemble,
    rng: &mut R,
) -> Result<PredictiveEnsemble> {
    let t_len = univariate.t_len();
    let margins: Vec<Vec<f64>> = (0..t_len).map(|t| univariate.sorted_margin(t)).collect();
    let m = univariate.n_trajectories();
    let mut trajectories = DMatrix::zeros(m, t_len);
    for row in 0..m {
        let traj = resample_trajectory(fit, &margins, rng)?;
        trajectories.row_mut(row).copy_from(&traj.transpose());
    }
    Ok(PredictiveEnsemble {
        init_time: univariate.init_time,
        trajectories,
        postproc: Postproc::Copula,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use chrono::{TimeZone, Utc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ensemble_1d(values: Vec<f64>) -> PredictiveEnsemble {
        let m = values.len();
        PredictiveEnsemble {
            init_time: Utc.with_ymd_and_hms(2012, 6, 1, 0, 0, 0).unwrap(),
            trajectories: DMatrix::from_vec(m, 1, values),
            postproc: Postproc::None,
        }
    }

    #[test]
    fn latent_scores_probit_values() {
        let m = 1000;
        let ens = ensemble_1d((1..=m).map(|i| i as f64).collect());
        // F(y) = 0.5 -> z = 0.
        let y = DVector::from_vec(vec![500.0]);
        let scores = latent_scores(&[(&ens, &y)]).unwrap();
        assert!(scores.z[(0, 0)].abs() < 1e-12);
        // F(y) = 0.975 -> z ~ 1.95996.
        let y = DVector::from_vec(vec![975.0]);
        let scores = latent_scores(&[(&ens, &y)]).unwrap();
        assert!((scores.z[(0, 0)] - 1.95996).abs() < 1e-4, "{}", scores.z[(0, 0)]);
        // Below all members: PIT clips to 1/(2m) = 0.0005 -> z ~ -3.29.
        let y = DVector::from_vec(vec![0.0]);
        let scores = latent_scores(&[(&ens, &y)]).unwrap();
        assert!((scores.z[(0, 0)] + 3.2905).abs() < 1e-3, "{}", scores.z[(0, 0)]);
    }

    #[test]
    fn fit_copula_ones_outer_product() {
        let scores = scores_from_rows(&[vec![1.0, 1.0, 1.0]]);
        let fit = fit_copula(&scores, Graph::ar1(3)).unwrap();
        assert_eq!(fit.cross_product, DMatrix::from_element(3, 3, 1.0));
        assert_eq!(fit.posterior.delta, 4.0);
        assert_eq!(
            fit.posterior.scale,
            DMatrix::identity(3, 3) + DMatrix::from_element(3, 3, 1.0)
        );
    }

    #[test]
    fn fit_copula_comonotone_scores_rank_one() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|n| vec![0.3 * n as f64 - 0.6; 4])
            .collect();
        let fit = fit_copula(&scores_from_rows(&rows), Graph::full(4)).unwrap();
        let u = &fit.cross_product;
        let total: f64 = (0..5).map(|n| (0.3 * n as f64 - 0.6f64).powi(2)).sum();
        for i in 0..4 {
            for j in 0..4 {
                assert!((u[(i, j)] - total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fit_copula_iid_scores_posterior_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 4000;
        let t = 3;
        let scores = LatentScores {
            z: DMatrix::from_fn(n, t, |_, _| rng.sample(StandardNormal)),
        };
        let fit = fit_copula(&scores, Graph::full(t)).unwrap();
        let mut mean = DMatrix::zeros(t, t);
        let n_draws = 400;
        for _ in 0..n_draws {
            mean += gwishart::sample_gwishart(&fit.posterior, &mut rng)
                .unwrap()
                .matrix();
        }
        mean /= n_draws as f64;
        for i in 0..t {
            for j in 0..t {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (mean[(i, j)] - expected).abs() < 0.08,
                    "K_z[{i},{j}] = {}",
                    mean[(i, j)]
                );
            }
        }
    }

    #[test]
    fn generalized_inverse_properties() {
        let sorted: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        // Monotone, reaches both extremes, right-compatible: F(inv(u)) >= u.
        let mut prev = f64::NEG_INFINITY;
        for k in 1..1000 {
            let u = k as f64 / 1000.0;
            let y = generalized_inverse(&sorted, u);
            assert!(y >= prev);
            prev = y;
            assert!(
                empirical_cdf(&sorted, y) >= u,
                "F(inv({u})) = {} < {u}",
                empirical_cdf(&sorted, y)
            );
        }
        assert_eq!(generalized_inverse(&sorted, 0.0005), 1.0);
        assert_eq!(generalized_inverse(&sorted, 0.9999), 100.0);
        // Ties resolve to the shared value.
        let tied = vec![1.0, 2.0, 2.0, 2.0, 5.0];
        assert_eq!(generalized_inverse(&tied, 0.5), 2.0);
    }

    /// Posterior sharply concentrated on a given latent covariance.
    fn concentrated_fit(cov: &DMatrix<f64>, weight: f64, graph: Graph) -> CopulaFit {
        let t = cov.nrows();
        let scale = cov * weight;
        CopulaFit {
            posterior: GWishartParams::new(3.0 + weight, scale, graph).unwrap(),
            cross_product: DMatrix::zeros(t, t),
        }
    }

    #[test]
    fn identity_copula_gives_independent_margins() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let fit = concentrated_fit(&DMatrix::identity(2, 2), 2e5, Graph::full(2));
        let margins = vec![
            (1..=1000).map(|i| i as f64).collect::<Vec<f64>>(),
            (1..=1000).map(|i| i as f64).collect::<Vec<f64>>(),
        ];
        let n = 6000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let traj = resample_trajectory(&fit, &margins, &mut rng).unwrap();
            xs.push(traj[0]);
            ys.push(traj[1]);
        }
        let r = spearman(&xs, &ys);
        assert!(r.abs() < 0.04, "spearman {r}");
    }

    #[test]
    fn near_comonotone_copula_aligns_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut cov = DMatrix::identity(2, 2);
        cov[(0, 1)] = 0.999;
        cov[(1, 0)] = 0.999;
        let fit = concentrated_fit(&cov, 2e5, Graph::full(2));
        let margins = vec![
            (1..=1000).map(|i| i as f64).collect::<Vec<f64>>(),
            (1..=1000).map(|i| i as f64 * 7.0).collect::<Vec<f64>>(),
        ];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..4000 {
            let traj = resample_trajectory(&fit, &margins, &mut rng).unwrap();
            xs.push(traj[0]);
            ys.push(traj[1]);
        }
        let r = spearman(&xs, &ys);
        assert!(r > 0.99, "spearman {r}");
    }

    #[test]
    fn latent_correlation_maps_to_spearman() {
        // Gaussian copula: rho_S = (6/pi) asin(rho/2); at rho = 0.9 that is
        // 0.89143.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut cov = DMatrix::identity(2, 2);
        cov[(0, 1)] = 0.9;
        cov[(1, 0)] = 0.9;
        let fit = concentrated_fit(&cov, 2e5, Graph::full(2));
        let margins = vec![
            (1..=1000).map(|i| i as f64).collect::<Vec<f64>>(),
            (1..=1000).map(|i| i as f64).collect::<Vec<f64>>(),
        ];
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let traj = resample_trajectory(&fit, &margins, &mut rng).unwrap();
            xs.push(traj[0]);
            ys.push(traj[1]);
        }
        let expected = 6.0 / std::f64::consts::PI * (0.45f64).asin();
        let r = spearman(&xs, &ys);
        assert!((r - expected).abs() < 0.02, "spearman {r} vs {expected}");
    }

    #[test]
    fn normalized_latent_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut cov = DMatrix::identity(3, 3) * 4.0;
        cov[(0, 1)] = 2.0;
        cov[(1, 0)] = 2.0;
        let fit = concentrated_fit(&cov, 1e5, Graph::full(3));
        let n = 20_000;
        let mut per_coord = vec![Vec::with_capacity(n); 3];
        for _ in 0..n {
            let z = sample_normalized_latent(&fit, &mut rng).unwrap();
            for t in 0..3 {
                per_coord[t].push(z[t]);
            }
        }
        for (t, coord) in per_coord.iter().enumerate() {
            let v = stats::variance(coord);
            assert!((v - 1.0).abs() < 0.05, "coordinate {t} variance {v}");
        }
    }

    #[test]
    fn copula_preserves_margins() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        // Latent AR(1)-ish posterior from actual correlated scores.
        let n_cases = 120;
        let t_len = 4;
        let mut rows = Vec::new();
        for _ in 0..n_cases {
            let shared: f64 = rng.sample(StandardNormal);
            rows.push(
                (0..t_len)
                    .map(|_| 0.8 * shared + 0.6 * rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>(),
            );
        }
        let fit = fit_copula(&scores_from_rows(&rows), Graph::ar1(t_len)).unwrap();

        // Skewed margins.
        let margins: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                let mut v: Vec<f64> = (0..800)
                    .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2) * (t + 1) as f64)
                    .collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            })
            .collect();

        let n_draws = 10_000;
        let mut resampled = vec![Vec::with_capacity(n_draws); t_len];
        for _ in 0..n_draws {
            let traj = resample_trajectory(&fit, &margins, &mut rng).unwrap();
            for t in 0..t_len {
                resampled[t].push(traj[t]);
            }
        }
        for t in 0..t_len {
            let (_, p) = stats::ks_two_sample(&resampled[t], &margins[t]);
            assert!(p > 0.01, "margin {t} not preserved, KS p = {p}");
        }
    }

    fn spearman(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            let mut r = vec![0.0; v.len()];
            for (pos, &i) in idx.iter().enumerate() {
                r[i] = pos as f64;
            }
            r
        };
        let rx = rank(x);
        let ry = rank(y);
        let mx = stats::mean(&rx);
        let my = stats::mean(&ry);
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for i in 0..x.len() {
            num += (rx[i] - mx) * (ry[i] - my);
            dx += (rx[i] - mx).powi(2);
            dy += (ry[i] - my).powi(2);
        }
        num / (dx * dy).sqrt()
    }
}
