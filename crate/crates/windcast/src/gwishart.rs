//! Banded conditional-independence graphs and G-Wishart sampling.
//!
//! The G-Wishart distribution `W_G(delta, D)` lives on symmetric positive
//! definite matrices whose entries vanish off the edge set of a graph `G`.
//! Only banded graphs are supported: band 0 is the independence graph, band 1
//! the AR(1) structure, band `T-1` the full (unconstrained) graph.
//!
//! Parameterization: the density is proportional to
//! `|K|^((delta-2)/2) * exp(-tr(K D) / 2)`, so with the independence graph and
//! `delta = 3`, `D = I` every marginal precision is Gamma(3/2, 1/2), and a
//! full-graph draw is an ordinary Wishart with `delta + T - 1` degrees of
//! freedom and scale `D^{-1}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence tolerance for the iterative completion step of the direct
/// sampler (max absolute entry change per sweep).
pub const COMPLETION_TOL: f64 = 1e-8;

/// Sweep limit for the completion step.
pub const COMPLETION_MAX_ITER: usize = 1000;

/// Banded conditional-independence structure over `t` lead times: edge (i, j)
/// present iff `|i - j| <= band`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    t: usize,
    band: usize,
}

impl Graph {
    pub fn banded(t: usize, band: usize) -> Self {
        assert!(t >= 1, "graph dimension must be positive");
        Graph {
            t,
            band: band.min(t.saturating_sub(1)),
        }
    }

    /// Independence graph: edges only on the diagonal.
    pub fn independence(t: usize) -> Self {
        Self::banded(t, 0)
    }

    /// AR(1) structure: edges between adjacent lead times.
    pub fn ar1(t: usize) -> Self {
        Self::banded(t, 1)
    }

    /// Complete graph: no structural zeros.
    pub fn full(t: usize) -> Self {
        Self::banded(t, t.saturating_sub(1))
    }

    pub fn dim(&self) -> usize {
        self.t
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn is_full(&self) -> bool {
        self.band + 1 >= self.t
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.band
    }

    /// Neighbors of `j` (excluding `j` itself), in ascending order.
    pub fn neighbors(&self, j: usize) -> Vec<usize> {
        let lo = j.saturating_sub(self.band);
        let hi = (j + self.band).min(self.t - 1);
        (lo..=hi).filter(|&i| i != j).collect()
    }
}

/// Parameters of a G-Wishart distribution.
#[derive(Debug, Clone)]
pub struct GWishartParams {
    pub delta: f64,
    pub scale: DMatrix<f64>,
    pub graph: Graph,
}

impl GWishartParams {
    pub fn new(delta: f64, scale: DMatrix<f64>, graph: Graph) -> Result<Self> {
        if delta <= 2.0 {
            return Err(Error::config(format!(
                "G-Wishart degrees of freedom must exceed 2, got {delta}"
            )));
        }
        if scale.nrows() != graph.dim() || scale.ncols() != graph.dim() {
            return Err(Error::config(format!(
                "scale matrix is {}x{} but graph dimension is {}",
                scale.nrows(),
                scale.ncols(),
                graph.dim()
            )));
        }
        check_symmetric(&scale)?;
        Ok(GWishartParams {
            delta,
            scale,
            graph,
        })
    }

    /// Unit-scale prior `W_G(delta, I)`.
    pub fn unit(delta: f64, graph: Graph) -> Self {
        GWishartParams {
            delta,
            scale: DMatrix::identity(graph.dim(), graph.dim()),
            graph,
        }
    }
}

/// A symmetric positive-definite precision matrix with exact structural zeros
/// outside its band.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    matrix: DMatrix<f64>,
    band: usize,
}

impl PrecisionMatrix {
    /// Validates symmetry, positive definiteness and the structural zeros.
    pub fn new(matrix: DMatrix<f64>, band: usize) -> Result<Self> {
        check_symmetric(&matrix)?;
        let t = matrix.nrows();
        for i in 0..t {
            for j in 0..t {
                if i.abs_diff(j) > band && matrix[(i, j)] != 0.0 {
                    return Err(Error::numerical(format!(
                        "entry ({i}, {j}) = {} violates band {band}",
                        matrix[(i, j)]
                    )));
                }
            }
        }
        if Cholesky::new(matrix.clone()).is_none() {
            return Err(Error::numerical(
                "precision matrix is not positive definite",
            ));
        }
        Ok(PrecisionMatrix { matrix, band })
    }

    pub fn identity(t: usize) -> Self {
        PrecisionMatrix {
            matrix: DMatrix::identity(t, t),
            band: 0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cholesky(&self) -> Cholesky<f64, Dyn> {
        // PD was verified at construction.
        Cholesky::new(self.matrix.clone()).expect("validated matrix lost positive definiteness")
    }

    /// Covariance matrix `K^{-1}`.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.cholesky().inverse()
    }

    pub fn log_det(&self) -> f64 {
        self.cholesky()
            .l()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
            * 2.0
    }

    /// In-band entries of the upper triangle, row-major, as `(i, j, value)`.
    pub fn banded_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let t = self.dim();
        let band = self.band;
        (0..t).flat_map(move |i| {
            (i..=(i + band).min(t - 1)).map(move |j| (i, j, self.matrix[(i, j)]))
        })
    }

    /// Rebuild from upper-triangle in-band entries, mirroring to the lower
    /// triangle. Entries not supplied stay zero.
    pub fn from_banded_entries(
        t: usize,
        band: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut m = DMatrix::zeros(t, t);
        for (i, j, v) in entries {
            if i >= t || j >= t || i.abs_diff(j) > band {
                return Err(Error::data(format!("entry ({i}, {j}) outside band {band}")));
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        PrecisionMatrix::new(m, band)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::numerical(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::numerical("matrix has non-finite entries"));
            }
            let scale = a.abs().max(b.abs()).max(1.0);
            if (a - b).abs() > 1e-9 * scale {
                return Err(Error::numerical(format!(
                    "matrix not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Draw from the unconstrained Wishart matching the `W_G` parameterization on
/// the full graph: Bartlett construction with `delta + T - 1` degrees of
/// freedom and scale `D^{-1}`, so the mean is `(delta + T - 1) D^{-1}`.
pub fn sample_wishart<R: Rng + ?Sized>(
    delta: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<PrecisionMatrix> {
    let t = scale.nrows();
    check_symmetric(scale)?;
    if delta <= 0.0 {
        return Err(Error::config(format!(
            "Wishart degrees of freedom must be positive, got {delta}"
        )));
    }
    let chol_d = Cholesky::new(scale.clone())
        .ok_or_else(|| Error::numerical("Wishart scale matrix not positive definite"))?;
    // C C^T = D^{-1} with C = L_D^{-T}.
    let c = chol_d
        .l()
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(t, t))
        .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;

    let df = delta + t as f64 - 1.0;
    let mut bartlett = DMatrix::zeros(t, t);
    for i in 0..t {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::numerical(format!("chi-squared setup failed: {e}")))?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let factor = c * bartlett;
    let k = &factor * factor.transpose();
    // Symmetrize away round-off before validation.
    let k = (&k + k.transpose()) * 0.5;
    PrecisionMatrix::new(k, t.saturating_sub(1))
}

/// Direct G-Wishart sampler: draw from the unconstrained Wishart, then
/// complete its inverse over the graph so that off-band entries of the
/// resulting precision are exact zeros.
pub fn sample_gwishart<R: Rng + ?Sized>(
    params: &GWishartParams,
    rng: &mut R,
) -> Result<PrecisionMatrix> {
    let graph = &params.graph;
    let full = sample_wishart(params.delta, &params.scale, rng)?;
    let sigma = full.inverse();
    let (completed, iters, last_delta) = complete_over_graph(&sigma, graph)?;
    let chol = Cholesky::new(completed).ok_or_else(|| {
        Error::numerical(format!(
            "completed covariance not positive definite after {iters} sweeps"
        ))
    })?;
    let mut k = chol.inverse();
    // The completion drives off-band entries of the inverse to ~tol; make the
    // structural zeros exact, then re-validate definiteness.
    let t = graph.dim();
    for i in 0..t {
        for j in 0..t {
            if !graph.is_edge(i, j) {
                k[(i, j)] = 0.0;
            } else if i != j {
                let avg = 0.5 * (k[(i, j)] + k[(j, i)]);
                k[(i, j)] = avg;
                k[(j, i)] = avg;
            }
        }
    }
    PrecisionMatrix::new(k, graph.band()).map_err(|e| {
        Error::numerical(format!(
            "G-Wishart draw invalid after completion ({iters} sweeps, last change {last_delta:.2e}): {e}"
        ))
    })
}

/// Conjugate update: `W_G(delta, D) -> W_G(delta + n_obs, D + S)` on the same
/// graph.
pub fn posterior_update(
    prior: &GWishartParams,
    n_obs: usize,
    cross_product: &DMatrix<f64>,
) -> Result<GWishartParams> {
    if cross_product.nrows() != prior.graph.dim() || cross_product.ncols() != prior.graph.dim() {
        return Err(Error::config(format!(
            "cross-product matrix is {}x{}, expected {0}x{0} with dim {}",
            cross_product.nrows(),
            cross_product.ncols(),
            prior.graph.dim()
        )));
    }
    check_symmetric(cross_product)?;
    Ok(GWishartParams {
        delta: prior.delta + n_obs as f64,
        scale: &prior.scale + cross_product,
        graph: prior.graph,
    })
}

/// Iterative completion: find `W` agreeing with `sigma` on all graph edges
/// (and the diagonal) such that `W^{-1}` vanishes off the graph. Cycles over
/// columns, each time regressing the column on its neighbors. The stopping
/// tolerance is scaled by the magnitude of `sigma` so the rule is invariant
/// to the data units.
///
/// Returns `(W, sweeps, last_max_change)`.
fn complete_over_graph(
    sigma: &DMatrix<f64>,
    graph: &Graph,
) -> Result<(DMatrix<f64>, usize, f64)> {
    let t = graph.dim();
    let scale: f64 = sigma.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = COMPLETION_TOL * scale;
    let mut w = sigma.clone();
    let mut new_col = DVector::zeros(t);
    let mut last_delta = f64::INFINITY;
    for sweep in 1..=COMPLETION_MAX_ITER {
        let mut max_change: f64 = 0.0;
        for j in 0..t {
            let nbrs = graph.neighbors(j);
            if nbrs.is_empty() {
                for i in 0..t {
                    if i != j {
                        max_change = max_change.max(w[(i, j)].abs());
                        w[(i, j)] = 0.0;
                        w[(j, i)] = 0.0;
                    }
                }
                continue;
            }
            let coef = solve_neighbor_system(&w, sigma, &nbrs, j)?;
            for i in 0..t {
                if i == j {
                    continue;
                }
                let mut v = 0.0;
                for (idx, &n) in nbrs.iter().enumerate() {
                    v += w[(i, n)] * coef[idx];
                }
                new_col[i] = v;
            }
            for i in 0..t {
                if i != j {
                    max_change = max_change.max((new_col[i] - w[(i, j)]).abs());
                    w[(i, j)] = new_col[i];
                    w[(j, i)] = new_col[i];
                }
            }
        }
        last_delta = max_change;
        if max_change < tol {
            return Ok((w, sweep, max_change));
        }
    }
    Err(Error::numerical(format!(
        "graph completion did not converge within {COMPLETION_MAX_ITER} sweeps \
         (last max change {last_delta:.3e}, tolerance {tol:.3e})"
    )))
}

/// Solve `W[nbrs, nbrs] b = sigma[nbrs, j]`, with closed forms for the 1x1 and
/// 2x2 systems that dominate banded graphs.
fn solve_neighbor_system(
    w: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    nbrs: &[usize],
    j: usize,
) -> Result<Vec<f64>> {
    match nbrs {
        [a] => Ok(vec![sigma[(*a, j)] / w[(*a, *a)]]),
        [a, b] => {
            let (waa, wab, wbb) = (w[(*a, *a)], w[(*a, *b)], w[(*b, *b)]);
            let det = waa * wbb - wab * wab;
            if det <= 0.0 {
                return Err(Error::numerical("neighbor block lost definiteness"));
            }
            let (sa, sb) = (sigma[(*a, j)], sigma[(*b, j)]);
            Ok(vec![
                (wbb * sa - wab * sb) / det,
                (waa * sb - wab * sa) / det,
            ])
        }
        _ => {
            let n = nbrs.len();
            let mut block = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (r, &i) in nbrs.iter().enumerate() {
                rhs[r] = sigma[(i, j)];
                for (c, &k) in nbrs.iter().enumerate() {
                    block[(r, c)] = w[(i, k)];
                }
            }
            let chol = Cholesky::new(block)
                .ok_or_else(|| Error::numerical("neighbor block lost definiteness"))?;
            Ok(chol.solve(&rhs).iter().copied().collect())
        }
    }
}

/// Debug hook: write a matrix as row-major CSV.
pub fn dump_csv<W: std::io::Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn graph_band_semantics() {
        let g = Graph::ar1(5);
        assert!(g.is_edge(2, 3) && g.is_edge(3, 2) && g.is_edge(1, 1));
        assert!(!g.is_edge(0, 2));
        assert_eq!(g.neighbors(0), vec![1]);
        assert_eq!(g.neighbors(2), vec![1, 3]);
        assert!(Graph::independence(4).neighbors(2).is_empty());
        assert!(Graph::full(4).is_full());
        assert_eq!(Graph::banded(3, 10).band(), 2);
    }

    #[test]
    fn wishart_univariate_matches_gamma_moments() {
        // delta=3, D=1 must be Gamma(3/2, 1/2): mean 3, variance 6.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = DMatrix::identity(1, 1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_wishart(3.0, &d, &mut rng).unwrap().matrix()[(0, 0)])
            .collect();
        let m = stats::mean(&draws);
        let v = stats::variance(&draws);
        let se_mean = (6.0 / n as f64).sqrt();
        assert!((m - 3.0).abs() < 3.0 * se_mean, "mean {m}");
        // SE of the sample variance from the empirical fourth moment.
        let mu4 = draws.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((mu4 - v * v) / n as f64).sqrt();
        assert!((v - 6.0).abs() < 3.0 * se_var, "variance {v}");
    }

    #[test]
    fn wishart_scaled_univariate_mean() {
        // D = 2 with delta=3 is Gamma(3/2, 1): mean 1.5.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = DMatrix::from_element(1, 1, 2.0);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_wishart(3.0, &d, &mut rng).unwrap().matrix()[(0, 0)])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.5).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn wishart_full_graph_mean_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = 3;
        let mut d = DMatrix::identity(t, t) * 2.0;
        d[(0, 1)] = 0.5;
        d[(1, 0)] = 0.5;
        let delta = 4.0;
        let expected = Cholesky::new(d.clone()).unwrap().inverse() * (delta + t as f64 - 1.0);
        let n = 40_000;
        let mut acc = DMatrix::zeros(t, t);
        for _ in 0..n {
            acc += sample_wishart(delta, &d, &mut rng).unwrap().matrix();
        }
        acc /= n as f64;
        for i in 0..t {
            for j in 0..t {
                // Entry SD is O(delta) scaled by the covariance; 3 MC SE with a
                // conservative bound.
                assert!(
                    (acc[(i, j)] - expected[(i, j)]).abs() < 0.06,
                    "mean mismatch at ({i},{j}): {} vs {}",
                    acc[(i, j)],
                    expected[(i, j)]
                );
            }
        }
    }

    #[test]
    fn wishart_rejects_non_pd_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut d = DMatrix::identity(2, 2);
        d[(0, 1)] = 2.0;
        d[(1, 0)] = 2.0;
        assert!(sample_wishart(3.0, &d, &mut rng).is_err());
    }

    #[test]
    fn gwishart_band0_gamma_marginals_and_exact_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let t = 4;
        let params = GWishartParams::unit(3.0, Graph::independence(t));
        let n = 20_000;
        let mut diag_sums = vec![0.0; t];
        let mut diag_sq = vec![0.0; t];
        for _ in 0..n {
            let k = sample_gwishart(&params, &mut rng).unwrap();
            for i in 0..t {
                for j in 0..t {
                    if i != j {
                        assert_eq!(k.matrix()[(i, j)], 0.0);
                    }
                }
                diag_sums[i] += k.matrix()[(i, i)];
                diag_sq[i] += k.matrix()[(i, i)].powi(2);
            }
        }
        for i in 0..t {
            let m = diag_sums[i] / n as f64;
            let v = diag_sq[i] / n as f64 - m * m;
            assert!((m - 3.0).abs() < 3.0 * (6.0f64 / n as f64).sqrt(), "mean {m}");
            // Var of the variance estimate for Gamma(3/2,1/2) ~ (mu4 - v^2)/n;
            // mu4 = 3 sigma^4 + ... use a conservative 4x bound.
            assert!((v - 6.0).abs() < 0.6, "variance {v}");
        }
    }

    #[test]
    fn gwishart_full_graph_matches_wishart_in_law() {
        let mut rng_a = ChaCha8Rng::seed_from_u64(15);
        let mut rng_b = ChaCha8Rng::seed_from_u64(16);
        let t = 4;
        let mut d = DMatrix::identity(t, t);
        d[(0, 1)] = 0.3;
        d[(1, 0)] = 0.3;
        let params = GWishartParams::new(3.0, d.clone(), Graph::full(t)).unwrap();
        let n = 10_000;
        let a: Vec<f64> = (0..n)
            .map(|_| sample_gwishart(&params, &mut rng_a).unwrap().log_det())
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| sample_wishart(3.0, &d, &mut rng_b).unwrap().log_det())
            .collect();
        let (_, p) = stats::ks_two_sample(&a, &b);
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn gwishart_band1_structural_zero_and_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = GWishartParams::unit(3.0, Graph::ar1(3));
        for _ in 0..200 {
            let k = sample_gwishart(&params, &mut rng).unwrap();
            assert_eq!(k.matrix()[(0, 2)], 0.0);
            assert_eq!(k.matrix()[(2, 0)], 0.0);
            assert!(Cholesky::new(k.matrix().clone()).is_some());
        }
    }

    #[test]
    fn gwishart_random_bands_pd_and_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for t in [1usize, 2, 5, 6] {
            for band in 0..t {
                let params = GWishartParams::unit(3.5, Graph::banded(t, band));
                for _ in 0..20 {
                    let k = sample_gwishart(&params, &mut rng).unwrap();
                    for i in 0..t {
                        for j in 0..t {
                            if i.abs_diff(j) > band {
                                assert_eq!(k.matrix()[(i, j)], 0.0);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn posterior_update_arithmetic() {
        let prior = GWishartParams::unit(3.0, Graph::ar1(3));
        let zero = DMatrix::zeros(3, 3);
        let same = posterior_update(&prior, 0, &zero).unwrap();
        assert_eq!(same.delta, 3.0);
        assert_eq!(same.scale, prior.scale);

        let s = DMatrix::identity(3, 3) * 2.0;
        let upd = posterior_update(&prior, 7, &s).unwrap();
        assert_eq!(upd.delta, 10.0);
        assert_eq!(upd.scale, DMatrix::identity(3, 3) * 3.0);
        assert_eq!(upd.graph, prior.graph);
    }

    #[test]
    fn banded_entries_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let params = GWishartParams::unit(3.0, Graph::ar1(5));
        let k = sample_gwishart(&params, &mut rng).unwrap();
        let rebuilt =
            PrecisionMatrix::from_banded_entries(5, 1, k.banded_entries()).unwrap();
        assert_eq!(rebuilt.matrix(), k.matrix());
    }

    #[test]
    fn precision_matrix_rejects_band_violation() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 2)] = 0.1;
        m[(2, 0)] = 0.1;
        assert!(PrecisionMatrix::new(m, 1).is_err());
    }
}
