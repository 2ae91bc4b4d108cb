//! Bayesian hierarchical regression of cube-root power on wind-speed
//! covariates, fitted by Gibbs sampling.
//!
//! Per lead time t the cube root of production is `b0_t + b1_t x_t + b2_t
//! x_t^3` plus a Gaussian error vector with precision `K`. The coefficient
//! blocks carry a `N(0, [Diag(n0) (x) K0]^{-1})` prior; both `K` and `K0` get
//! banded G-Wishart priors. The sampler cycles the full conditionals for
//! `beta`, `K` (and `K0` when untied) and the inflation factors `n0`, and
//! posterior predictive trajectories are drawn from the likelihood and mapped
//! back to the power scale.

use std::io::{BufRead, Write as _};
use std::path::Path;

use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::gwishart::{self, GWishartParams, Graph, PrecisionMatrix};
use crate::ingest::TrainingWindow;

/// Default covariate exponents beyond the intercept block.
pub const DEFAULT_POWERS: [u32; 2] = [1, 3];

/// Prior degrees of freedom shared by all precision priors.
const PRIOR_DELTA: f64 = 3.0;

/// Sparse view of the `T x BT` design `[I | Diag(x^p1) | Diag(x^p2) | ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    t_len: usize,
    /// Per-block diagonal entries; block 0 is the intercept (all ones).
    diagonals: Vec<DVector<f64>>,
}

impl DesignMatrix {
    pub fn new(x_w: &DVector<f64>, powers: &[u32]) -> Self {
        let t_len = x_w.len();
        let mut diagonals = Vec::with_capacity(1 + powers.len());
        diagonals.push(DVector::from_element(t_len, 1.0));
        for &p in powers {
            diagonals.push(x_w.map(|v| v.powi(p as i32)));
        }
        DesignMatrix { t_len, diagonals }
    }

    pub fn n_blocks(&self) -> usize {
        self.diagonals.len()
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn block_diagonal(&self, block: usize) -> &DVector<f64> {
        &self.diagonals[block]
    }

    /// Dense materialization of the block layout.
    pub fn dense(&self) -> DMatrix<f64> {
        let b = self.n_blocks();
        let t = self.t_len;
        let mut m = DMatrix::zeros(t, b * t);
        for (a, d) in self.diagonals.iter().enumerate() {
            for i in 0..t {
                m[(i, a * t + i)] = d[i];
            }
        }
        m
    }

    /// `X beta` exploiting the diagonal blocks.
    pub fn apply(&self, beta: &DVector<f64>) -> DVector<f64> {
        let t = self.t_len;
        let mut out = DVector::zeros(t);
        for (a, d) in self.diagonals.iter().enumerate() {
            for i in 0..t {
                out[i] += d[i] * beta[a * t + i];
            }
        }
        out
    }
}

/// Design matrix with the default `(1, x, x^3)` regression form.
pub fn build_design(x_w: &DVector<f64>) -> DesignMatrix {
    DesignMatrix::new(x_w, &DEFAULT_POWERS)
}

/// Elementwise cube root of the (nonnegative) power observations.
pub fn transform(y: &DVector<f64>) -> Result<DVector<f64>> {
    for (i, v) in y.iter().enumerate() {
        if *v < 0.0 || !v.is_finite() {
            return Err(Error::data(format!("power value {v} at index {i}")));
        }
    }
    Ok(y.map(|v| v.cbrt()))
}

/// Model configuration: graphs for the error and coefficient precisions,
/// whether they are tied, covariate powers and sampler settings.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub t_len: usize,
    pub graph_k: Graph,
    pub graph_k0: Graph,
    pub tie_k0_to_k: bool,
    pub covariate_powers: Vec<u32>,
    pub n_gibbs: usize,
    pub n_burn: usize,
    pub m_pred: usize,
    pub seed: u64,
    /// Testing hook: freeze the inflation factors instead of sampling them.
    pub fix_n0: Option<Vec<f64>>,
}

impl ModelConfig {
    /// Joint estimation of marginals and error correlation: AR(1) graphs with
    /// `K0 = K`.
    pub fn full(t_len: usize) -> Self {
        Self::base(t_len, Graph::ar1(t_len), Graph::ar1(t_len), true)
    }

    /// Independent errors with an AR(1) structure on each coefficient block.
    pub fn ind_errors(t_len: usize) -> Self {
        Self::base(t_len, Graph::independence(t_len), Graph::ar1(t_len), false)
    }

    /// Independent errors and independent coefficients.
    pub fn fully_ind(t_len: usize) -> Self {
        Self::base(
            t_len,
            Graph::independence(t_len),
            Graph::independence(t_len),
            false,
        )
    }

    fn base(t_len: usize, graph_k: Graph, graph_k0: Graph, tie: bool) -> Self {
        ModelConfig {
            t_len,
            graph_k,
            graph_k0,
            tie_k0_to_k: tie,
            covariate_powers: DEFAULT_POWERS.to_vec(),
            n_gibbs: 3000,
            n_burn: 1000,
            m_pred: 999,
            seed: 0,
            fix_n0: None,
        }
    }

    pub fn n_blocks(&self) -> usize {
        1 + self.covariate_powers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_gibbs <= self.n_burn {
            return Err(Error::config(format!(
                "n_gibbs {} must exceed n_burn {}",
                self.n_gibbs, self.n_burn
            )));
        }
        if self.m_pred < 2 {
            return Err(Error::config("m_pred must be at least 2"));
        }
        if self.graph_k.dim() != self.t_len || self.graph_k0.dim() != self.t_len {
            return Err(Error::config("graph dimensions must match t_len"));
        }
        if self.n_gibbs - self.n_burn < self.m_pred {
            return Err(Error::config(format!(
                "retained draws {} < m_pred {}",
                self.n_gibbs - self.n_burn,
                self.m_pred
            )));
        }
        if let Some(n0) = &self.fix_n0 {
            if n0.len() != self.n_blocks() || n0.iter().any(|v| *v <= 0.0) {
                return Err(Error::config("fix_n0 must hold one positive value per block"));
            }
        }
        Ok(())
    }
}

/// One joint posterior sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub beta: DVector<f64>,
    pub k: PrecisionMatrix,
    pub n0: Vec<f64>,
}

/// Sampled trajectories on the power scale (MW), one per retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    pub init_time: DateTime<Utc>,
    /// `m x T`; row = trajectory.
    pub trajectories: DMatrix<f64>,
    pub postproc: Postproc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Postproc {
    None,
    Copula,
}

impl Postproc {
    pub fn as_str(&self) -> &'static str {
        match self {
            Postproc::None => "none",
            Postproc::Copula => "copula",
        }
    }
}

impl PredictiveEnsemble {
    pub fn n_trajectories(&self) -> usize {
        self.trajectories.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.trajectories.ncols()
    }

    /// Values of margin `t` across trajectories.
    pub fn margin(&self, t: usize) -> Vec<f64> {
        self.trajectories.column(t).iter().copied().collect()
    }

    /// Ascending-sorted values of margin `t`.
    pub fn sorted_margin(&self, t: usize) -> Vec<f64> {
        let mut v = self.margin(t);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// Empirical CDF of the ensemble's `t`-th margin at `y` (proportion of
/// members `<= y`). Randomized tie handling for PIT is in the verification
/// module.
pub fn marginal_cdf(ensemble: &PredictiveEnsemble, t: usize, y: f64) -> f64 {
    let m = ensemble.n_trajectories();
    let count = ensemble
        .trajectories
        .column(t)
        .iter()
        .filter(|&&v| v <= y)
        .count();
    count as f64 / m as f64
}

/// Sufficient statistics of a training window, accumulated once.
struct WindowStats {
    n_cases: usize,
    t_len: usize,
    n_blocks: usize,
    /// `cross[a][b][i, j] = sum_n d_an[i] d_bn[j]` where `d_an` is block `a`'s
    /// design diagonal for case `n`.
    cross: Vec<Vec<DMatrix<f64>>>,
    /// `mixed[a][i, j] = sum_n d_an[i] y_n[j]`.
    mixed: Vec<DMatrix<f64>>,
    /// `sum_n y_n y_n^T`.
    yy: DMatrix<f64>,
}

impl WindowStats {
    fn accumulate(window: &TrainingWindow, powers: &[u32]) -> Result<Self> {
        let t_len = window.trajectory_len();
        let n_blocks = 1 + powers.len();
        // Sort cases chronologically so permuted windows produce bit-identical
        // sufficient statistics.
        let mut order: Vec<usize> = (0..window.len()).collect();
        order.sort_by_key(|&i| window.cases()[i].init_time);

        let mut cross =
            vec![vec![DMatrix::zeros(t_len, t_len); n_blocks]; n_blocks];
        let mut mixed = vec![DMatrix::zeros(t_len, t_len); n_blocks];
        let mut yy = DMatrix::zeros(t_len, t_len);
        for &idx in &order {
            let case = &window.cases()[idx];
            if case.x_w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::data(format!(
                    "case {}: invalid covariate values",
                    case.init_time
                )));
            }
            let y_raw = case.y.as_ref().expect("training case observed");
            let y = transform(y_raw)
                .map_err(|e| Error::data(format!("case {}: {e}", case.init_time)))?;
            let design = DesignMatrix::new(&case.x_w, powers);
            for a in 0..n_blocks {
                let da = design.block_diagonal(a);
                for b in a..n_blocks {
                    let db = design.block_diagonal(b);
                    let target = &mut cross[a][b];
                    for i in 0..t_len {
                        for j in 0..t_len {
                            target[(i, j)] += da[i] * db[j];
                        }
                    }
                }
                let target = &mut mixed[a];
                for i in 0..t_len {
                    for j in 0..t_len {
                        target[(i, j)] += da[i] * y[j];
                    }
                }
            }
            for i in 0..t_len {
                for j in 0..t_len {
                    yy[(i, j)] += y[i] * y[j];
                }
            }
        }
        // Mirror the upper block triangle: cross[b][a] = cross[a][b]^T.
        for a in 0..n_blocks {
            for b in 0..a {
                cross[a][b] = cross[b][a].transpose();
            }
        }
        Ok(WindowStats {
            n_cases: window.len(),
            t_len,
            n_blocks,
            cross,
            mixed,
            yy,
        })
    }

    /// Posterior precision of `beta`: `[Diag(n0) (x) K_eff] + sum_n X_n^T K X_n`.
    fn beta_precision(
        &self,
        k: &DMatrix<f64>,
        k_eff: &DMatrix<f64>,
        n0: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let t = self.t_len;
        for a in 0..self.n_blocks {
            for b in 0..self.n_blocks {
                let c = &self.cross[a][b];
                for i in 0..t {
                    for j in 0..t {
                        let mut v = k[(i, j)] * c[(i, j)];
                        if a == b {
                            v += n0[a] * k_eff[(i, j)];
                        }
                        out[(a * t + i, b * t + j)] = v;
                    }
                }
            }
        }
    }

    /// `sum_n X_n^T K y_n`.
    fn beta_rhs(&self, k: &DMatrix<f64>, out: &mut DVector<f64>) {
        let t = self.t_len;
        for a in 0..self.n_blocks {
            let m = &self.mixed[a];
            for i in 0..t {
                let mut v = 0.0;
                for j in 0..t {
                    v += k[(i, j)] * m[(i, j)];
                }
                out[a * t + i] = v;
            }
        }
    }

    /// Residual cross-product `sum_n (y_n - X_n beta)(y_n - X_n beta)^T`,
    /// expanded through the sufficient statistics.
    fn residual_cross_product(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let t = self.t_len;
        let mut s = self.yy.clone();
        for a in 0..self.n_blocks {
            let m = &self.mixed[a];
            for i in 0..t {
                let bi = beta[a * t + i];
                for j in 0..t {
                    s[(i, j)] -= bi * m[(i, j)];
                    s[(j, i)] -= bi * m[(i, j)];
                }
            }
        }
        for a in 0..self.n_blocks {
            for b in 0..self.n_blocks {
                let c = &self.cross[a][b];
                for i in 0..t {
                    let bi = beta[a * t + i];
                    for j in 0..t {
                        s[(i, j)] += bi * beta[b * t + j] * c[(i, j)];
                    }
                }
            }
        }
        // Symmetrize round-off.
        for i in 0..t {
            for j in (i + 1)..t {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }
}

/// Solve `L^T u = z` reading only the lower triangle of `l`.
pub(crate) fn solve_lower_transpose(l: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut u = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut v = z[i];
        for k in (i + 1)..n {
            v -= l[(k, i)] * u[k];
        }
        u[i] = v / l[(i, i)];
    }
    u
}

/// Outer-product accumulation `sum_a n0_a beta_a beta_a^T`.
fn coefficient_cross_product(beta: &DVector<f64>, n0: &[f64], t_len: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(t_len, t_len);
    for (a, &w) in n0.iter().enumerate() {
        for i in 0..t_len {
            let bi = beta[a * t_len + i];
            for j in 0..t_len {
                s[(i, j)] += w * bi * beta[a * t_len + j];
            }
        }
    }
    s
}

/// Gibbs sampler over `(beta, K[, K0], n0)`. Returns the retained post-burn-in
/// draws; deterministic given `(window, config, seed)`.
pub fn gibbs_fit(window: &TrainingWindow, config: &ModelConfig) -> Result<Vec<PosteriorDraw>> {
    config.validate()?;
    if window.trajectory_len() != config.t_len {
        return Err(Error::config(format!(
            "window trajectory length {} != configured {}",
            window.trajectory_len(),
            config.t_len
        )));
    }
    let stats = WindowStats::accumulate(window, &config.covariate_powers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_chain(&stats, config, &mut rng)
}

fn run_chain(
    stats: &WindowStats,
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PosteriorDraw>> {
    let t = stats.t_len;
    let b = stats.n_blocks;
    let n = stats.n_cases;
    let dim = b * t;

    let prior_k = GWishartParams::unit(PRIOR_DELTA, config.graph_k);
    let prior_k0 = GWishartParams::unit(PRIOR_DELTA, config.graph_k0);

    let mut k = PrecisionMatrix::identity(t);
    let mut k0 = PrecisionMatrix::identity(t);
    let mut n0: Vec<f64> = match &config.fix_n0 {
        Some(v) => v.clone(),
        None => vec![1.0; b],
    };

    let mut precision = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let gamma_shape = (t as f64 + 2.0) / 2.0;

    let mut draws = Vec::with_capacity(config.n_gibbs - config.n_burn);
    for iter in 0..config.n_gibbs {
        // beta | K, K0, n0
        let k_eff_mat = if config.tie_k0_to_k {
            k.matrix()
        } else {
            k0.matrix()
        };
        stats.beta_precision(k.matrix(), k_eff_mat, &n0, &mut precision);
        stats.beta_rhs(k.matrix(), &mut rhs);
        let chol = nalgebra::Cholesky::new(precision.clone()).ok_or_else(|| {
            Error::numerical(format!(
                "beta precision not positive definite at iteration {iter} \
                 (n0 = {n0:?}); inputs may be degenerate"
            ))
        })?;
        let mean = chol.solve(&rhs);
        let z = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let l = chol.l();
        let beta = &mean + solve_lower_transpose(&l, &z);

        // K | beta, n0
        let mut s_k = stats.residual_cross_product(&beta);
        if config.tie_k0_to_k {
            s_k += coefficient_cross_product(&beta, &n0, t);
        }
        let n_obs_k = if config.tie_k0_to_k { n + b } else { n };
        let post_k = gwishart::posterior_update(&prior_k, n_obs_k, &s_k)?;
        k = gwishart::sample_gwishart(&post_k, rng)
            .map_err(|e| Error::numerical(format!("iteration {iter}, K draw: {e}")))?;

        // K0 | beta, n0 (untied only)
        if !config.tie_k0_to_k {
            let s0 = coefficient_cross_product(&beta, &n0, t);
            let post_k0 = gwishart::posterior_update(&prior_k0, b, &s0)?;
            k0 = gwishart::sample_gwishart(&post_k0, rng)
                .map_err(|e| Error::numerical(format!("iteration {iter}, K0 draw: {e}")))?;
        }

        // n0 | beta, K_eff
        if config.fix_n0.is_none() {
            let k_eff_mat = if config.tie_k0_to_k {
                k.matrix()
            } else {
                k0.matrix()
            };
            for a in 0..b {
                let block = beta.rows(a * t, t);
                let quad = (k_eff_mat * block).dot(&block).max(1e-12);
                let gamma = Gamma::new(gamma_shape, 2.0 / quad)
                    .map_err(|e| Error::numerical(format!("n0 draw: {e}")))?;
                n0[a] = gamma.sample(rng);
            }
        }

        if iter >= config.n_burn {
            draws.push(PosteriorDraw {
                beta: beta.clone(),
                k: k.clone(),
                n0: n0.clone(),
            });
        }
    }
    Ok(draws)
}

/// Posterior predictive trajectories for the target covariates: one draw from
/// the likelihood per (evenly subsampled) posterior draw, clamped at zero on
/// the cube-root scale and cubed back to MW.
pub fn predict<R: Rng + ?Sized>(
    draws: &[PosteriorDraw],
    x_w_target: &DVector<f64>,
    init_time: DateTime<Utc>,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<PredictiveEnsemble> {
    if draws.len() < config.m_pred {
        return Err(Error::config(format!(
            "need at least {} posterior draws, got {}",
            config.m_pred,
            draws.len()
        )));
    }
    let t = x_w_target.len();
    if t != config.t_len {
        return Err(Error::config("target covariate length mismatch"));
    }
    let design = DesignMatrix::new(x_w_target, &config.covariate_powers);
    let m = config.m_pred;
    let mut trajectories = DMatrix::zeros(m, t);
    for row in 0..m {
        let draw = &draws[row * draws.len() / m];
        let mean = design.apply(&draw.beta);
        let chol = draw.k.cholesky();
        let z = DVector::from_fn(t, |_, _| rng.sample(StandardNormal));
        let noise = solve_lower_transpose(&chol.l(), &z);
        for j in 0..t {
            let v = (mean[j] + noise[j]).max(0.0);
            trajectories[(row, j)] = v * v * v;
        }
    }
    Ok(PredictiveEnsemble {
        init_time,
        trajectories,
        postproc: Postproc::None,
    })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub const ENSEMBLE_CSV_HEADER: &str = "trajectory_id,lead_h,power_mw";
pub const CHECKPOINT_MAGIC: &str = "# windcast-checkpoint v1";
const ENSEMBLE_MAGIC: &str = "# windcast-ensemble v1";

pub fn write_ensemble_csv(path: &Path, ensemble: &PredictiveEnsemble) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{ENSEMBLE_MAGIC}")?;
    writeln!(f, "# init_time={}", ensemble.init_time.to_rfc3339())?;
    writeln!(f, "# postproc={}", ensemble.postproc.as_str())?;
    writeln!(f, "{ENSEMBLE_CSV_HEADER}")?;
    for row in 0..ensemble.n_trajectories() {
        for t in 0..ensemble.t_len() {
            writeln!(f, "{},{},{}", row + 1, t + 1, ensemble.trajectories[(row, t)])?;
        }
    }
    Ok(())
}

pub fn read_ensemble_csv(path: &Path) -> Result<PredictiveEnsemble> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut init_time = None;
    let mut postproc = Postproc::None;
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for line in f.lines() {
        let line = line?;
        if let Some(meta) = line.strip_prefix("# init_time=") {
            init_time = Some(
                DateTime::parse_from_rfc3339(meta.trim())
                    .map_err(|e| Error::data(format!("bad init_time: {e}")))?
                    .with_timezone(&Utc),
            );
            continue;
        }
        if let Some(meta) = line.strip_prefix("# postproc=") {
            postproc = match meta.trim() {
                "none" => Postproc::None,
                "copula" => Postproc::Copula,
                other => return Err(Error::data(format!("unknown postproc {other}"))),
            };
            continue;
        }
        if line.starts_with('#') || line.starts_with("trajectory_id") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!("bad ensemble row: {line}")));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|e| Error::data(format!("bad trajectory id: {e}")))?;
        let lead: usize = fields[1]
            .parse()
            .map_err(|e| Error::data(format!("bad lead: {e}")))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|e| Error::data(format!("bad value: {e}")))?;
        cells.push((id - 1, lead - 1, v));
    }
    let init_time = init_time.ok_or_else(|| Error::data("ensemble file missing init_time"))?;
    let m = cells.iter().map(|c| c.0).max().map_or(0, |v| v + 1);
    let t = cells.iter().map(|c| c.1).max().map_or(0, |v| v + 1);
    if cells.len() != m * t {
        return Err(Error::data("ensemble file has missing cells"));
    }
    let mut trajectories = DMatrix::zeros(m, t);
    for (i, j, v) in cells {
        trajectories[(i, j)] = v;
    }
    Ok(PredictiveEnsemble {
        init_time,
        trajectories,
        postproc,
    })
}

/// Versioned posterior checkpoint: full-precision CSV of every draw's `beta`,
/// in-band `K` entries and `n0`.
pub fn write_checkpoint(path: &Path, draws: &[PosteriorDraw], seed: u64) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::config("cannot checkpoint an empty draw list"));
    }
    let t = draws[0].k.dim();
    let band = draws[0].k.band();
    let blocks = draws[0].beta.len() / t;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{CHECKPOINT_MAGIC}")?;
    writeln!(
        f,
        "# t={t} blocks={blocks} band={band} draws={} seed={seed}",
        draws.len()
    )?;
    writeln!(f, "draw,param,index,value")?;
    for (d, draw) in draws.iter().enumerate() {
        for (i, v) in draw.beta.iter().enumerate() {
            writeln!(f, "{d},beta,{i},{v}")?;
        }
        for (i, j, v) in draw.k.banded_entries() {
            writeln!(f, "{d},k,{},{v}", i * t + j)?;
        }
        for (i, v) in draw.n0.iter().enumerate() {
            writeln!(f, "{d},n0,{i},{v}")?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<PosteriorDraw>> {
    let content = std::fs::read_to_string(path)?;
    let mut lines = content.lines();
    match lines.next() {
        Some(l) if l == CHECKPOINT_MAGIC => {}
        other => {
            return Err(Error::data(format!(
                "not a checkpoint file (first line {other:?})"
            )))
        }
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::data("checkpoint missing metadata line"))?;
    let mut t = 0usize;
    let mut blocks = 0usize;
    let mut band = 0usize;
    let mut n_draws = 0usize;
    for part in meta.trim_start_matches('#').split_whitespace() {
        if let Some((key, value)) = part.split_once('=') {
            let v: usize = value
                .parse()
                .map_err(|e| Error::data(format!("bad checkpoint metadata {part}: {e}")))?;
            match key {
                "t" => t = v,
                "blocks" => blocks = v,
                "band" => band = v,
                "draws" => n_draws = v,
                _ => {}
            }
        }
    }
    if t == 0 || blocks == 0 || n_draws == 0 {
        return Err(Error::data("incomplete checkpoint metadata"));
    }

    let mut betas = vec![DVector::zeros(blocks * t); n_draws];
    let mut k_entries: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_draws];
    let mut n0s = vec![vec![0.0; blocks]; n_draws];
    for line in lines {
        if line.starts_with('#') || line.starts_with("draw,") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::data(format!("bad checkpoint row: {line}")));
        }
        let d: usize = fields[0]
            .parse()
            .map_err(|e| Error::data(format!("bad draw index: {e}")))?;
        let idx: usize = fields[2]
            .parse()
            .map_err(|e| Error::data(format!("bad index: {e}")))?;
        let v: f64 = fields[3]
            .parse()
            .map_err(|e| Error::data(format!("bad value: {e}")))?;
        if d >= n_draws {
            return Err(Error::data(format!("draw index {d} out of range")));
        }
        match fields[1] {
            "beta" => betas[d][idx] = v,
            "k" => k_entries[d].push((idx / t, idx % t, v)),
            "n0" => n0s[d][idx] = v,
            other => return Err(Error::data(format!("unknown parameter {other}"))),
        }
    }
    let mut draws = Vec::with_capacity(n_draws);
    for d in 0..n_draws {
        let k = PrecisionMatrix::from_banded_entries(t, band, k_entries[d].iter().copied())?;
        draws.push(PosteriorDraw {
            beta: betas[d].clone(),
            k,
            n0: n0s[d].clone(),
        });
    }
    Ok(draws)
}
