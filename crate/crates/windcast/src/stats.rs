//! Small statistical helpers shared by the model, copula and verification
//! modules and by the test suites: standard-normal transforms, empirical
//! quantiles, and uniformity tests (Kolmogorov-Smirnov, chi-squared).

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal quantile function. `p` must lie strictly in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument {p} outside (0,1)");
    Normal::standard().inverse_cdf(p)
}

/// Linear-interpolation (type 7) empirical quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, p)
}

/// Type-7 quantile of an ascending-sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Median of an unsorted sample (average of the two middle order statistics
/// for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    assert!(n > 0);
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (denominator n − 1).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Survival function of the asymptotic Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    // Stephens' finite-sample correction of the asymptotic distribution.
    let sqrt_n = n_eff.sqrt();
    kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

/// One-sample KS test against the uniform distribution on [0, 1].
/// Returns (statistic, p-value).
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    assert!(n > 0);
    let mut d: f64 = 0.0;
    for (i, u) in v.iter().enumerate() {
        let hi = (i + 1) as f64 / n as f64 - u;
        let lo = u - i as f64 / n as f64;
        d = d.max(hi.max(lo));
    }
    (d, ks_pvalue(d, n as f64))
}

/// Two-sample KS test. Returns (statistic, p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (xa.len(), xb.len());
    assert!(na > 0 && nb > 0);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let n_eff = (na as f64 * nb as f64) / (na + nb) as f64;
    (d, ks_pvalue(d, n_eff))
}

/// Chi-squared goodness-of-fit test of observed counts against equal expected
/// counts. Returns (statistic, p-value) with `counts.len() - 1` degrees of
/// freedom.
pub fn chi2_uniform(counts: &[u64]) -> (f64, f64) {
    let k = counts.len();
    assert!(k >= 2);
    let total: u64 = counts.iter().sum();
    assert!(total > 0);
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).unwrap();
    (stat, 1.0 - dist.cdf(stat))
}

/// Bin values from [0, 1] into `bins` equal-width counts. Values at 1.0 fall
/// into the last bin.
pub fn histogram_unit(values: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &v in values {
        assert!((0.0..=1.0).contains(&v), "value {v} outside [0,1]");
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Monte-Carlo standard error of a (possibly autocorrelated) chain mean,
/// estimated by non-overlapping batch means.
pub fn batch_means_se(chain: &[f64], n_batches: usize) -> f64 {
    let n = chain.len();
    assert!(n_batches >= 2 && n >= 2 * n_batches);
    let batch_len = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| mean(&chain[b * batch_len..(b + 1) * batch_len]))
        .collect();
    (variance(&means) / n_batches as f64).sqrt()
}
