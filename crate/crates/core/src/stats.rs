//! Quantiles, distribution functions and distance utilities shared by the
//! tests and diagnostics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Order statistic at position `ceil((1 - alpha) B)` (1-based, clamped to
/// `1..=B`). At `alpha = 1` this is the minimum.
pub fn upper_quantile(values: &[f64], alpha: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let b = values.len();
    let k = ((1.0 - alpha) * b as f64 - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    *kth
}

/// Upper `alpha` quantile of the chi-square law with `df` degrees of freedom.
pub fn chi2_quantile(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64).expect("df >= 1").inverse_cdf(1.0 - alpha)
}

pub fn chi2_cdf(df: usize, x: f64) -> f64 {
    ChiSquared::new(df as f64).expect("df >= 1").cdf(x)
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() as f64;
    s.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
    })
}

/// Asymptotic p-value of the KS statistic `d` from `m` observations
/// (Stephens' small-sample correction).
pub fn ks_pvalue(d: f64, m: usize) -> f64 {
    let sm = (m as f64).sqrt();
    let lambda = (sm + 0.12 + 0.11 / sm) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Dvoretzky-Kiefer-Wolfowitz half-width for an empirical CDF from `m`
/// draws at confidence `1 - delta`.
pub fn dkw_band(m: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * m as f64)).sqrt()
}

/// Empirical CDF of a sorted sample at `t` (fraction of values `< t`).
pub fn ecdf_below(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|&v| v < t) as f64 / sorted.len() as f64
}

/// `sup_t |F_a(t) - F_b(t)|` over `points` grid values spanning the pooled
/// 0.1%-99.9% quantile range of the two samples.
pub fn grid_kolmogorov(a: &[f64], b: &[f64], points: usize) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));
    let mut pooled: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
    pooled.sort_by(|x, y| x.total_cmp(y));
    let at = |p: f64| pooled[((p * (pooled.len() - 1) as f64).round()) as usize];
    let (lo, hi) = (at(0.001), at(0.999));
    (0..points)
        .map(|g| lo + (hi - lo) * g as f64 / (points - 1).max(1) as f64)
        .map(|t| (ecdf_below(&sa, t) - ecdf_below(&sb, t)).abs())
        .fold(0.0, f64::max)
}
