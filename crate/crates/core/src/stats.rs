//! Scalar statistics shared by the spectral and evaluation modules.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{NirvarError, Result};

/// One-sample Kolmogorov-Smirnov statistic `sup_x |F(x) - F_N(x)|` with
/// `F_N(x) = #{x_i <= x} / N`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    let sorted = sorted_finite(sample)?;
    let values: Vec<f64> = sorted.iter().map(|&x| cdf(x)).collect();
    Ok(ks_from_sorted(&values))
}

/// KS statistic given the model CDF evaluated at an ascending sample.
pub fn ks_from_sorted(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    cdf_at_sorted.iter().enumerate().map(|(i, &f)| (f - i as f64 / n).max((i + 1) as f64 / n - f)).fold(0.0, f64::max)
}

/// Ascending copy of a sample, rejecting empty input and non-finite values.
pub fn sorted_finite(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(NirvarError::Metric("empty sample".into()));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(NirvarError::Metric("sample contains non-finite values".into()));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn median(x: &[f64]) -> Result<f64> {
    let s = sorted_finite(x)?;
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// CDF of `N(mean, var)`.
pub fn normal_cdf(mean: f64, var: f64) -> Result<impl Fn(f64) -> f64> {
    let normal = Normal::new(mean, var.sqrt())
        .map_err(|e| NirvarError::Metric(format!("invalid normal N({mean}, {var}): {e}")))?;
    Ok(move |x| normal.cdf(x))
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(NirvarError::Metric("Spearman needs two equally long samples of size >= 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(NirvarError::Metric("Spearman correlation of a constant sample".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}
