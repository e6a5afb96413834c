//! Small descriptive and goodness-of-fit statistics.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Linear-interpolation quantile (the common "type 7" definition).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(&sorted(xs), 0.5)
}

pub fn iqr(xs: &[f64]) -> f64 {
    let s = sorted(xs);
    quantile(&s, 0.75) - quantile(&s, 0.25)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Median and interquartile range of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub median: f64,
    pub iqr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let s = sorted(xs);
        Self { median: quantile(&s, 0.5), iqr: quantile(&s, 0.75) - quantile(&s, 0.25), n: xs.len() }
    }
}

/// Anderson-Darling normality test with estimated mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityTest {
    /// Small-sample corrected statistic `A2 (1 + 0.75/n + 2.25/n^2)`.
    pub statistic: f64,
    /// True when normality is rejected at the 5% level.
    pub reject: bool,
}

/// 5% critical value of the corrected statistic.
pub const AD_CRITICAL_5PCT: f64 = 0.787;

pub fn normality_statistic(samples: &[f64]) -> Result<NormalityTest> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 samples, got {n}")));
    }
    let m = mean(samples);
    let s = std_dev(samples);
    if !(s > 0.0) {
        return Err(Error::InvalidArgument("samples have zero variance".into()));
    }
    let z = sorted(&samples.iter().map(|x| (x - m) / s).collect::<Vec<_>>());
    let nf = n as f64;
    // log Phi(x) and log(1 - Phi(x)) via erfc to keep the tails accurate
    let log_cdf = |x: f64| (0.5 * erfc(-x / std::f64::consts::SQRT_2)).max(f64::MIN_POSITIVE).ln();
    let sum: f64 = (0..n)
        .map(|i| (2.0 * i as f64 + 1.0) * (log_cdf(z[i]) + log_cdf(-z[n - 1 - i])))
        .sum();
    let a2 = -nf - sum / nf;
    let statistic = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok(NormalityTest { statistic, reject: statistic > AD_CRITICAL_5PCT })
}
