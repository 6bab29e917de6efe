//! Empirical verdicts: KS distance to a centred normal, moments with
//! standard errors, covariances, coverage counting and log-log slopes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    pub label: String,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub n_obs: usize,
    pub description: String,
}

impl TestVerdict {
    /// Passes iff `statistic ≤ threshold`.
    pub fn at_most(statistic: f64, threshold: f64, n_obs: usize, description: impl Into<String>) -> Self {
        Self {
            statistic,
            threshold,
            pass: statistic <= threshold,
            n_obs,
            description: description.into(),
        }
    }

    /// `|value - target| ≤ tolerance`.
    pub fn within(value: f64, target: f64, tolerance: f64, n_obs: usize, description: impl Into<String>) -> Self {
        let description = format!("{} (value {value:.6}, target {target:.6})", description.into());
        Self::at_most((value - target).abs(), tolerance, n_obs, description)
    }

    /// `lo ≤ value ≤ hi`, phrased as distance from the band centre.
    pub fn in_band(value: f64, lo: f64, hi: f64, n_obs: usize, description: impl Into<String>) -> Self {
        let description = format!("{} (value {value:.6} in [{lo}, {hi}])", description.into());
        Self::at_most((value - 0.5 * (lo + hi)).abs(), 0.5 * (hi - lo), n_obs, description)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Two-sided KS distance between the empirical CDF and `N(0, target_sd²)`.
pub fn ks_distance(sample: &Sample, target_sd: f64) -> Result<f64> {
    if !(target_sd > 0.0) {
        return Err(Error::NonPositive(target_sd));
    }
    let mut xs = sample.values.clone();
    xs.sort_by(f64::total_cmp);
    let count = xs.len() as f64;
    let mut d = 0.0f64;
    for (k, x) in xs.iter().enumerate() {
        let f = normal_cdf(x / target_sd);
        d = d.max((k + 1) as f64 / count - f).max(f - k as f64 / count);
    }
    Ok(d)
}

/// Asymptotic KS critical value `√(ln(2/α)/2)/√N`.
pub fn ks_critical(n_obs: usize, level: f64) -> f64 {
    ((2.0 / level).ln() / 2.0).sqrt() / (n_obs as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Moment {
    Mean,
    /// Unbiased central variance.
    Variance,
}

/// Estimate and standard error. The variance SE uses the fourth central
/// moment: `Var(s²) ≈ (m₄ - (N-3)/(N-1)·s⁴)/N`.
pub fn moment_with_se(sample: &Sample, order: Moment) -> Result<(f64, f64)> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = sample.mean();
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in &sample.values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let var = m2 / (nf - 1.0);
    match order {
        Moment::Mean => Ok((mean, (var / nf).sqrt())),
        Moment::Variance => {
            let m4 = m4 / nf;
            let se2 = (m4 - (nf - 3.0) / (nf - 1.0) * var * var) / nf;
            Ok((var, se2.max(0.0).sqrt()))
        }
    }
}

/// Sample covariance with the standard error of the mean cross-product.
pub fn covariance_with_se(x: &Sample, y: &Sample) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let (mx, my) = (x.mean(), y.mean());
    let products: Vec<f64> = x.values.iter().zip(&y.values).map(|(a, b)| (a - mx) * (b - my)).collect();
    let p = Sample::new("cross", products)?;
    let (mean, se) = moment_with_se(&p, Moment::Mean)?;
    let nf = n as f64;
    Ok((mean * nf / (nf - 1.0), se))
}

/// Pearson correlation; zero when either sample is constant.
pub fn correlation(x: &Sample, y: &Sample) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (mx, my) = (x.mean(), y.mean());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.values.iter().zip(&y.values) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Fraction of truths inside their intervals and its binomial SE.
pub fn coverage_rate(intervals: &[(f64, f64)], truths: &[f64]) -> Result<(f64, f64)> {
    if intervals.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: intervals.len(),
            right: truths.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::EmptySample);
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|((lo, hi), t)| lo <= *t && *t <= hi)
        .count();
    let n = intervals.len() as f64;
    let rate = hits as f64 / n;
    Ok((rate, (rate * (1.0 - rate) / n).sqrt()))
}

/// Least-squares slope of `ln(error)` against `ln(n)`.
pub fn rate_slope(ns: &[usize], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() {
        return Err(Error::LengthMismatch {
            left: ns.len(),
            right: errors.len(),
        });
    }
    if ns.len() < 3 {
        return Err(Error::TooFewObservations {
            needed: 3,
            got: ns.len(),
        });
    }
    if let Some(&bad) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::NonPositive(bad));
    }
    if ns.contains(&0) {
        return Err(Error::NonPositive(0.0));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidCampaign("rate slope needs distinct resolutions".into()));
    }
    Ok(sxy / sxx)
}
