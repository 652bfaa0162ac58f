//! Kernel density estimation for single scenario parameters.
//!
//! ```text
//! f_h(x) = (1/n) * sum_i K_h(x - x_i),    K_h(u) = K(u / h) / h
//! ```
//!
//! Multi-parameter scenarios use a product of per-parameter densities.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::seed;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Beyond this many bandwidths the Gaussian kernel underflows to exactly 0.
const GAUSSIAN_CUTOFF: f64 = 38.7;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("at least one sample is required")]
    EmptyInput,
    #[error("samples must be finite")]
    NonFinite,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("unknown kernel {0:?} (expected gaussian or epanechnikov)")]
    UnknownKernel(String),
    #[error("standard deviation must be positive, got {0}")]
    InvalidScale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gaussian,
    /// `3/4 (1 - u^2)` on `[-1, 1]`.
    Epanechnikov,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => std_normal_cdf(u),
            Kernel::Epanechnikov => {
                if u <= -1.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    0.25 * (2.0 + 3.0 * u - u * u * u)
                }
            }
        }
    }

    /// Half-width beyond which the kernel contributes nothing.
    fn radius(self) -> f64 {
        match self {
            Kernel::Gaussian => GAUSSIAN_CUTOFF,
            Kernel::Epanechnikov => 1.0,
        }
    }

    /// One draw from the standardized kernel.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Kernel::Gaussian => StandardNormal.sample(rng),
            Kernel::Epanechnikov => {
                // Devroye: median-of-three construction
                let u1: f64 = rng.random_range(-1.0..=1.0);
                let u2: f64 = rng.random_range(-1.0..=1.0);
                let u3: f64 = rng.random_range(-1.0..=1.0);
                if u3.abs() >= u2.abs() && u3.abs() >= u1.abs() {
                    u2
                } else {
                    u3
                }
            }
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Epanechnikov => "epanechnikov",
        })
    }
}

impl FromStr for Kernel {
    type Err = DensityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(Kernel::Gaussian),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(DensityError::UnknownKernel(other.to_string())),
        }
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / SQRT_2)
}

/// Upper tail `P(Z > u)` of the standard normal, accurate far into the tail.
pub fn std_normal_sf(u: f64) -> f64 {
    0.5 * erfc(u / SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Explicit(f64),
    /// `1.06 * min(sd, IQR/1.34) * n^(-1/5)`.
    Silverman,
}

/// Outcome of the bandwidth rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BandwidthChoice {
    Rule(f64),
    /// The sample has no spread; `h_min` was used instead.
    Degenerate(f64),
}

impl BandwidthChoice {
    pub fn value(self) -> f64 {
        match self {
            BandwidthChoice::Rule(h) | BandwidthChoice::Degenerate(h) => h,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, with a fallback of
/// `1e-6 * max(1, |mean|)` for samples without spread.
pub fn silverman_bandwidth(samples: &[f64]) -> BandwidthChoice {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n.max(1) as f64;
    let h_min = 1e-6 * mean.abs().max(1.0);
    if n < 2 {
        return BandwidthChoice::Degenerate(h_min);
    }
    let sd = (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return BandwidthChoice::Degenerate(h_min);
    }
    BandwidthChoice::Rule(1.06 * spread * (n as f64).powf(-0.2))
}

/// A fitted one-dimensional kernel density estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KdeRepr", into = "KdeRepr")]
pub struct KdeModel {
    kernel: Kernel,
    h: f64,
    samples: Vec<f64>,
    sorted: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KdeRepr {
    kernel: Kernel,
    h: f64,
    samples: Vec<f64>,
}

impl TryFrom<KdeRepr> for KdeModel {
    type Error = DensityError;

    fn try_from(r: KdeRepr) -> Result<Self, Self::Error> {
        KdeModel::new(r.samples, r.kernel, r.h)
    }
}

impl From<KdeModel> for KdeRepr {
    fn from(m: KdeModel) -> Self {
        KdeRepr {
            kernel: m.kernel,
            h: m.h,
            samples: m.samples,
        }
    }
}

impl KdeModel {
    pub fn new(samples: Vec<f64>, kernel: Kernel, h: f64) -> Result<Self, DensityError> {
        if samples.is_empty() {
            return Err(DensityError::EmptyInput);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(DensityError::NonFinite);
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(DensityError::InvalidBandwidth(h));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(KdeModel {
            kernel,
            h,
            samples,
            sorted,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Samples in the order they were fitted.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Indices into `sorted` of samples within the kernel radius of `x`.
    fn window(&self, x: f64) -> (usize, usize) {
        let r = self.kernel.radius() * self.h;
        let lo = self.sorted.partition_point(|&s| s < x - r);
        let hi = self.sorted.partition_point(|&s| s <= x + r);
        (lo, hi)
    }
}

/// Fits a KDE. A degenerate sample under the bandwidth rule falls back to
/// `h_min` and logs a warning.
pub fn kde_fit(samples: &[f64], kernel: Kernel, bandwidth: Bandwidth) -> Result<KdeModel, DensityError> {
    if samples.is_empty() {
        return Err(DensityError::EmptyInput);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(DensityError::NonFinite);
    }
    let h = match bandwidth {
        Bandwidth::Explicit(h) => h,
        Bandwidth::Silverman => match silverman_bandwidth(samples) {
            BandwidthChoice::Rule(h) => h,
            BandwidthChoice::Degenerate(h) => {
                log::warn!("sample has no spread; bandwidth falls back to h_min = {h:e}");
                h
            }
        },
    };
    KdeModel::new(samples.to_vec(), kernel, h)
}

/// Density estimate at `x`.
pub fn kde_eval(m: &KdeModel, x: f64) -> f64 {
    let (lo, hi) = m.window(x);
    let sum: f64 = m.sorted[lo..hi].iter().map(|&xi| m.kernel.eval((x - xi) / m.h)).sum();
    sum / (m.samples.len() as f64 * m.h)
}

/// Cumulative distribution of the estimate at `x`.
pub fn kde_cdf(m: &KdeModel, x: f64) -> f64 {
    let (lo, hi) = m.window(x);
    // samples left of the window contribute a full unit each
    let partial: f64 = m.sorted[lo..hi].iter().map(|&xi| m.kernel.cdf((x - xi) / m.h)).sum();
    ((lo as f64 + partial) / m.samples.len() as f64).clamp(0.0, 1.0)
}

fn kde_draw<R: Rng + ?Sized>(m: &KdeModel, rng: &mut R) -> f64 {
    let i = rng.random_range(0..m.samples.len());
    m.samples[i] + m.h * m.kernel.sample(rng)
}

/// `count` draws: a uniformly chosen sample plus `h` times kernel noise.
pub fn kde_sample(m: &KdeModel, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    (0..count).map(|_| kde_draw(m, &mut rng)).collect()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, DensityError> {
    if a.is_empty() || b.is_empty() {
        return Err(DensityError::EmptyInput);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, DensityError> {
    if samples.is_empty() {
        return Err(DensityError::EmptyInput);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

/// A one-dimensional probability density that can be evaluated and sampled.
pub trait Density {
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    /// Probability mass on `[lo, hi]`.
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }
}

impl Density for KdeModel {
    fn pdf(&self, x: f64) -> f64 {
        kde_eval(self, x)
    }

    fn cdf(&self, x: f64) -> f64 {
        kde_cdf(self, x)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        kde_draw(self, rng)
    }
}

/// Density attached to one scenario parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamDensity {
    Kde(KdeModel),
    Normal { mean: f64, std: f64 },
    /// `base` translated by `shift`: `pdf(x) = base.pdf(x - shift)`.
    Shifted { base: Box<ParamDensity>, shift: f64 },
}

impl ParamDensity {
    pub fn normal(mean: f64, std: f64) -> Result<Self, DensityError> {
        if !(std > 0.0 && std.is_finite()) || !mean.is_finite() {
            return Err(DensityError::InvalidScale(std));
        }
        Ok(ParamDensity::Normal { mean, std })
    }

    pub fn shifted(self, shift: f64) -> Self {
        match self {
            ParamDensity::Shifted { base, shift: s } => ParamDensity::Shifted { base, shift: s + shift },
            other => ParamDensity::Shifted {
                base: Box::new(other),
                shift,
            },
        }
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> f64 {
        match self {
            ParamDensity::Kde(m) => m.mean(),
            ParamDensity::Normal { mean, .. } => *mean,
            ParamDensity::Shifted { base, shift } => base.mean() + shift,
        }
    }

    /// Standard deviation of the distribution.
    pub fn std(&self) -> f64 {
        match self {
            ParamDensity::Kde(m) => {
                let mu = m.mean();
                let var = m.samples().iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m.len() as f64;
                let kvar = match m.kernel() {
                    Kernel::Gaussian => 1.0,
                    Kernel::Epanechnikov => 0.2,
                };
                (var + kvar * m.bandwidth() * m.bandwidth()).sqrt()
            }
            ParamDensity::Normal { std, .. } => *std,
            ParamDensity::Shifted { base, .. } => base.std(),
        }
    }
}

impl Density for ParamDensity {
    fn pdf(&self, x: f64) -> f64 {
        match self {
            ParamDensity::Kde(m) => kde_eval(m, x),
            ParamDensity::Normal { mean, std } => {
                let z = (x - mean) / std;
                INV_SQRT_2PI * (-0.5 * z * z).exp() / std
            }
            ParamDensity::Shifted { base, shift } => base.pdf(x - shift),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            ParamDensity::Kde(m) => kde_cdf(m, x),
            ParamDensity::Normal { mean, std } => std_normal_cdf((x - mean) / std),
            ParamDensity::Shifted { base, shift } => base.cdf(x - shift),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ParamDensity::Kde(m) => kde_draw(m, rng),
            ParamDensity::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            ParamDensity::Shifted { base, shift } => base.draw(rng) + shift,
        }
    }

    fn mass(&self, lo: f64, hi: f64) -> f64 {
        match self {
            // the upper tail is more accurate through the survival function
            ParamDensity::Normal { mean, std } if lo > *mean => {
                (std_normal_sf((lo - mean) / std) - std_normal_sf((hi - mean) / std)).max(0.0)
            }
            ParamDensity::Shifted { base, shift } => base.mass(lo - shift, hi - shift),
            _ => (self.cdf(hi) - self.cdf(lo)).max(0.0),
        }
    }
}

/// `1/sqrt(2 pi)`, exposed for callers checking normalization.
pub fn gaussian_peak() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_gaussian() {
        let m = kde_fit(&[0.0], Kernel::Gaussian, Bandwidth::Explicit(1.0)).unwrap();
        assert!((kde_eval(&m, 0.0) - 0.398_94).abs() < 1e-5);
        assert!(kde_eval(&m, 10.0) < 1e-20);
        assert_eq!(kde_eval(&m, 0.0), gaussian_peak());
    }

    #[test]
    fn silverman_rule_value() {
        // 50 points at -c and 50 at +c give sd = 1 with IQR/1.34 > 1
        let c = (99.0f64 / 100.0).sqrt();
        let s: Vec<f64> = (0..100).map(|i| if i < 50 { -c } else { c }).collect();
        let m = kde_fit(&s, Kernel::Gaussian, Bandwidth::Silverman).unwrap();
        assert!((m.bandwidth() - 0.421_95).abs() < 1e-4, "{}", m.bandwidth());
        assert!((m.bandwidth() - 1.06 * 100f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn explicit_and_degenerate_bandwidth() {
        let m = kde_fit(&[1.0, 2.0], Kernel::Gaussian, Bandwidth::Explicit(0.5)).unwrap();
        assert_eq!(m.bandwidth(), 0.5);
        assert_eq!(silverman_bandwidth(&[4.0; 10]), BandwidthChoice::Degenerate(4e-6));
        let m = kde_fit(&[4.0; 10], Kernel::Gaussian, Bandwidth::Silverman).unwrap();
        assert_eq!(m.bandwidth(), 4e-6);
        assert_eq!(silverman_bandwidth(&[0.2]), BandwidthChoice::Degenerate(1e-6));
        assert_eq!(
            kde_fit(&[1.0], Kernel::Gaussian, Bandwidth::Explicit(0.0)),
            Err(DensityError::InvalidBandwidth(0.0))
        );
        assert_eq!(kde_fit(&[], Kernel::Gaussian, Bandwidth::Silverman), Err(DensityError::EmptyInput));
    }

    #[test]
    fn symmetric_samples_give_symmetric_density() {
        for k in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let m = kde_fit(&[-1.0, 1.0], k, Bandwidth::Explicit(0.7)).unwrap();
            for x in [0.1, 0.5, 0.9, 1.3, 2.0] {
                assert!((kde_eval(&m, x) - kde_eval(&m, -x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scaling_law() {
        let m1 = KdeModel::new(vec![0.0], Kernel::Gaussian, 1.0).unwrap();
        let mh = KdeModel::new(vec![0.0], Kernel::Gaussian, 2.5).unwrap();
        for x in [-3.0, -0.4, 0.0, 1.7, 6.0] {
            assert!((kde_eval(&mh, x) - kde_eval(&m1, x / 2.5) / 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cdf_matches_kernel_cdfs() {
        let m = KdeModel::new(vec![0.0, 2.0], Kernel::Epanechnikov, 1.0).unwrap();
        assert_eq!(kde_cdf(&m, -5.0), 0.0);
        assert_eq!(kde_cdf(&m, 1.0), 0.5);
        assert_eq!(kde_cdf(&m, 9.0), 1.0);
        let g = KdeModel::new(vec![0.0], Kernel::Gaussian, 1.0).unwrap();
        assert!((kde_cdf(&g, 1.0) - 0.841_344_746_068_542_9).abs() < 1e-10);
    }

    #[test]
    fn sampling_determinism_and_moments() {
        let m = KdeModel::new(vec![0.0], Kernel::Gaussian, 1.0).unwrap();
        assert!(kde_sample(&m, 0, 1).is_empty());
        assert_eq!(kde_sample(&m, 50, 9), kde_sample(&m, 50, 9));
        let draws = kde_sample(&m, 100_000, 3);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((sd - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn ks_basics() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_statistic(&a, &[4.0, 5.0]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[], &a), Err(DensityError::EmptyInput));
        assert!((ks_statistic(&[1.0, 2.0], &[1.5, 2.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kde_json_round_trip() {
        let m = KdeModel::new(vec![3.0, 1.0, 2.0], Kernel::Epanechnikov, 0.25).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"kernel":"epanechnikov","h":0.25,"samples":[3.0,1.0,2.0]}"#);
        assert_eq!(serde_json::from_str::<KdeModel>(&text).unwrap(), m);
        assert!(serde_json::from_str::<KdeModel>(r#"{"kernel":"gaussian","h":-1,"samples":[1]}"#).is_err());
        let p = ParamDensity::Kde(m).shifted(1.5);
        let back: ParamDensity = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn normal_tail_mass() {
        let n = ParamDensity::normal(0.0, 1.0).unwrap();
        let tail = n.mass(3.0, f64::INFINITY);
        assert!((tail / 1.349_898_031_630_094_6e-3 - 1.0).abs() < 1e-9);
        let shifted = n.clone().shifted(3.0);
        assert!((shifted.mass(3.0, f64::INFINITY) - 0.5).abs() < 1e-15);
        assert!((shifted.pdf(3.0) - gaussian_peak()).abs() < 1e-15);
    }
}
