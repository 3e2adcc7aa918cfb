//! Goodness-of-fit tests and the small amount of estimation the experiments
//! need.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const KS_MIN_SAMPLES: usize = 10;
pub const GUMBEL_MIN_SAMPLES: usize = 50;
pub const GUMBEL_MAX_ITER: usize = 200;
pub const GUMBEL_TOL: f64 = 1e-9;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size used for the p-value.
    pub n: f64,
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let v = if lambda < 1.18 {
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=50)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        2.0 * (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum::<f64>()
    };
    v.clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' finite-sample correction.
fn ks_p_value(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS against a continuous reference CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    ks_statistic_mixed(samples, &cdf, &cdf)
}

/// One-sample KS against a reference with atoms, given its CDF and its
/// left limit `P(X < x)`. The p-value is conservative when atoms are present.
pub fn ks_statistic_mixed(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    cdf_left: impl Fn(f64) -> f64,
) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: KS_MIN_SAMPLES,
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        d = d
            .max((j as f64 / n - cdf(x)).abs())
            .max((i as f64 / n - cdf_left(x)).abs());
        i = j;
    }
    let d = d.min(1.0);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n,
    })
}

/// Two-sample KS statistic with tie handling.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < KS_MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                got: s.len(),
                need: KS_MIN_SAMPLES,
            });
        }
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] == x {
            i += 1;
        }
        while j < xb.len() && xb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, ne),
        n: ne,
    })
}

/// `½ Σ |a - b|`; the shorter vector is padded with zeros.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let s: f64 = (0..len).map(|i| (get(a, i) - get(b, i)).abs()).sum();
    (0.5 * s).clamp(0.0, 1.0)
}

/// Normalized histogram of nonnegative integer samples on `0..len`;
/// larger values land in the last bin.
pub fn integer_histogram(samples: &[f64], len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len.max(1)];
    for &x in samples {
        let k = (x.max(0.0) as usize).min(h.len() - 1);
        h[k] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of bins after merging.
    pub bins: usize,
}

/// Minimum expected count per retained bin.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square test. Adjacent bins are merged left to right until
/// each has expected count at least 5; a short final run joins its
/// predecessor. Degrees of freedom are `bins - 1`.
pub fn chi_square_pvalue(observed: &[f64], expected: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() {
        return Err(Error::DegenerateBinning(format!(
            "{} observed vs {} expected bins",
            observed.len(),
            expected.len()
        )));
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob;
        e += ex;
        if e >= CHI_SQUARE_MIN_EXPECTED {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    if bins.len() < 2 {
        return Err(Error::DegenerateBinning(format!(
            "{} bin(s) with expected count >= {CHI_SQUARE_MIN_EXPECTED}",
            bins.len()
        )));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64).expect("dof >= 1").sf(statistic).clamp(0.0, 1.0);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        bins: bins.len(),
    })
}

/// Randomized probability integral transform of a draw `x` from a law with
/// `F(x-) = lower` and `F(x) = upper`; uniform on `[0,1]` when the law is right.
pub fn randomized_pit(lower: f64, upper: f64, v: f64) -> f64 {
    lower + v * (upper - lower)
}

/// Chi-square test of uniformity of values in `[0,1]` over equal bins.
pub fn uniformity_test(values: &[f64], bins: usize) -> Result<ChiSquareResult> {
    if bins < 2 {
        return Err(Error::DegenerateBinning("need at least two bins".into()));
    }
    let mut obs = vec![0.0; bins];
    for &u in values {
        let k = ((u * bins as f64) as usize).min(bins - 1);
        obs[k] += 1.0;
    }
    let exp = vec![values.len() as f64 / bins as f64; bins];
    chi_square_pvalue(&obs, &exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub location: f64,
    pub scale: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn gumbel_cdf(x: f64, location: f64, scale: f64) -> f64 {
    (-(-(x - location) / scale).exp()).exp()
}

pub fn gumbel_log_likelihood(samples: &[f64], location: f64, scale: f64) -> f64 {
    samples
        .iter()
        .map(|&x| {
            let z = (x - location) / scale;
            -scale.ln() - z - (-z).exp()
        })
        .sum()
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance.
pub fn variance(samples: &[f64]) -> f64 {
    let m = mean(samples);
    samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (samples.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(samples: &[f64]) -> f64 {
    (variance(samples) / samples.len() as f64).sqrt()
}

/// Moment skewness `m3 / m2^{3/2}`.
pub fn skewness(samples: &[f64]) -> f64 {
    let m = mean(samples);
    let n = samples.len() as f64;
    let m2 = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = samples.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Maximum-likelihood Gumbel fit for CDF `exp(-e^{-(x-mu)/beta})`.
///
/// The scale solves `beta = mean(x) - Σ x e^{-x/beta} / Σ e^{-x/beta}`,
/// iterated with damping ½ on data centered at the sample mean.
pub fn gumbel_fit(samples: &[f64]) -> Result<FitResult> {
    if samples.len() < GUMBEL_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: GUMBEL_MIN_SAMPLES,
        });
    }
    let m = mean(samples);
    let y: Vec<f64> = samples.iter().map(|x| x - m).collect();
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let sd = variance(samples).sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidParameter("Gumbel fit of constant samples".into()));
    }
    // Σ y w / Σ w and ln Σ w with w = e^{-(y - ymin)/beta}.
    let weighted = |beta: f64| {
        let (mut sw, mut swy) = (0.0, 0.0);
        for &v in &y {
            let w = (-(v - ymin) / beta).exp();
            sw += w;
            swy += w * v;
        }
        (swy / sw, sw)
    };
    let mut beta = sd * 6f64.sqrt() / std::f64::consts::PI;
    for it in 1..=GUMBEL_MAX_ITER {
        let (wm, _) = weighted(beta);
        let next = 0.5 * beta + 0.5 * (-wm);
        if !(next > 0.0) {
            break;
        }
        let done = (next - beta).abs() <= GUMBEL_TOL * beta;
        beta = next;
        if done {
            let (_, sw) = weighted(beta);
            let n = y.len() as f64;
            let location = m + ymin - beta * (sw / n).ln();
            return Ok(FitResult {
                location,
                scale: beta,
                log_likelihood: gumbel_log_likelihood(samples, location, beta),
                iterations: it,
                converged: true,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: GUMBEL_MAX_ITER,
    })
}

/// Method-of-moments Gumbel parameters, used as a sanity reference.
pub fn gumbel_moments(samples: &[f64]) -> (f64, f64) {
    let beta = variance(samples).sqrt() * 6f64.sqrt() / std::f64::consts::PI;
    (mean(samples) - EULER_GAMMA * beta, beta)
}

/// Gaussian maximum-likelihood fit (location = mean, scale = MLE sd).
pub fn gaussian_fit(samples: &[f64]) -> Result<FitResult> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 2,
        });
    }
    let n = samples.len() as f64;
    let m = mean(samples);
    let s = (samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    let ll = -0.5 * n * (2.0 * std::f64::consts::PI * s * s).ln() - 0.5 * n;
    Ok(FitResult {
        location: m,
        scale: s,
        log_likelihood: ll,
        iterations: 0,
        converged: true,
    })
}

pub fn normal_cdf(x: f64, location: f64, scale: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-(x - location) / (scale * std::f64::consts::SQRT_2))
}
