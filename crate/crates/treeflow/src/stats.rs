//! Small statistical toolbox: two-sample Kolmogorov–Smirnov, chi-square
//! goodness of fit, and running-moment helpers used by the Monte Carlo
//! diagnostics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Outcome of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    pub name: String,
    pub n1: usize,
    pub n2: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    pub level: f64,
}

/// Two-sample KS statistic: sup over x of |F1(x) - F2(x)| for the empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_unstable_by(|u, v| u.partial_cmp(v).unwrap());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 1e-12 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test with the standard asymptotic p-value
/// (Stephens' small-sample correction on the effective sample size).
pub fn ks_two_sample(name: &str, a: &[f64], b: &[f64], level: f64) -> Result<KsReport> {
    let d = ks_statistic(a, b)?;
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    let p = kolmogorov_sf(lambda);
    Ok(KsReport {
        name: name.to_string(),
        n1: a.len(),
        n2: b.len(),
        statistic: d,
        p_value: p,
        pass: p > level,
        level,
    })
}

/// Outcome of a chi-square goodness-of-fit test against given cell probabilities.
#[derive(Debug, Clone, Serialize)]
pub struct Chi2Report {
    pub name: String,
    pub draws: u64,
    pub dof: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    pub level: f64,
}

/// Chi-square GOF of observed cell counts against expected probabilities.
/// Cells with expected probability 0 must have 0 observations.
pub fn chi_square_gof(
    name: &str,
    observed: &[u64],
    expected_probs: &[f64],
    level: f64,
) -> Result<Chi2Report> {
    if observed.len() != expected_probs.len() || observed.is_empty() {
        return Err(Error::EmptySample);
    }
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut dof: isize = -1;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        if p <= 0.0 {
            if o > 0 {
                stat = f64::INFINITY;
            }
            continue;
        }
        let e = p * n as f64;
        stat += (o as f64 - e) * (o as f64 - e) / e;
        dof += 1;
    }
    let dof = dof.max(1) as usize;
    let p_value = if stat.is_finite() {
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
    } else {
        0.0
    };
    Ok(Chi2Report {
        name: name.to_string(),
        draws: n,
        dof,
        statistic: stat,
        p_value,
        pass: p_value > level,
        level,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
