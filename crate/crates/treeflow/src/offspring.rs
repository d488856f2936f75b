//! Critical offspring laws from per-branching energies.
//!
//! A branching number `i` in `{0, .., D}` carries an energy `E_i` and a
//! Boltzmann weight `w_i = exp(-beta * E_i)`. The offspring law solved here is
//! the unique `p_i = C w_i rho^i` with
//!
//! ```text
//! 1/C = sum_i w_i rho^i = sum_i i w_i rho^i,
//! ```
//!
//! i.e. the tilted law that is simultaneously normalized and critical
//! (mean exactly 1). Criticality is what makes the generation-size chain a
//! submartingale with drift `mu = B_2 - 1` per step and drives every scaling
//! limit downstream, so the solver targets machine-precision residuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy assignment for branching numbers `0..=D` at inverse temperature `beta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySpec {
    /// Energies `E_0..E_D`; entry `i` is the energy of producing `i` children.
    pub energies: Vec<f64>,
    /// Inverse temperature, strictly positive.
    pub beta: f64,
}

impl EnergySpec {
    pub fn new(energies: Vec<f64>, beta: f64) -> Self {
        Self { energies, beta }
    }

    /// Maximum branching number.
    pub fn max_children(&self) -> usize {
        self.energies.len().saturating_sub(1)
    }

    fn validate(&self) -> Result<()> {
        if self.max_children() < 2 {
            return Err(Error::InfeasibleSpec(format!(
                "need D >= 2 so that normalization and criticality can hold jointly \
                 with positive mass at 0; got D = {}",
                self.max_children()
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InfeasibleSpec(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        if self.energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InfeasibleSpec("all energies must be finite".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        self.energies.iter().map(|e| (-self.beta * e).exp()).collect()
    }
}

/// A critical offspring distribution together with its Gibbs parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffspringDistribution {
    /// Probabilities `p_0..p_D`, normalized to sum exactly 1.
    pub p: Vec<f64>,
    /// Fixed-point tilt `rho`.
    pub rho: f64,
    /// Normalizer `C` of the Gibbs representation.
    pub c: f64,
    /// Variance `mu = B_2 - 1` of the offspring law.
    pub mu: f64,
    /// Residual of the criticality equation `sum i p_i - 1` as solved.
    pub criticality_residual: f64,
}

impl OffspringDistribution {
    /// Construct directly from an explicit probability vector, validating
    /// normalization and criticality to `tol` (the vector is then renormalized
    /// to an exact simplex point). `rho` and `C` are set to the trivial tilt.
    pub fn from_probabilities(p: Vec<f64>, tol: f64) -> Result<Self> {
        if p.is_empty() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InfeasibleSpec("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InfeasibleSpec(format!(
                "probabilities sum to {total}, expected 1 within {tol}"
            )));
        }
        let p: Vec<f64> = p.iter().map(|x| x / total).collect();
        let mean: f64 = p.iter().enumerate().map(|(i, x)| i as f64 * x).sum();
        if (mean - 1.0).abs() > tol {
            return Err(Error::InfeasibleSpec(format!(
                "offspring mean is {mean}, expected 1 within {tol}"
            )));
        }
        let b2: f64 = p.iter().enumerate().map(|(i, x)| (i * i) as f64 * x).sum();
        Ok(Self {
            p,
            rho: 1.0,
            c: 1.0,
            mu: b2 - 1.0,
            criticality_residual: mean - 1.0,
        })
    }

    pub fn max_children(&self) -> usize {
        self.p.len() - 1
    }

    /// n-th moment `B_n = sum i^n p_i`. `B_0 = 1` and `B_1 = 1` for any
    /// valid critical law.
    pub fn moment(&self, n: u32) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(i, &pi)| (i as f64).powi(n as i32) * pi)
            .sum()
    }

    /// Size-biased companion `p̂_i = i p_i` (a probability vector because the
    /// law has mean 1). Governs the spine vertex in conditioned-tree sampling.
    pub fn size_biased(&self) -> Vec<f64> {
        self.p.iter().enumerate().map(|(i, &pi)| i as f64 * pi).collect()
    }

    /// Centered moment `sum (i-1)^n p_i`, used by the one-step moment bounds.
    pub fn centered_moment(&self, n: u32) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(i, &pi)| (i as f64 - 1.0).powi(n as i32) * pi)
            .sum()
    }
}

/// Solve the Gibbs fixed point for the critical offspring law.
///
/// The root of `g(rho) = sum_i (i-1) w_i rho^i` is bracketed and bisected;
/// `g` is strictly increasing on `(0, inf)` with `g(0+) = -w_0 < 0`, so the
/// sign change is unique whenever some weight with `i >= 2` is positive.
pub fn solve_gibbs(spec: &EnergySpec, tol: f64) -> Result<OffspringDistribution> {
    spec.validate()?;
    let w = spec.weights();
    if w.iter().any(|x| *x <= 0.0 || !x.is_finite()) {
        return Err(Error::InfeasibleSpec(
            "all Boltzmann weights must be strictly positive and finite".into(),
        ));
    }

    let g = |rho: f64| -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for (i, &wi) in w.iter().enumerate() {
            acc += (i as f64 - 1.0) * wi * pow;
            pow *= rho;
        }
        acc
    };

    let mut lo = 1e-300;
    if g(lo) >= 0.0 {
        return Err(Error::NoConvergence("g(0+) not negative; weights degenerate".into()));
    }
    let mut hi = 1.0;
    let mut grew = 0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        grew += 1;
        if grew > 600 || !g(hi).is_finite() {
            return Err(Error::NoConvergence("failed to bracket the fixed point".into()));
        }
    }
    // Bisect to the last representable interval.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);

    let mut s0 = 0.0;
    let mut pow = 1.0;
    let mut p: Vec<f64> = Vec::with_capacity(w.len());
    for &wi in &w {
        let term = wi * pow;
        s0 += term;
        p.push(term);
        pow *= rho;
    }
    let c = 1.0 / s0;
    // Renormalize to an exact simplex point; report the criticality residual
    // instead of silently adjusting it.
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x /= total;
    }
    let mean: f64 = p.iter().enumerate().map(|(i, x)| i as f64 * x).sum();
    let norm_res: f64 = p.iter().sum::<f64>() - 1.0;
    if norm_res.abs() > tol || (mean - 1.0).abs() > tol {
        return Err(Error::NoConvergence(format!(
            "residuals above tol: normalization {:.3e}, criticality {:.3e}",
            norm_res,
            mean - 1.0
        )));
    }
    let b2: f64 = p.iter().enumerate().map(|(i, x)| (i * i) as f64 * x).sum();
    Ok(OffspringDistribution {
        p,
        rho,
        c,
        mu: b2 - 1.0,
        criticality_residual: mean - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform() -> OffspringDistribution {
        solve_gibbs(&EnergySpec::new(vec![0.0, 0.0, 0.0], 1.0), 1e-12).unwrap()
    }

    #[test]
    fn flat_energies_give_uniform_law() {
        let d = uniform();
        assert_abs_diff_eq!(d.rho, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.c, 1.0 / 3.0, epsilon = 1e-12);
        for &pi in &d.p {
            assert_abs_diff_eq!(pi, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(d.mu, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn log2_energy_closed_form() {
        let spec = EnergySpec::new(vec![0.0, 0.0, (2.0f64).ln()], 1.0);
        let d = solve_gibbs(&spec, 1e-12).unwrap();
        assert_abs_diff_eq!(d.rho, 2.0f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(d.c, 1.0 / (2.0 + 2.0f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(d.p[0], d.p[2], epsilon = 1e-12);
        assert_abs_diff_eq!(d.p[0], 1.0 / (2.0 + 2.0f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(d.p[1], 2.0f64.sqrt() / (2.0 + 2.0f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn support_zero_one_is_infeasible() {
        let err = solve_gibbs(&EnergySpec::new(vec![0.0, 0.0], 1.0), 1e-12).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSpec(_)));
    }

    #[test]
    fn fixed_point_consistency() {
        // p_i e^{beta E_i} / rho^i must be constant (= C) across i.
        let spec = EnergySpec::new(vec![0.3, -0.2, 0.9, 0.1], 1.7);
        let d = solve_gibbs(&spec, 1e-12).unwrap();
        for (i, &pi) in d.p.iter().enumerate() {
            let ci = pi * (spec.beta * spec.energies[i]).exp() / d.rho.powi(i as i32);
            assert_abs_diff_eq!(ci, d.c, epsilon = 1e-12 * d.c.max(1.0));
        }
        assert!(d.mu > 0.0);
    }

    #[test]
    fn moments_basic() {
        let d = uniform();
        assert_abs_diff_eq!(d.moment(0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.moment(1), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(d.moment(2), 5.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn size_biased_examples() {
        let d = uniform();
        let sb = d.size_biased();
        assert_eq!(sb[0], 0.0);
        assert_abs_diff_eq!(sb[1], 1.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sb[2], 2.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sb.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let half = OffspringDistribution::from_probabilities(vec![0.5, 0.0, 0.5], 1e-12).unwrap();
        assert_eq!(half.size_biased(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn explicit_vector_validation() {
        assert!(OffspringDistribution::from_probabilities(vec![0.4, 0.2, 0.4], 1e-12).is_ok());
        // Mean 1 violated.
        assert!(OffspringDistribution::from_probabilities(vec![0.9, 0.05, 0.05], 1e-12).is_err());
        // Sum violated.
        assert!(OffspringDistribution::from_probabilities(vec![0.5, 0.2, 0.5], 1e-12).is_err());
    }
}
