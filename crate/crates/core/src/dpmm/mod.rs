//! Dirichlet-process mixture of Normals with a shared precision:
//! `z_i | L_i, Z, φ ~ N(Z_{L_i}, 1/φ)`, `Z_ℓ ~ N(ψ, 1/ν)`, `φ ~ Gamma(a_φ, b_φ)`,
//! and stick-breaking weights with `v_ℓ ~ Beta(1, α)`.
//!
//! [`vi`] fits a truncated mean-field approximation by coordinate ascent;
//! [`cgs`] samples the same model by collapsed Gibbs.

pub mod cgs;
pub mod vi;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpHyper {
    pub a_phi: f64,
    pub b_phi: f64,
    /// Base-measure mean.
    pub psi: f64,
    /// Base-measure precision.
    pub nu: f64,
    pub alpha: f64,
    /// Truncation level `N` of the variational family.
    pub truncation: usize,
    pub tol: f64,
}

impl Default for DpHyper {
    /// Prior variance split 1:7 between noise and component means, so the
    /// expected data variance is 1 on standardized data.
    fn default() -> Self {
        DpHyper {
            a_phi: 1.5,
            b_phi: 0.5 / 8.0,
            psi: 0.0,
            nu: 8.0 / 7.0,
            alpha: 1.0,
            truncation: 20,
            tol: 1e-5,
        }
    }
}

impl DpHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_phi", self.a_phi),
            ("b_phi", self.b_phi),
            ("nu", self.nu),
            ("alpha", self.alpha),
            ("tol", self.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.psi.is_finite() {
            return Err(Error::Parameter("psi must be finite".into()));
        }
        if self.truncation < 2 {
            return Err(Error::Parameter("truncation must be at least 2".into()));
        }
        Ok(())
    }
}

/// Centres and scales to mean 0 and sample sd 1 (divisor `n − 1`).
pub fn standardize(y: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if y.len() < 2 {
        return Err(Error::Precondition("need at least two observations".into()));
    }
    let n = y.len() as f64;
    let rough = y.iter().sum::<f64>() / n;
    let mean = rough + y.iter().map(|v| v - rough).sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Degenerate("constant or non-finite observations".into()));
    }
    Ok((y.iter().map(|v| (v - mean) / sd).collect(), mean, sd))
}

/// Trapezoid rule on a sorted grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
        .sum()
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
