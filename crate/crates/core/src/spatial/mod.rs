//! Gaussian-process regression for space-time rainfall records.
//!
//! Responses follow `X ~ N(Dβ, σ² V(ψ))` with `V(ψ) = R(φ) + γ² I`, where `R`
//! is a Matérn correlation over planar site distances and `ψ = (φ, γ²)`
//! lives on a finite grid. With the reference prior `p(β, σ²) ∝ 1/σ²` the
//! pair is integrated out, and `ψ` is sampled by an independence Metropolis
//! step over the grid. Missing responses are imputed by Gibbs draws from
//! their Normal conditional.

mod corr;
mod gls;
mod predict;
mod sampler;
mod trend;
mod variogram;

pub use corr::{correlation, cross_correlation, covariance, distances, matern_corr, Smoothness};
pub use gls::{gls_profile, log_post_from_profile, log_post_psi, GlsProfile, PsiFactor};
pub use predict::{
    nearest_altitudes, predict, prediction_trend, PredictMode, Prediction, PredictionSite,
};
pub use sampler::{
    block_mh_step, conditional_moments, impute_missing, spatial_run, ImputeFactor, MhOutcome,
    SpatialModel, SpatialPosterior, SpatialState, DEFAULT_RUN,
};
pub use trend::{build_trend, TrendMatrix, TREND_COLUMNS};
pub use variogram::{empirical_variogram, variogram_ls, VariogramBin, VariogramFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile;

/// One rainfall record. `rainfall_mm` is `None` when missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialRecord {
    pub site_id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub altitude_km: f64,
    pub year: f64,
    pub rainfall_mm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialData {
    records: Vec<SpatialRecord>,
    observed: Vec<usize>,
    missing: Vec<usize>,
}

impl SpatialData {
    pub fn new(records: Vec<SpatialRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Precondition("no spatial records".into()));
        }
        for (i, r) in records.iter().enumerate() {
            let fields = [r.x_km, r.y_km, r.altitude_km, r.year];
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(Error::Precondition(format!("record {i} has non-finite covariates")));
            }
            if r.rainfall_mm.is_some_and(|v| !v.is_finite()) {
                return Err(Error::Precondition(format!("record {i} has a non-finite response")));
            }
        }
        let observed = (0..records.len()).filter(|&i| records[i].rainfall_mm.is_some()).collect();
        let missing = (0..records.len()).filter(|&i| records[i].rainfall_mm.is_none()).collect();
        Ok(SpatialData {
            records,
            observed,
            missing,
        })
    }

    pub fn records(&self) -> &[SpatialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.x_km, r.y_km)).collect()
    }

    /// Returns a copy with every response shifted by `c`.
    pub fn shifted(&self, c: f64) -> SpatialData {
        let mut out = self.clone();
        for r in &mut out.records {
            r.rainfall_mm = r.rainfall_mm.map(|v| v + c);
        }
        out
    }
}

/// Range and relative nugget of the correlation model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psi {
    pub phi: f64,
    pub gamma2: f64,
}

/// Prior on `ψ` and `σ²`: `p(ψ) ∝ 1/φ` on `lower < γ² < upper`, and
/// `σ² ~ IG(a, b)` with `a = b = 0` giving the reference prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialPrior {
    pub gamma2_lower: f64,
    pub gamma2_upper: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
}

impl Default for SpatialPrior {
    fn default() -> Self {
        SpatialPrior {
            gamma2_lower: 2.0,
            gamma2_upper: 4.0,
            sigma2_shape: 0.0,
            sigma2_rate: 0.0,
        }
    }
}

impl SpatialPrior {
    pub fn contains(&self, psi: Psi) -> bool {
        psi.phi > 0.0 && psi.gamma2 > self.gamma2_lower && psi.gamma2 < self.gamma2_upper
    }
}

/// Rectangular `(φ, γ²)` grid; cell `k` is `(phi[k / n_γ], gamma2[k % n_γ])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiGrid {
    phi: Vec<f64>,
    gamma2: Vec<f64>,
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl PsiGrid {
    pub fn new(phi: Vec<f64>, gamma2: Vec<f64>, prior: &SpatialPrior) -> Result<Self> {
        if phi.is_empty() || gamma2.is_empty() {
            return Err(Error::Parameter("empty ψ grid".into()));
        }
        if !strictly_increasing(&phi) || !strictly_increasing(&gamma2) {
            return Err(Error::Parameter("grid values must be strictly increasing".into()));
        }
        if phi.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Parameter("φ grid values must be positive".into()));
        }
        if let Some(g) = gamma2
            .iter()
            .find(|&&g| !(g > prior.gamma2_lower && g < prior.gamma2_upper))
        {
            return Err(Error::Parameter(format!(
                "γ² grid value {g} outside ({}, {})",
                prior.gamma2_lower, prior.gamma2_upper
            )));
        }
        Ok(PsiGrid { phi, gamma2 })
    }

    /// 20 log-spaced φ values between the 5th and 95th percentiles of the
    /// positive pairwise distances, and γ² from 2.25 to 3.75 in steps of 0.25.
    pub fn default_for(data: &SpatialData) -> Result<Self> {
        let coords = data.coords();
        let mut d = Vec::new();
        for i in 0..coords.len() {
            for j in i + 1..coords.len() {
                let h = (coords[i].0 - coords[j].0).hypot(coords[i].1 - coords[j].1);
                if h > 0.0 {
                    d.push(h);
                }
            }
        }
        if d.is_empty() {
            return Err(Error::Degenerate("all sites coincide".into()));
        }
        let lo = quantile(&d, 0.05);
        let hi = quantile(&d, 0.95);
        let phi = log_spaced(lo, hi, 20);
        let gamma2 = (1..=7).map(|i| 2.0 + 0.25 * i as f64).collect();
        PsiGrid::new(phi, gamma2, &SpatialPrior::default())
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn gamma2(&self) -> &[f64] {
        &self.gamma2
    }

    pub fn len(&self) -> usize {
        self.phi.len() * self.gamma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, k: usize) -> Psi {
        let ng = self.gamma2.len();
        Psi {
            phi: self.phi[k / ng],
            gamma2: self.gamma2[k % ng],
        }
    }

    pub fn index_of(&self, psi: Psi) -> Option<usize> {
        let i = self.phi.iter().position(|&p| p == psi.phi)?;
        let j = self.gamma2.iter().position(|&g| g == psi.gamma2)?;
        Some(i * self.gamma2.len() + j)
    }
}

/// `n` log-spaced points from `lo` to `hi`; a single point when they agree.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo >= hi {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    out[0] = lo;
    out[n - 1] = hi;
    out
}
