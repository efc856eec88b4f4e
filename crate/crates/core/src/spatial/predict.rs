use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::corr::{correlation, distances};
use super::sampler::{SpatialModel, SpatialPosterior};
use super::trend::TrendMatrix;
use crate::error::{Error, Result};
use crate::linalg::psd_cholesky;
use crate::stats::{sample_std_normal, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSite {
    pub x_km: f64,
    pub y_km: f64,
    pub year: f64,
}

/// Whether new sites are drawn jointly or one at a time from their
/// marginal predictive laws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    Joint,
    Marginal,
}

/// Predictive draws at new sites, one row per posterior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub draws: DMatrix<f64>,
}

impl Prediction {
    pub fn mean(&self) -> Vec<f64> {
        self.draws.column_iter().map(|c| c.mean()).collect()
    }

    /// Sample variance with divisor `K − 1`; zero for a single draw.
    pub fn variance(&self) -> Vec<f64> {
        let k = self.draws.nrows();
        self.draws
            .column_iter()
            .map(|c| if k > 1 { c.variance() * k as f64 / (k - 1) as f64 } else { 0.0 })
            .collect()
    }

    /// Fraction of draws strictly above `t` at each site.
    pub fn exceedance(&self, t: f64) -> Vec<f64> {
        let k = self.draws.nrows() as f64;
        self.draws
            .column_iter()
            .map(|c| c.iter().filter(|&&v| v > t).count() as f64 / k)
            .collect()
    }
}

/// Altitude of the nearest record for each new site.
pub fn nearest_altitudes(model: &SpatialModel, sites: &[PredictionSite]) -> Vec<f64> {
    let recs = model.data().records();
    sites
        .iter()
        .map(|s| {
            recs.iter()
                .min_by(|a, b| {
                    let da = (a.x_km - s.x_km).hypot(a.y_km - s.y_km);
                    let db = (b.x_km - s.x_km).hypot(b.y_km - s.y_km);
                    da.total_cmp(&db)
                })
                .map(|r| r.altitude_km)
                .unwrap_or(0.0)
        })
        .collect()
}

/// Trend rows at new sites with nearest-record altitudes.
pub fn prediction_trend(model: &SpatialModel, sites: &[PredictionSite]) -> TrendMatrix {
    let alt = nearest_altitudes(model, sites);
    let rows: Vec<_> = sites
        .iter()
        .zip(alt)
        .map(|(s, a)| (s.x_km, s.y_km, a, s.year))
        .collect();
    TrendMatrix::assemble(&rows)
}

struct CellPrediction {
    /// `L⁻¹ Rᵀ` with `R` the new-by-data correlation.
    a: DMatrix<f64>,
    /// Marginal conditional variances (without σ²).
    var: Vec<f64>,
    /// Conditional covariance factor for joint draws.
    joint: Option<DMatrix<f64>>,
}

/// Posterior predictive draws of the response at `sites`, one per
/// posterior draw: `D̂β + R V⁻¹(X − Dβ)` plus Normal noise with covariance
/// `σ²(V̂ − R V⁻¹ Rᵀ)`, where `V̂` carries the nugget.
pub fn predict(
    model: &SpatialModel,
    posterior: &SpatialPosterior,
    sites: &[PredictionSite],
    d_hat: &TrendMatrix,
    mode: PredictMode,
    rng: &mut RngStream,
) -> Result<Prediction> {
    if d_hat.nrows() != sites.len() || d_hat.ncols() != posterior.k() {
        return Err(Error::Precondition("prediction design does not match the sites or trend".into()));
    }
    let m = sites.len();
    let kdraws = posterior.chain.n_draws();
    let new_pts: Vec<(f64, f64)> = sites.iter().map(|s| (s.x_km, s.y_km)).collect();
    let cross_dist = distances(&new_pts, &model.data().coords());
    let new_dist = distances(&new_pts, &new_pts);
    let mut cells: HashMap<usize, CellPrediction> = HashMap::new();
    let mut draws = DMatrix::zeros(kdraws, m);
    for d in 0..kdraws {
        let (beta, sigma2, psi) = posterior.draw_params(d);
        let cell = model
            .grid()
            .index_of(psi)
            .ok_or_else(|| Error::Precondition(format!("draw {d} has ψ off the grid")))?;
        let x = posterior.full_x(model, d);
        let resid = x - &model.trend().d * &beta;
        let white = model.with_psi_factor(cell, |fac| {
            if !cells.contains_key(&cell) {
                let r = correlation(&cross_dist, psi.phi, model.nu());
                let a = fac.whiten(&r.transpose())?;
                let var = (0..m)
                    .map(|j| (1.0 + psi.gamma2 - a.column(j).norm_squared()).max(0.0))
                    .collect();
                let joint = if mode == PredictMode::Joint {
                    let mut v_hat = correlation(&new_dist, psi.phi, model.nu());
                    for i in 0..m {
                        v_hat[(i, i)] = 1.0 + psi.gamma2;
                    }
                    let mut c = v_hat - a.transpose() * &a;
                    c = (&c + c.transpose()) * 0.5;
                    Some(psd_cholesky(&c, 1e-8).map_err(|e| {
                        Error::numerical(0, format!("predictive covariance: {e}"))
                    })?)
                } else {
                    None
                };
                cells.insert(cell, CellPrediction { a, var, joint });
            }
            fac.whiten(&DMatrix::from_column_slice(resid.len(), 1, resid.as_slice()))
        })?;
        let cp = &cells[&cell];
        let mean = &d_hat.d * &beta + cp.a.transpose() * white.column(0);
        let sd = sigma2.sqrt();
        let noise: DVector<f64> = match &cp.joint {
            Some(l) => l * DVector::from_fn(m, |_, _| sample_std_normal(rng)),
            None => DVector::from_fn(m, |j, _| cp.var[j].sqrt() * sample_std_normal(rng)),
        };
        for j in 0..m {
            let v = mean[j] + sd * noise[j];
            if !v.is_finite() {
                return Err(Error::numerical(0, "non-finite predictive draw"));
            }
            draws[(d, j)] = v;
        }
    }
    Ok(Prediction { draws })
}
