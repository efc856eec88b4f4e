use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::corr::{matern_unchecked, Smoothness};
use super::trend::build_trend;
use super::SpatialData;
use crate::error::{Error, Result};

const N_BINS: usize = 15;
const MIN_PAIRS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramBin {
    pub mean_distance: f64,
    pub semivariance: f64,
    pub pairs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    pub nu: Smoothness,
    pub sigma2: f64,
    pub phi: f64,
    pub nugget: f64,
    pub sse: f64,
}

/// Semivariances `½(r_i − r_j)²` averaged over equal-count distance bins.
pub fn empirical_variogram(coords: &[(f64, f64)], resid: &[f64], n_bins: usize) -> Result<Vec<VariogramBin>> {
    let n = resid.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let h = (coords[i].0 - coords[j].0).hypot(coords[i].1 - coords[j].1);
            pairs.push((h, 0.5 * (resid[i] - resid[j]).powi(2)));
        }
    }
    if pairs.len() < MIN_PAIRS {
        return Err(Error::Precondition(format!(
            "{} pairs; the variogram needs at least {MIN_PAIRS}",
            pairs.len()
        )));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_bins = n_bins.clamp(1, pairs.len());
    let bins = (0..n_bins)
        .map(|b| {
            let lo = b * pairs.len() / n_bins;
            let hi = (b + 1) * pairs.len() / n_bins;
            let chunk = &pairs[lo..hi];
            let k = chunk.len() as f64;
            VariogramBin {
                mean_distance: chunk.iter().map(|p| p.0).sum::<f64>() / k,
                semivariance: chunk.iter().map(|p| p.1).sum::<f64>() / k,
                pairs: chunk.len(),
            }
        })
        .collect();
    Ok(bins)
}

/// Least squares for `γ(h) = c₀ + c₁ f(h)` with `c₀, c₁ ≥ 0`.
fn nnls2(gamma: &[f64], f: &[f64]) -> (f64, f64, f64) {
    let sse = |c0: f64, c1: f64| -> f64 {
        gamma.iter().zip(f).map(|(g, fv)| (g - c0 - c1 * fv).powi(2)).sum()
    };
    let n = gamma.len() as f64;
    let (sf, sg) = (f.iter().sum::<f64>(), gamma.iter().sum::<f64>());
    let sff: f64 = f.iter().map(|v| v * v).sum();
    let sfg: f64 = f.iter().zip(gamma).map(|(a, b)| a * b).sum();
    let det = n * sff - sf * sf;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut consider = |c0: f64, c1: f64| {
        if c0 >= 0.0 && c1 >= 0.0 {
            let s = sse(c0, c1);
            if s < best.0 {
                best = (s, c0, c1);
            }
        }
    };
    if det.abs() > 1e-14 * n * sff.max(1e-300) {
        consider((sff * sg - sf * sfg) / det, (n * sfg - sf * sg) / det);
    }
    consider((sg / n).max(0.0), 0.0);
    if sff > 0.0 {
        consider(0.0, (sfg / sff).max(0.0));
    }
    consider(0.0, 0.0);
    best
}

fn fit_one(bins: &[VariogramBin], nu: Smoothness) -> Result<VariogramFit> {
    let gamma: Vec<f64> = bins.iter().map(|b| b.semivariance).collect();
    let profile = |log_phi: f64| {
        let phi = log_phi.exp();
        let f: Vec<f64> = bins
            .iter()
            .map(|b| 1.0 - matern_unchecked(b.mean_distance, phi, nu))
            .collect();
        nnls2(&gamma, &f)
    };
    let positive: Vec<f64> = bins.iter().map(|b| b.mean_distance).filter(|&h| h > 0.0).collect();
    let (Some(hmin), Some(hmax)) = (
        positive.iter().copied().reduce(f64::min),
        positive.iter().copied().reduce(f64::max),
    ) else {
        return Err(Error::Degenerate("all pairs are at distance zero".into()));
    };
    let (lo, hi) = ((hmin / 10.0).ln(), (hmax * 10.0).ln());
    let coarse = 80;
    let xs: Vec<f64> = (0..coarse).map(|i| lo + (hi - lo) * i as f64 / (coarse - 1) as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| profile(x).0).collect();
    let ib = (0..coarse).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
    let (mut a, mut b) = (xs[ib.saturating_sub(1)], xs[(ib + 1).min(coarse - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (profile(c).0, profile(d).0);
    let mut iters = 0;
    while b - a > 1e-9 {
        iters += 1;
        if iters > 500 {
            return Err(Error::Fit(format!(
                "golden-section search for ν = {nu} stalled on [{a}, {b}] with SSE {fc}"
            )));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile(d).0;
        }
    }
    let mut log_phi = 0.5 * (a + b);
    let mut best = profile(log_phi);
    if vals[ib] < best.0 {
        log_phi = xs[ib];
        best = profile(log_phi);
    }
    let (sse, nugget, sigma2) = best;
    if !sse.is_finite() {
        return Err(Error::Fit(format!("non-finite SSE for ν = {nu}")));
    }
    Ok(VariogramFit {
        nu,
        sigma2,
        phi: log_phi.exp(),
        nugget,
        sse,
    })
}

/// Fits `nugget + σ²(1 − ρ_ν(h; φ))` to the binned semivariogram of the
/// OLS trend residuals, once per candidate order.
pub fn variogram_ls(data: &SpatialData, candidates: &[Smoothness]) -> Result<Vec<VariogramFit>> {
    let trend = build_trend(data)?;
    let obs = data.observed();
    let d_o = trend.select_rows(obs);
    let x_o = DVector::from_iterator(obs.len(), obs.iter().map(|&i| data.records()[i].rainfall_mm.unwrap()));
    let beta = d_o
        .clone()
        .svd(true, true)
        .solve(&x_o, 1e-12)
        .map_err(|e| Error::Decomposition(e.to_string()))?;
    let resid = x_o - d_o * beta;
    let coords: Vec<(f64, f64)> = obs.iter().map(|&i| (data.records()[i].x_km, data.records()[i].y_km)).collect();
    let bins = empirical_variogram(&coords, resid.as_slice(), N_BINS)?;
    candidates.iter().map(|&nu| fit_one(&bins, nu)).collect()
}
