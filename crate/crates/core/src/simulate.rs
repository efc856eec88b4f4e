//! Synthetic data drawn from each model's generative process, with the
//! realized truth kept alongside for calibration checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dpmm::DpHyper;
use crate::error::{Error, Result};
use crate::hier::{HierHyper, HierRecord};
use crate::linalg::cholesky_jittered;
use crate::mtd::{simulate_mtd, MtdParams};
use crate::spatial::{covariance, distances, Psi, Smoothness, SpatialRecord, TrendMatrix, TREND_COLUMNS};
use crate::stats::{sample_categorical, sample_gamma, sample_inv_gamma, sample_normal, sample_std_normal, RngStream};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive, got {v}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierSim {
    pub n_groups: usize,
    pub devices_per_group: usize,
    pub records_per_device: u64,
    pub mu: f64,
    /// Zero gives identical group means.
    pub tau2: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub dof: f64,
    /// Device index and offset: that device's mean is set to `θ_j` plus the
    /// given multiple of the level-1 t error's standard deviation.
    pub outlier: Option<(usize, f64)>,
}

impl Default for HierSim {
    fn default() -> Self {
        let h = HierHyper::default();
        HierSim {
            n_groups: 4,
            devices_per_group: 20,
            records_per_device: 5,
            mu: 0.0,
            tau2: 1.0,
            sigma2: 1.0,
            alpha: h.alpha,
            dof: h.dof,
            outlier: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierTruth {
    pub mu: f64,
    pub tau2: f64,
    pub sigma2: f64,
    pub theta: Vec<f64>,
    pub sigma2_group: Vec<f64>,
    pub lambda: Vec<f64>,
    pub outlier: Option<usize>,
}

/// Draws `θ_j`, `σ²_j` and `λ_ij` from the level-2 model at fixed `μ, τ², σ²`.
pub fn hier_truth(sim: &HierSim, rng: &mut RngStream) -> Result<HierTruth> {
    if sim.n_groups == 0 || sim.devices_per_group == 0 || sim.records_per_device == 0 {
        return Err(Error::Parameter("hierarchical layout sizes must be positive".into()));
    }
    if !(sim.tau2 >= 0.0 && sim.tau2.is_finite()) {
        return Err(Error::Parameter(format!("tau2 must be non-negative, got {}", sim.tau2)));
    }
    positive("sigma2", sim.sigma2)?;
    positive("alpha", sim.alpha)?;
    positive("dof", sim.dof)?;
    if !sim.mu.is_finite() {
        return Err(Error::Parameter("mu must be finite".into()));
    }
    let n_dev = sim.n_groups * sim.devices_per_group;
    if let Some((i, k)) = sim.outlier {
        if i >= n_dev || !k.is_finite() {
            return Err(Error::Parameter(format!("outlier ({i}, {k}) out of range")));
        }
        if !(sim.dof > 2.0) {
            return Err(Error::Parameter("an outlier offset needs dof > 2".into()));
        }
    }
    let theta = (0..sim.n_groups)
        .map(|_| if sim.tau2 == 0.0 { Ok(sim.mu) } else { sample_normal(rng, sim.mu, sim.tau2) })
        .collect::<Result<Vec<_>>>()?;
    let sigma2_group = (0..sim.n_groups)
        .map(|_| sample_inv_gamma(rng, sim.alpha + 1.0, sim.alpha * sim.sigma2))
        .collect::<Result<Vec<_>>>()?;
    let lambda = (0..n_dev)
        .map(|_| sample_gamma(rng, sim.dof / 2.0, sim.dof / 2.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(HierTruth {
        mu: sim.mu,
        tau2: sim.tau2,
        sigma2: sim.sigma2,
        theta,
        sigma2_group,
        lambda,
        outlier: sim.outlier.map(|o| o.0),
    })
}

/// Device means given the truth. Device `i` sits in group `i / devices_per_group`.
pub fn hier_records(sim: &HierSim, truth: &HierTruth, rng: &mut RngStream) -> Result<Vec<HierRecord>> {
    let n = sim.records_per_device as f64;
    let mut out = Vec::with_capacity(truth.lambda.len());
    for (i, &lam) in truth.lambda.iter().enumerate() {
        let g = i / sim.devices_per_group;
        let sd = (truth.sigma2_group[g] / n).sqrt();
        let mut y = sample_normal(rng, truth.theta[g], sd * sd / lam)?;
        if let Some((dev, k)) = sim.outlier {
            if dev == i {
                y = truth.theta[g] + k * sd * (sim.dof / (sim.dof - 2.0)).sqrt();
            }
        }
        out.push(HierRecord {
            device_id: format!("d{:02}_{:03}", g + 1, i % sim.devices_per_group + 1),
            group: (g + 1).to_string(),
            y_mean: y,
            n_records: sim.records_per_device,
        });
    }
    Ok(out)
}

pub fn simulate_hier(sim: &HierSim, rng: &mut RngStream) -> Result<(Vec<HierRecord>, HierTruth)> {
    let truth = hier_truth(sim, rng)?;
    let records = hier_records(sim, &truth, rng)?;
    Ok((records, truth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialSim {
    pub n_sites: usize,
    /// One record per site and year.
    pub years: Vec<f64>,
    pub extent_km: f64,
    pub altitude_max_km: f64,
    /// Coefficients in [`TREND_COLUMNS`] order.
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub psi: Psi,
    pub nu: Smoothness,
    pub missing_frac: f64,
}

impl Default for SpatialSim {
    fn default() -> Self {
        SpatialSim {
            n_sites: 40,
            years: vec![1.0, 2.0, 3.0],
            extent_km: 100.0,
            altitude_max_km: 1.5,
            beta: vec![100.0, 0.2, -0.1, 30.0, 0.0, 0.0, 0.0],
            sigma2: 25.0,
            psi: Psi { phi: 30.0, gamma2: 3.0 },
            nu: Smoothness::FiveHalves,
            missing_frac: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialTruth {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub psi: Psi,
    pub nu: Smoothness,
    /// Complete response vector, including the cells blanked as missing.
    pub x: Vec<f64>,
    pub missing: Vec<usize>,
}

/// `X ~ N(Dβ, σ²(R(φ) + γ²I))` over uniformly scattered sites.
pub fn simulate_spatial(sim: &SpatialSim, rng: &mut RngStream) -> Result<(Vec<SpatialRecord>, SpatialTruth)> {
    if sim.n_sites == 0 || sim.years.is_empty() {
        return Err(Error::Parameter("need at least one site and one year".into()));
    }
    if sim.beta.len() != TREND_COLUMNS.len() {
        return Err(Error::Parameter(format!(
            "beta has {} entries, expected {}",
            sim.beta.len(),
            TREND_COLUMNS.len()
        )));
    }
    positive("extent_km", sim.extent_km)?;
    positive("sigma2", sim.sigma2)?;
    positive("phi", sim.psi.phi)?;
    if !(sim.psi.gamma2 >= 0.0) || (sim.psi.gamma2 == 0.0 && sim.years.len() > 1) {
        return Err(Error::Parameter("gamma2 must be positive when sites repeat across years".into()));
    }
    if !(0.0..1.0).contains(&sim.missing_frac) || !(sim.altitude_max_km >= 0.0) {
        return Err(Error::Parameter("missing_frac must lie in [0, 1) and altitude_max_km ≥ 0".into()));
    }
    let sites: Vec<(f64, f64, f64)> = (0..sim.n_sites)
        .map(|_| {
            (
                sim.extent_km * rng.uniform(),
                sim.extent_km * rng.uniform(),
                sim.altitude_max_km * rng.uniform(),
            )
        })
        .collect();
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for &year in &sim.years {
        for (s, &(x, y, alt)) in sites.iter().enumerate() {
            rows.push((x, y, alt, year));
            ids.push(s);
        }
    }
    let n = rows.len();
    let coords: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let dist = distances(&coords, &coords);
    let v = covariance(&dist, sim.psi, sim.nu) * sim.sigma2;
    let chol = cholesky_jittered(&v)?;
    let eps = DVector::from_fn(n, |_, _| sample_std_normal(rng));
    let trend = TrendMatrix::assemble(&rows);
    let x = &trend.d * DVector::from_column_slice(&sim.beta) + chol.l() * eps;

    let n_missing = (sim.missing_frac * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..n_missing {
        let j = i + rng.below(n - i);
        order.swap(i, j);
    }
    let mut missing = order[..n_missing].to_vec();
    missing.sort_unstable();

    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(xk, yk, alt, year))| SpatialRecord {
            site_id: format!("s{:04}", ids[i] + 1),
            x_km: xk,
            y_km: yk,
            altitude_km: alt,
            year,
            rainfall_mm: if missing.binary_search(&i).is_ok() { None } else { Some(x[i]) },
        })
        .collect();
    let truth = SpatialTruth {
        beta: sim.beta.clone(),
        sigma2: sim.sigma2,
        psi: sim.psi,
        nu: sim.nu,
        x: x.iter().copied().collect(),
        missing,
    };
    Ok((records, truth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtdSim {
    pub lambda: Vec<f64>,
    /// Rows of the shared transition matrix.
    pub q: Vec<Vec<f64>>,
    pub n: usize,
}

impl Default for MtdSim {
    /// Second-order chain on three states with a sticky, well-separated `Q`.
    fn default() -> Self {
        MtdSim {
            lambda: vec![0.2, 0.8],
            q: vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]],
            n: 500,
        }
    }
}

impl MtdSim {
    pub fn params(&self) -> Result<MtdParams> {
        let m = self.q.len();
        if m == 0 || self.q.iter().any(|r| r.len() != m) {
            return Err(Error::Parameter("q must be a non-empty square matrix".into()));
        }
        MtdParams::new(self.lambda.clone(), DMatrix::from_fn(m, m, |i, j| self.q[i][j]))
    }
}

/// Returns 1-based state codes; the first `order` states are uniform.
pub fn simulate_mtd_codes(sim: &MtdSim, rng: &mut RngStream) -> Result<Vec<usize>> {
    let params = sim.params()?;
    if sim.n < params.order() {
        return Err(Error::Parameter("chain shorter than the order".into()));
    }
    let prefix: Vec<usize> = (0..params.order()).map(|_| rng.below(params.m())).collect();
    let states = simulate_mtd(&params, &prefix, sim.n - params.order(), rng)?;
    Ok(states.into_iter().map(|s| s + 1).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpmmSim {
    pub n: usize,
    pub hyper: DpHyper,
    /// Drawn from `Gamma(a_φ, b_φ)` when absent.
    pub phi: Option<f64>,
}

impl Default for DpmmSim {
    fn default() -> Self {
        DpmmSim {
            n: 100,
            hyper: DpHyper::default(),
            phi: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpmmTruth {
    pub phi: f64,
    pub labels: Vec<usize>,
    pub means: Vec<f64>,
}

/// Chinese-restaurant labels, base-measure means, then `y_i ~ N(Z_{L_i}, 1/φ)`.
pub fn simulate_dpmm(sim: &DpmmSim, rng: &mut RngStream) -> Result<(Vec<f64>, DpmmTruth)> {
    sim.hyper.validate()?;
    let phi = match sim.phi {
        Some(p) => {
            positive("phi", p)?;
            p
        }
        None => sample_gamma(rng, sim.hyper.a_phi, sim.hyper.b_phi)?,
    };
    let mut sizes: Vec<f64> = Vec::new();
    let mut labels = Vec::with_capacity(sim.n);
    for _ in 0..sim.n {
        let mut w = sizes.clone();
        w.push(sim.hyper.alpha);
        let l = sample_categorical(rng, &w)?;
        if l == sizes.len() {
            sizes.push(0.0);
        }
        sizes[l] += 1.0;
        labels.push(l);
    }
    let means = (0..sizes.len())
        .map(|_| sample_normal(rng, sim.hyper.psi, 1.0 / sim.hyper.nu))
        .collect::<Result<Vec<_>>>()?;
    let y = labels
        .iter()
        .map(|&l| sample_normal(rng, means[l], 1.0 / phi))
        .collect::<Result<Vec<_>>>()?;
    Ok((y, DpmmTruth { phi, labels, means }))
}
