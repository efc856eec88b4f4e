use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::corr::{covariance, Smoothness};
use super::{Psi, SpatialPrior, TrendMatrix};
use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, cholesky_jittered};
use crate::stats::{sample_inv_gamma, sample_std_normal, RngStream};

/// Factorization of `V(ψ)` and the whitened design `L⁻¹D = QR`.
#[derive(Clone, Debug)]
pub struct PsiFactor {
    chol: Cholesky<f64, Dyn>,
    log_det_v: f64,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

/// Generalized-least-squares quantities of one `ψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlsProfile {
    pub beta_hat: DVector<f64>,
    /// `(X − Dβ̂)ᵀ V⁻¹ (X − Dβ̂)`.
    pub s2: f64,
    pub log_det_v: f64,
    /// `log |Dᵀ V⁻¹ D|`.
    pub log_det_dvd: f64,
    r: DMatrix<f64>,
}

fn lower_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| Error::Decomposition("singular triangular factor".into()))
}

impl PsiFactor {
    pub fn new(v: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky_jittered(v)?;
        let log_det_v = chol_log_det(&chol);
        let dw = lower_solve(chol.l_dirty(), d)?;
        let qr = dw.qr();
        let r = qr.r();
        let scale = r.diagonal().amax().max(f64::MIN_POSITIVE);
        let dependent: Vec<String> = (0..r.ncols())
            .filter(|&j| r[(j, j)].abs() <= 1e-12 * scale)
            .map(|j| format!("column {j}"))
            .collect();
        if !dependent.is_empty() {
            return Err(Error::RankDeficient { columns: dependent });
        }
        Ok(PsiFactor {
            chol,
            log_det_v,
            q: qr.q(),
            r,
        })
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn log_det_v(&self) -> f64 {
        self.log_det_v
    }

    /// `L⁻¹ b` for the lower Cholesky factor `L` of `V`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        lower_solve(self.chol.l_dirty(), b)
    }

    pub fn profile(&self, x: &DVector<f64>) -> Result<GlsProfile> {
        let xw = self
            .chol
            .l_dirty()
            .solve_lower_triangular(x)
            .ok_or_else(|| Error::Decomposition("singular triangular factor".into()))?;
        let qtx = self.q.transpose() * &xw;
        let beta_hat = self
            .r
            .solve_upper_triangular(&qtx)
            .ok_or_else(|| Error::Decomposition("singular R factor".into()))?;
        let resid = &xw - &self.q * &qtx;
        let log_det_dvd = 2.0 * self.r.diagonal().iter().map(|d| d.abs().ln()).sum::<f64>();
        Ok(GlsProfile {
            beta_hat,
            s2: resid.norm_squared(),
            log_det_v: self.log_det_v,
            log_det_dvd,
            r: self.r.clone(),
        })
    }
}

impl GlsProfile {
    pub fn k(&self) -> usize {
        self.beta_hat.len()
    }

    /// `σ² ~ IG((n−k)/2 + a, S²/2 + b)`, then `β ~ N(β̂, σ²(DᵀV⁻¹D)⁻¹)`.
    pub fn draw_sigma2_beta(
        &self,
        n: usize,
        prior: &SpatialPrior,
        rng: &mut RngStream,
    ) -> Result<(f64, DVector<f64>)> {
        let shape = (n - self.k()) as f64 / 2.0 + prior.sigma2_shape;
        let rate = self.s2 / 2.0 + prior.sigma2_rate;
        let sigma2 = sample_inv_gamma(rng, shape, rate)?;
        let z = DVector::from_fn(self.k(), |_, _| sample_std_normal(rng));
        let step = self
            .r
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Decomposition("singular R factor".into()))?;
        Ok((sigma2, &self.beta_hat + step * sigma2.sqrt()))
    }

    /// Posterior covariance scale `(DᵀV⁻¹D)⁻¹`.
    pub fn beta_cov_unit(&self) -> DMatrix<f64> {
        let rinv = self
            .r
            .clone()
            .try_inverse()
            .expect("R factor checked nonsingular");
        &rinv * rinv.transpose()
    }
}

pub fn gls_profile(
    psi: Psi,
    x: &DVector<f64>,
    trend: &TrendMatrix,
    dist: &DMatrix<f64>,
    nu: Smoothness,
) -> Result<GlsProfile> {
    if !(psi.phi > 0.0) {
        return Err(Error::Parameter(format!("range φ must be positive, got {}", psi.phi)));
    }
    let v = covariance(dist, psi, nu);
    PsiFactor::new(&v, &trend.d)?.profile(x)
}

/// Log marginal posterior of `ψ` up to a constant, or `−∞` off the support.
pub fn log_post_from_profile(psi: Psi, profile: &GlsProfile, n: usize, prior: &SpatialPrior) -> f64 {
    if !prior.contains(psi) {
        return f64::NEG_INFINITY;
    }
    let k = profile.k() as f64;
    let power = (n as f64 - k) / 2.0 + prior.sigma2_shape;
    -0.5 * profile.log_det_v - 0.5 * profile.log_det_dvd
        - power * (profile.s2 + 2.0 * prior.sigma2_rate).ln()
        - psi.phi.ln()
}

pub fn log_post_psi(
    psi: Psi,
    x: &DVector<f64>,
    trend: &TrendMatrix,
    dist: &DMatrix<f64>,
    nu: Smoothness,
    prior: &SpatialPrior,
) -> Result<f64> {
    if !prior.contains(psi) {
        return Ok(f64::NEG_INFINITY);
    }
    let profile = gls_profile(psi, x, trend, dist, nu)?;
    Ok(log_post_from_profile(psi, &profile, x.len(), prior))
}
