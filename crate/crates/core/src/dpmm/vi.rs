//! Coordinate-ascent mean-field VI for the truncated stick-breaking mixture.
//!
//! The family is `q(φ) = Gamma(ξ₁, ξ₂)`, `q(v_ℓ) = Beta(γ_{ℓ,1}, γ_{ℓ,2})`
//! for `ℓ < N` with `v_N = 1`, `q(Z_ℓ) = N(η_{ℓ,1}, η_{ℓ,2})`, and
//! `q(L_i = ℓ) = ϖ_{i,ℓ}`.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DpHyper;
use crate::error::{Error, Result};
use crate::stats::{digamma, ln_beta, ln_gamma, normal_pdf, sample_categorical, sample_gamma, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct ViParams {
    pub xi: (f64, f64),
    /// Length `N − 1`.
    pub gamma: Vec<(f64, f64)>,
    /// Mean and variance of each `Z_ℓ`, length `N`.
    pub eta: Vec<(f64, f64)>,
    /// `n × N` responsibilities.
    pub varpi: DMatrix<f64>,
}

impl ViParams {
    pub fn truncation(&self) -> usize {
        self.eta.len()
    }

    /// Concatenated parameter vector used by the convergence norm.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = vec![self.xi.0, self.xi.1];
        for g in &self.gamma {
            v.extend([g.0, g.1]);
        }
        for e in &self.eta {
            v.extend([e.0, e.1]);
        }
        v.extend(self.varpi.iter());
        v
    }

    /// Responsibility-weighted counts `Σ_i ϖ_{i,ℓ}`.
    pub fn counts(&self) -> Vec<f64> {
        self.varpi.column_iter().map(|c| c.sum()).collect()
    }
}

/// Equal-frequency quantile bins of the sorted data as the initial partition.
pub fn vi_init(z: &[f64], k: usize, hyper: &DpHyper) -> Result<ViParams> {
    hyper.validate()?;
    let nt = hyper.truncation;
    if k == 0 || k > nt {
        return Err(Error::Precondition(format!("initial clusters {k} outside 1..={nt}")));
    }
    let n = z.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let mut varpi = DMatrix::zeros(n, nt);
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (p, &i) in order.iter().enumerate() {
        let bin = p * k / n;
        varpi[(i, bin)] = 1.0;
        sums[bin] += z[i];
        sizes[bin] += 1;
    }
    let eta = (0..nt)
        .map(|l| {
            let m = if l < k && sizes[l] > 0 { sums[l] / sizes[l] as f64 } else { hyper.psi };
            (m, 1.0 / hyper.nu)
        })
        .collect();
    Ok(ViParams {
        xi: (hyper.a_phi, hyper.b_phi),
        gamma: vec![(1.0, hyper.alpha); nt - 1],
        eta,
        varpi,
    })
}

fn sq_expect(z: f64, eta: (f64, f64)) -> f64 {
    z * z - 2.0 * z * eta.0 + eta.0 * eta.0 + eta.1
}

pub fn update_xi(params: &mut ViParams, z: &[f64], hyper: &DpHyper) -> Result<()> {
    let mut ss = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        for (l, &e) in params.eta.iter().enumerate() {
            ss += params.varpi[(i, l)] * sq_expect(zi, e);
        }
    }
    let xi2 = hyper.b_phi + 0.5 * ss;
    if !(xi2 > 0.0 && xi2.is_finite()) {
        return Err(Error::numerical(1, format!("ξ₂ = {xi2} is not positive")));
    }
    params.xi = (hyper.a_phi + z.len() as f64 / 2.0, xi2);
    Ok(())
}

pub fn update_gamma(params: &mut ViParams, hyper: &DpHyper) {
    let counts = params.counts();
    let nt = counts.len();
    let mut tail = 0.0;
    for l in (0..nt - 1).rev() {
        tail += counts[l + 1];
        params.gamma[l] = (1.0 + counts[l], hyper.alpha + tail);
    }
}

pub fn update_eta(params: &mut ViParams, z: &[f64], hyper: &DpHyper) {
    let phi_bar = params.xi.0 / params.xi.1;
    for l in 0..params.eta.len() {
        let col = params.varpi.column(l);
        let nl = col.sum();
        let sz: f64 = col.iter().zip(z).map(|(w, zi)| w * zi).sum();
        let var = 1.0 / (hyper.nu + phi_bar * nl);
        params.eta[l] = (var * (hyper.nu * hyper.psi + phi_bar * sz), var);
    }
}

/// `E[log v_ℓ]` for `ℓ < N` (zero at `ℓ = N`) and `E[log(1 − v_ℓ)]` for `ℓ < N`.
fn stick_expectations(gamma: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut elog_v = Vec::with_capacity(gamma.len() + 1);
    let mut elog_1mv = Vec::with_capacity(gamma.len());
    for &(g1, g2) in gamma {
        let d = digamma(g1 + g2).expect("γ entries are positive");
        elog_v.push(digamma(g1).expect("γ entries are positive") - d);
        elog_1mv.push(digamma(g2).expect("γ entries are positive") - d);
    }
    elog_v.push(0.0);
    (elog_v, elog_1mv)
}

/// `E[log p(L = ℓ | v)]` for each component.
fn log_prior_weights(gamma: &[(f64, f64)]) -> Vec<f64> {
    let (elog_v, elog_1mv) = stick_expectations(gamma);
    let mut acc = 0.0;
    elog_v
        .iter()
        .enumerate()
        .map(|(l, ev)| {
            let s = ev + acc;
            if l < elog_1mv.len() {
                acc += elog_1mv[l];
            }
            s
        })
        .collect()
}

/// Log-scores, then a row-wise softmax.
pub fn update_varpi(params: &mut ViParams, z: &[f64], _hyper: &DpHyper) -> Result<()> {
    let prior = log_prior_weights(&params.gamma);
    let (xi1, xi2) = params.xi;
    let elog_phi = digamma(xi1)? - xi2.ln();
    let e_phi = xi1 / xi2;
    let nt = params.eta.len();
    let mut s = vec![0.0; nt];
    for (i, &zi) in z.iter().enumerate() {
        for l in 0..nt {
            s[l] = prior[l] + 0.5 * elog_phi - 0.5 * e_phi * sq_expect(zi, params.eta[l]);
        }
        let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = s.iter().map(|v| (v - mx).exp()).sum();
        for l in 0..nt {
            params.varpi[(i, l)] = (s[l] - mx).exp() / total;
        }
    }
    Ok(())
}

/// Individual terms of the bound, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub log_p_phi: f64,
    pub log_p_v: f64,
    pub log_p_z: f64,
    pub log_p_l: f64,
    pub log_lik: f64,
    pub entropy: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.log_p_phi + self.log_p_v + self.log_p_z + self.log_p_l + self.log_lik + self.entropy
    }
}

pub fn elbo_terms(params: &ViParams, z: &[f64], hyper: &DpHyper) -> Result<ElboTerms> {
    let (xi1, xi2) = params.xi;
    let psi1 = digamma(xi1)?;
    let elog_phi = psi1 - xi2.ln();
    let e_phi = xi1 / xi2;
    let (a, b) = (hyper.a_phi, hyper.b_phi);
    let log_p_phi = a * b.ln() - ln_gamma(a) + (a - 1.0) * elog_phi - b * e_phi;

    let (_, elog_1mv) = stick_expectations(&params.gamma);
    let log_p_v: f64 = elog_1mv
        .iter()
        .map(|e| hyper.alpha.ln() + (hyper.alpha - 1.0) * e)
        .sum();

    let log_p_z: f64 = params
        .eta
        .iter()
        .map(|&(m, v)| {
            0.5 * hyper.nu.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * hyper.nu * ((m - hyper.psi).powi(2) + v)
        })
        .sum();

    let prior = log_prior_weights(&params.gamma);
    let mut log_p_l = 0.0;
    let mut log_lik = 0.0;
    let mut ent_l = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        for (l, &e) in params.eta.iter().enumerate() {
            let w = params.varpi[(i, l)];
            if w > 0.0 {
                log_p_l += w * prior[l];
                log_lik += w * (0.5 * elog_phi - 0.5 * (2.0 * PI).ln() - 0.5 * e_phi * sq_expect(zi, e));
                ent_l -= w * w.ln();
            }
        }
    }

    let ent_phi = xi1 - xi2.ln() + ln_gamma(xi1) + (1.0 - xi1) * psi1;
    let mut ent_v = 0.0;
    for &(g1, g2) in &params.gamma {
        ent_v += ln_beta(g1, g2) - (g1 - 1.0) * digamma(g1)? - (g2 - 1.0) * digamma(g2)?
            + (g1 + g2 - 2.0) * digamma(g1 + g2)?;
    }
    let ent_z: f64 = params
        .eta
        .iter()
        .map(|&(_, v)| 0.5 * (2.0 * PI * std::f64::consts::E * v).ln())
        .sum();

    let terms = ElboTerms {
        log_p_phi,
        log_p_v,
        log_p_z,
        log_p_l,
        log_lik,
        entropy: ent_phi + ent_v + ent_z + ent_l,
    };
    if !terms.total().is_finite() {
        return Err(Error::numerical(0, format!("non-finite ELBO: {terms:?}")));
    }
    Ok(terms)
}

pub fn elbo(params: &ViParams, z: &[f64], hyper: &DpHyper) -> Result<f64> {
    Ok(elbo_terms(params, z, hyper)?.total())
}

/// ELBO and parameter change per iteration; `elbo[0]` is the bound at the
/// initial parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub elbo: Vec<f64>,
    pub delta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// One coordinate-ascent iteration in the order γ, η, ξ, ϖ.
pub fn vi_iterate(params: &mut ViParams, z: &[f64], hyper: &DpHyper) -> Result<()> {
    update_gamma(params, hyper);
    update_eta(params, z, hyper);
    update_xi(params, z, hyper)?;
    update_varpi(params, z, hyper)
}

/// Iterates until the largest absolute parameter change is below `tol`.
/// Hitting `max_iters` returns the trace with `converged = false`.
pub fn vi_fit(z: &[f64], hyper: &DpHyper, k_init: usize, max_iters: usize) -> Result<(ViParams, FitTrace)> {
    let start = Instant::now();
    let mut params = vi_init(z, k_init, hyper)?;
    let mut trace = FitTrace {
        elbo: vec![elbo(&params, z, hyper)?],
        delta: Vec::new(),
        iterations: 0,
        converged: false,
        wall_time_s: 0.0,
    };
    let mut prev = params.flatten();
    while trace.iterations < max_iters {
        vi_iterate(&mut params, z, hyper)?;
        trace.iterations += 1;
        trace.elbo.push(elbo(&params, z, hyper)?);
        let cur = params.flatten();
        let delta = prev.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        trace.delta.push(delta);
        prev = cur;
        if delta < hyper.tol {
            trace.converged = true;
            break;
        }
    }
    trace.wall_time_s = start.elapsed().as_secs_f64();
    Ok((params, trace))
}

/// `E_q[p_ℓ]` for `ℓ = 1..=N`, with `v_N = 1`.
pub fn expected_weights(gamma: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(gamma.len() + 1);
    let mut rest = 1.0;
    for &(g1, g2) in gamma {
        out.push(rest * g1 / (g1 + g2));
        rest *= g2 / (g1 + g2);
    }
    out.push(rest);
    out
}

/// `Σ_ℓ E_q[p_ℓ] N(y | η_{ℓ,1}, η_{ℓ,2} + ξ₂/ξ₁)`: exact over `Z`, with `φ`
/// at its variational mean.
pub fn predictive_density(params: &ViParams, grid: &[f64]) -> Vec<f64> {
    let w = expected_weights(&params.gamma);
    let noise = params.xi.1 / params.xi.0;
    grid.iter()
        .map(|&y| {
            w.iter()
                .zip(&params.eta)
                .map(|(wl, &(m, v))| wl * normal_pdf(y, m, v + noise))
                .sum()
        })
        .collect()
}

/// Same as [`predictive_density`] averaging over `draws` samples of
/// `φ ~ q(φ)` instead of plugging in its mean.
pub fn predictive_density_mc(params: &ViParams, grid: &[f64], draws: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let w = expected_weights(&params.gamma);
    let mut out = vec![0.0; grid.len()];
    for _ in 0..draws {
        let phi = sample_gamma(rng, params.xi.0, params.xi.1)?;
        for (o, &y) in out.iter_mut().zip(grid) {
            *o += w
                .iter()
                .zip(&params.eta)
                .map(|(wl, &(m, v))| wl * normal_pdf(y, m, v + 1.0 / phi))
                .sum::<f64>();
        }
    }
    out.iter_mut().for_each(|v| *v /= draws as f64);
    Ok(out)
}

/// Hard assignments drawn independently from each responsibility row.
pub fn sample_assignments(params: &ViParams, draws: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    let rows: Vec<Vec<f64>> = params.varpi.row_iter().map(|r| r.iter().copied().collect()).collect();
    (0..draws)
        .map(|_| rows.iter().map(|r| sample_categorical(rng, r)).collect())
        .collect()
}
