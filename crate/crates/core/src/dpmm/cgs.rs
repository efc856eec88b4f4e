//! Collapsed Gibbs sampler for the Dirichlet-process mixture.
//!
//! Cluster locations are integrated out under `N(ψ, 1/ν)`, so assignments
//! follow the Chinese restaurant process weighted by posterior-predictive
//! densities. The shared precision is refreshed once per sweep by
//! instantiating the locations and drawing `φ` from its Gamma conditional.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DpHyper;
use crate::error::{Error, Result};
use crate::stats::{
    normal_pdf, sample_categorical_log, sample_gamma, sample_normal, RngStream, RunLength,
};

/// 1,000 burn-in sweeps followed by 10,000 kept sweeps.
pub const DEFAULT_RUN: RunLength = RunLength {
    burn_in: 1000,
    iters: 10_000,
    thin: 1,
};

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ClusterStats {
    fn add(&mut self, z: f64) {
        self.count += 1;
        self.sum += z;
        self.sum_sq += z * z;
    }

    fn remove(&mut self, z: f64) {
        self.count -= 1;
        self.sum -= z;
        self.sum_sq -= z * z;
    }

    /// Posterior mean and variance of the cluster location at precision `φ`.
    pub fn location_posterior(&self, phi: f64, hyper: &DpHyper) -> (f64, f64) {
        let var = 1.0 / (hyper.nu + phi * self.count as f64);
        (var * (hyper.nu * hyper.psi + phi * self.sum), var)
    }

    /// Posterior-predictive density of a new point joining this cluster.
    pub fn predictive(&self, y: f64, phi: f64, hyper: &DpHyper) -> f64 {
        let (m, v) = self.location_posterior(phi, hyper);
        normal_pdf(y, m, v + 1.0 / phi)
    }

    fn log_predictive(&self, y: f64, phi: f64, hyper: &DpHyper) -> f64 {
        let (m, v) = self.location_posterior(phi, hyper);
        let s = v + 1.0 / phi;
        -0.5 * (2.0 * std::f64::consts::PI * s).ln() - 0.5 * (y - m).powi(2) / s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgsState {
    /// Cluster index of each point, always in `0..clusters.len()`.
    pub labels: Vec<usize>,
    pub clusters: Vec<ClusterStats>,
    pub phi: f64,
}

impl CgsState {
    /// All points in one cluster with `φ = 1`.
    pub fn single_cluster(z: &[f64]) -> Self {
        let mut c = ClusterStats::default();
        z.iter().for_each(|&v| c.add(v));
        CgsState {
            labels: vec![0; z.len()],
            clusters: if z.is_empty() { vec![] } else { vec![c] },
            phi: 1.0,
        }
    }

    /// Recomputes the sufficient statistics from the labels.
    pub fn audit(&self, z: &[f64]) -> Vec<ClusterStats> {
        let mut out = vec![ClusterStats::default(); self.clusters.len()];
        for (&l, &v) in self.labels.iter().zip(z) {
            out[l].add(v);
        }
        out
    }

    fn drop_cluster(&mut self, c: usize) {
        let last = self.clusters.len() - 1;
        self.clusters.swap_remove(c);
        if c != last {
            for l in &mut self.labels {
                if *l == last {
                    *l = c;
                }
            }
        }
    }
}

/// Reassigns every point in turn, then refreshes `φ`.
pub fn cgs_sweep(state: &mut CgsState, z: &[f64], hyper: &DpHyper, rng: &mut RngStream) -> Result<()> {
    let empty = ClusterStats::default();
    let mut logw = Vec::new();
    for (i, &zi) in z.iter().enumerate() {
        let c = state.labels[i];
        state.clusters[c].remove(zi);
        if state.clusters[c].count == 0 {
            state.drop_cluster(c);
        }
        logw.clear();
        for cl in &state.clusters {
            logw.push((cl.count as f64).ln() + cl.log_predictive(zi, state.phi, hyper));
        }
        logw.push(hyper.alpha.ln() + empty.log_predictive(zi, state.phi, hyper));
        let k = sample_categorical_log(rng, &logw)?;
        if k == state.clusters.len() {
            state.clusters.push(ClusterStats::default());
        }
        state.clusters[k].add(zi);
        state.labels[i] = k;
    }
    // instantiate locations, then φ | locations
    let mut locations = Vec::with_capacity(state.clusters.len());
    for cl in &state.clusters {
        let (m, v) = cl.location_posterior(state.phi, hyper);
        locations.push(sample_normal(rng, m, v)?);
    }
    let ss: f64 = z
        .iter()
        .zip(&state.labels)
        .map(|(v, &l)| (v - locations[l]).powi(2))
        .sum();
    let phi = sample_gamma(rng, hyper.a_phi + z.len() as f64 / 2.0, hyper.b_phi + 0.5 * ss)?;
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::numerical(0, format!("φ draw {phi} is not positive")));
    }
    state.phi = phi;
    Ok(())
}

/// Retained assignments (relabelled by first appearance) and `φ` draws.
#[derive(Clone, Debug, PartialEq)]
pub struct CgsDraws {
    pub assignments: Vec<Vec<usize>>,
    pub phi: Vec<f64>,
}

impl CgsDraws {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        self.assignments
            .iter()
            .map(|a| a.iter().max().map_or(0, |m| m + 1))
            .collect()
    }
}

/// Labels renumbered in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

pub fn cgs_run(z: &[f64], hyper: &DpHyper, length: RunLength, seed: u64) -> Result<CgsDraws> {
    hyper.validate()?;
    length.validate()?;
    let mut rng = RngStream::new(seed);
    let mut state = CgsState::single_cluster(z);
    for _ in 0..length.burn_in {
        cgs_sweep(&mut state, z, hyper, &mut rng)?;
    }
    let mut draws = CgsDraws {
        assignments: Vec::with_capacity(length.kept()),
        phi: Vec::with_capacity(length.kept()),
    };
    for it in 1..=length.iters {
        cgs_sweep(&mut state, z, hyper, &mut rng)?;
        if it % length.thin == 0 {
            draws.assignments.push(canonical_labels(&state.labels));
            draws.phi.push(state.phi);
        }
    }
    Ok(draws)
}

/// Fraction of draws in which each pair shares a cluster.
pub fn incidence(assignments: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    let Some(first) = assignments.first() else {
        return Err(Error::Precondition("no assignment draws".into()));
    };
    let n = first.len();
    let mut m = DMatrix::zeros(n, n);
    for a in assignments {
        if a.len() != n {
            return Err(Error::Precondition("assignment draws differ in length".into()));
        }
        for i in 0..n {
            for j in i..n {
                if a[i] == a[j] {
                    m[(i, j)] += 1.0;
                }
            }
        }
    }
    let k = assignments.len() as f64;
    for i in 0..n {
        for j in i..n {
            let v = m[(i, j)] / k;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Predictive density averaged over draws: each draw contributes
/// `(Σ_c n_c m_c(y) + α m_0(y)) / (n + α)`.
pub fn cgs_predictive(draws: &CgsDraws, z: &[f64], hyper: &DpHyper, grid: &[f64]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::Precondition("no draws".into()));
    }
    let n = z.len() as f64;
    let empty = ClusterStats::default();
    let mut out = vec![0.0; grid.len()];
    for (a, &phi) in draws.assignments.iter().zip(&draws.phi) {
        let k = a.iter().max().map_or(0, |m| m + 1);
        let mut stats = vec![ClusterStats::default(); k];
        for (&l, &v) in a.iter().zip(z) {
            stats[l].add(v);
        }
        for (o, &y) in out.iter_mut().zip(grid) {
            let mut f = hyper.alpha * empty.predictive(y, phi, hyper);
            for s in &stats {
                f += s.count as f64 * s.predictive(y, phi, hyper);
            }
            *o += f / (n + hyper.alpha);
        }
    }
    let k = draws.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    Ok(out)
}
