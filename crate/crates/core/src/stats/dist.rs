use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::rng::RngStream;
use crate::error::{Error, Result};
use crate::linalg;

/// Distributions the samplers draw from. Gamma and inverse-Gamma use the
/// shape–rate convention: densities ∝ x^{a−1}e^{−bx} and x^{−(a+1)}e^{−b/x}.
#[derive(Clone, Debug)]
pub enum Dist {
    Normal { mean: f64, var: f64 },
    Gamma { shape: f64, rate: f64 },
    InvGamma { shape: f64, rate: f64 },
    Beta { a: f64, b: f64 },
    Dirichlet(Vec<f64>),
    /// Single categorical trial over `p` (need not be normalized).
    Multinomial(Vec<f64>),
    MvNormal { mean: DVector<f64>, cov: DMatrix<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Draw {
    Scalar(f64),
    Vector(Vec<f64>),
    Index(usize),
}

impl Draw {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Draw::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Draw::Vector(v) => Some(v),
            _ => None,
        }
    }
}

pub fn sample(dist: &Dist, rng: &mut RngStream) -> Result<Draw> {
    Ok(match dist {
        Dist::Normal { mean, var } => Draw::Scalar(sample_normal(rng, *mean, *var)?),
        Dist::Gamma { shape, rate } => Draw::Scalar(sample_gamma(rng, *shape, *rate)?),
        Dist::InvGamma { shape, rate } => Draw::Scalar(sample_inv_gamma(rng, *shape, *rate)?),
        Dist::Beta { a, b } => Draw::Scalar(sample_beta(rng, *a, *b)?),
        Dist::Dirichlet(alpha) => Draw::Vector(sample_dirichlet(rng, alpha)?),
        Dist::Multinomial(p) => Draw::Index(sample_categorical(rng, p)?),
        Dist::MvNormal { mean, cov } => {
            Draw::Vector(sample_mvnormal(rng, mean, cov)?.iter().copied().collect())
        }
    })
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn sample_std_normal(rng: &mut RngStream) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_normal(rng: &mut RngStream, mean: f64, var: f64) -> Result<f64> {
    if !(var >= 0.0) || !var.is_finite() || !mean.is_finite() {
        return Err(Error::Parameter(format!("Normal({mean}, {var})")));
    }
    Ok(mean + var.sqrt() * sample_std_normal(rng))
}

pub fn sample_gamma(rng: &mut RngStream, shape: f64, rate: f64) -> Result<f64> {
    positive("gamma shape", shape)?;
    positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(g.sample(rng))
}

pub fn sample_inv_gamma(rng: &mut RngStream, shape: f64, rate: f64) -> Result<f64> {
    positive("inverse-gamma shape", shape)?;
    positive("inverse-gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(1.0 / g.sample(rng))
}

pub fn sample_beta(rng: &mut RngStream, a: f64, b: f64) -> Result<f64> {
    let p = sample_dirichlet(rng, &[a, b])?;
    Ok(p[0])
}

/// Log of a unit-rate Gamma(shape) draw. Small shapes use
/// Gamma(a) = Gamma(a+1)·U^{1/a} in log space so the draw never underflows.
fn log_std_gamma(rng: &mut RngStream, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("validated shape");
        let x: f64 = g.sample(rng);
        x.ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("validated shape");
        let x: f64 = g.sample(rng);
        x.ln() + rng.uniform().ln() / shape
    }
}

pub fn sample_dirichlet(rng: &mut RngStream, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::Parameter("Dirichlet needs at least one concentration".into()));
    }
    for &a in alpha {
        positive("Dirichlet concentration", a)?;
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| log_std_gamma(rng, a)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Ok(p)
}

/// One categorical draw with probabilities proportional to `weights`.
pub fn sample_categorical(rng: &mut RngStream, weights: &[f64]) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !(total > 0.0) {
        return Err(Error::Parameter(format!(
            "categorical weights must be non-negative with positive sum: {weights:?}"
        )));
    }
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if u < acc {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

/// Categorical draw from unnormalized log-weights.
pub fn sample_categorical_log(rng: &mut RngStream, log_weights: &[f64]) -> Result<usize> {
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Parameter("no finite log-weight".into()));
    }
    let w: Vec<f64> = log_weights.iter().map(|&l| (l - m).exp()).collect();
    sample_categorical(rng, &w)
}

/// Counts from `trials` independent categorical draws.
pub fn sample_multinomial(rng: &mut RngStream, trials: usize, p: &[f64]) -> Result<Vec<usize>> {
    let mut counts = vec![0; p.len()];
    for _ in 0..trials {
        counts[sample_categorical(rng, p)?] += 1;
    }
    Ok(counts)
}

pub fn sample_mvnormal(
    rng: &mut RngStream,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::Parameter("covariance shape does not match mean".into()));
    }
    let chol = linalg::cholesky_jittered(cov)?;
    let z = DVector::from_fn(mean.len(), |_, _| sample_std_normal(rng));
    Ok(mean + chol.l() * z)
}
