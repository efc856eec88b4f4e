use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Psi;
use crate::error::{Error, Result};

/// Half-integer Matérn orders with closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Smoothness {
    #[serde(rename = "0.5")]
    Half,
    #[serde(rename = "1.5")]
    ThreeHalves,
    #[serde(rename = "2.5")]
    #[default]
    FiveHalves,
}

impl Smoothness {
    pub const ALL: [Smoothness; 3] = [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves];

    pub fn value(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }
}

impl TryFrom<f64> for Smoothness {
    type Error = Error;

    fn try_from(nu: f64) -> Result<Self> {
        Smoothness::ALL
            .into_iter()
            .find(|s| s.value() == nu)
            .ok_or_else(|| Error::Parameter(format!("Matérn order {nu} is not one of 0.5, 1.5, 2.5")))
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Matérn correlation at distance `d` with range `φ`, scaled by `√(2ν) d/φ`.
pub fn matern_corr(d: f64, phi: f64, nu: Smoothness) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::Parameter(format!("range φ must be positive, got {phi}")));
    }
    if !(d >= 0.0) {
        return Err(Error::Parameter(format!("distance must be nonnegative, got {d}")));
    }
    Ok(matern_unchecked(d, phi, nu))
}

pub(crate) fn matern_unchecked(d: f64, phi: f64, nu: Smoothness) -> f64 {
    match nu {
        Smoothness::Half => (-d / phi).exp(),
        Smoothness::ThreeHalves => {
            let u = 3f64.sqrt() * d / phi;
            (1.0 + u) * (-u).exp()
        }
        Smoothness::FiveHalves => {
            let u = 5f64.sqrt() * d / phi;
            (1.0 + u + u * u / 3.0) * (-u).exp()
        }
    }
}

/// Euclidean distances between two point sets.
pub fn distances(a: &[(f64, f64)], b: &[(f64, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        (a[i].0 - b[j].0).hypot(a[i].1 - b[j].1)
    })
}

pub fn correlation(dist: &DMatrix<f64>, phi: f64, nu: Smoothness) -> DMatrix<f64> {
    dist.map(|d| matern_unchecked(d, phi, nu))
}

/// Correlation between new sites and data sites, without a nugget.
pub fn cross_correlation(dist: &DMatrix<f64>, phi: f64, nu: Smoothness) -> DMatrix<f64> {
    correlation(dist, phi, nu)
}

/// `V(ψ) = R(φ) + γ² I` from a square distance matrix.
pub fn covariance(dist: &DMatrix<f64>, psi: Psi, nu: Smoothness) -> DMatrix<f64> {
    let mut v = correlation(dist, psi.phi, nu);
    for i in 0..v.nrows() {
        v[(i, i)] = 1.0 + psi.gamma2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_at_zero_and_decays() {
        for nu in Smoothness::ALL {
            assert_eq!(matern_corr(0.0, 3.0, nu).unwrap(), 1.0);
            assert!(matern_corr(1e6, 50.0, nu).unwrap() < 1e-10);
        }
        assert!(matern_corr(1.0, 0.0, Smoothness::FiveHalves).is_err());
        assert!(Smoothness::try_from(1.0).is_err());
    }

    #[test]
    fn five_halves_closed_form() {
        let (d, phi) = (7.0, 11.0);
        let u = 5f64.sqrt() * d / phi;
        let want = (1.0 + 5f64.sqrt() * d / phi + 5.0 * d * d / (3.0 * phi * phi)) * (-u).exp();
        let got = matern_corr(d, phi, Smoothness::FiveHalves).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn covariance_diagonal_exact() {
        let pts = [(0.0, 0.0), (1.0, 2.0), (3.0, -1.0)];
        let v = covariance(&distances(&pts, &pts), Psi { phi: 2.0, gamma2: 2.75 }, Smoothness::FiveHalves);
        for i in 0..3 {
            assert_eq!(v[(i, i)], 3.75);
            for j in 0..3 {
                assert_eq!(v[(i, j)], v[(j, i)]);
            }
        }
    }

    proptest! {
        #[test]
        fn strictly_decreasing(a in 0.0f64..200.0, b in 0.0f64..200.0, phi in 1.0f64..100.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for nu in Smoothness::ALL {
                let (ra, rb) = (matern_corr(lo, phi, nu).unwrap(), matern_corr(hi, phi, nu).unwrap());
                prop_assert!(ra > rb || rb == 0.0);
            }
        }
    }
}
