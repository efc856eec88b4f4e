use crate::error::{Error, Result};

/// Beta posterior parameters; `improper` is set when either parameter is
/// zero, which happens under the Haldane prior with all-success or
/// all-failure data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaPosterior {
    pub a: f64,
    pub b: f64,
    pub improper: bool,
}

pub fn beta_bernoulli_posterior(a: f64, b: f64, xs: &[u8]) -> Result<BetaPosterior> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Parameter(format!("Beta({a}, {b}) prior")));
    }
    if let Some(x) = xs.iter().find(|&&x| x > 1) {
        return Err(Error::Precondition(format!("binary data expected, found {x}")));
    }
    let s = xs.iter().map(|&x| x as f64).sum::<f64>();
    let n = xs.len() as f64;
    let (a, b) = (a + s, b + n - s);
    Ok(BetaPosterior {
        a,
        b,
        improper: a == 0.0 || b == 0.0,
    })
}

/// Posterior `(mean, variance)` of a Normal mean with known variance
/// `sigma2` under a `N(mu, tau2)` prior.
pub fn normal_normal_posterior(mu: f64, tau2: f64, sigma2: f64, xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::Precondition("at least one observation required".into()));
    }
    if !(tau2 > 0.0 && sigma2 > 0.0) {
        return Err(Error::Parameter(format!("tau2 = {tau2}, sigma2 = {sigma2}")));
    }
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let shrink = sigma2 / (n * tau2 + sigma2);
    Ok((shrink * mu + (1.0 - shrink) * xbar, (1.0 - shrink) * sigma2 / n))
}
