//! Mixture-transition-distribution models for high-order Markov chains.
//!
//! An order-ℓ MTD chain has
//! `P(X_t = j | X_{t−1}, …, X_{t−ℓ}) = Σ_g λ_g Q[X_{t−g}, j]`
//! with lag weights `λ` on the simplex and one shared transition matrix `Q`.
//! Sampling augments each transition with the lag `w_t` that generated it.
//!
//! States are 0-based internally; [`ChainData::codes`] and the CSV layer use
//! the 1-based codes `1..=m`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{
    log_sum_exp, sample_categorical, sample_dirichlet, PosteriorChain, RngStream, RunLength,
};

/// 1,000 burn-in sweeps followed by 5,000 kept sweeps.
pub const DEFAULT_RUN: RunLength = RunLength {
    burn_in: 1000,
    iters: 5000,
    thin: 1,
};

/// A state sequence whose first `l_max` values are conditioned upon.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainData {
    states: Vec<usize>,
    m: usize,
    l_max: usize,
}

impl ChainData {
    /// Builds from 1-based codes.
    pub fn from_codes(codes: &[usize], m: usize, l_max: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Precondition(format!("need at least 2 states, got {m}")));
        }
        if let Some((i, c)) = codes.iter().enumerate().find(|(_, &c)| c == 0 || c > m) {
            return Err(Error::Precondition(format!("state {c} at position {i} outside 1..={m}")));
        }
        Self::new(codes.iter().map(|c| c - 1).collect(), m, l_max)
    }

    /// Builds from 0-based states.
    pub fn new(states: Vec<usize>, m: usize, l_max: usize) -> Result<Self> {
        if l_max == 0 {
            return Err(Error::Precondition("l_max must be at least 1".into()));
        }
        if states.len() <= l_max {
            return Err(Error::Precondition(format!(
                "chain of length {} leaves no transitions after conditioning on {l_max}",
                states.len()
            )));
        }
        if let Some(s) = states.iter().find(|&&s| s >= m) {
            return Err(Error::Precondition(format!("state index {s} outside 0..{m}")));
        }
        Ok(ChainData { states, m, l_max })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn codes(&self) -> Vec<usize> {
        self.states.iter().map(|s| s + 1).collect()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Number of modelled transitions `N`.
    pub fn n_transitions(&self) -> usize {
        self.states.len() - self.l_max
    }

    /// Same states, conditioning on a different prefix length.
    pub fn with_l_max(&self, l_max: usize) -> Result<Self> {
        Self::new(self.states.clone(), self.m, l_max)
    }
}

/// Codes consecutive changes as 1 (decrease), 2 (no change), 3 (increase)
/// after rounding both values to `decimals` places.
pub fn encode_changes(rates: &[f64], decimals: u32) -> Result<Vec<usize>> {
    if rates.len() < 2 {
        return Err(Error::Precondition("need at least two rates".into()));
    }
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(Error::Precondition("non-finite rate".into()));
    }
    let scale = 10f64.powi(decimals as i32);
    let round = |v: f64| (v * scale).round();
    Ok(rates
        .windows(2)
        .map(|w| match round(w[1]).total_cmp(&round(w[0])) {
            std::cmp::Ordering::Less => 1,
            std::cmp::Ordering::Equal => 2,
            std::cmp::Ordering::Greater => 3,
        })
        .collect())
}

/// Lag weights `lambda[g − 1]` for lag `g`, and the shared `m × m` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MtdParams {
    pub lambda: Vec<f64>,
    pub q: DMatrix<f64>,
}

impl MtdParams {
    pub fn new(lambda: Vec<f64>, q: DMatrix<f64>) -> Result<Self> {
        let p = MtdParams { lambda, q };
        p.validate()?;
        Ok(p)
    }

    pub fn order(&self) -> usize {
        self.lambda.len()
    }

    pub fn m(&self) -> usize {
        self.q.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let on_simplex = |xs: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = xs.collect();
            v.iter().all(|&x| x >= 0.0 && x.is_finite()) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        if self.lambda.is_empty() || !on_simplex(&mut self.lambda.iter().copied()) {
            return Err(Error::Parameter("λ must be a non-empty probability vector".into()));
        }
        if self.q.nrows() != self.q.ncols() || self.q.nrows() < 2 {
            return Err(Error::Parameter("Q must be square with at least 2 states".into()));
        }
        for i in 0..self.q.nrows() {
            if !on_simplex(&mut self.q.row(i).iter().copied()) {
                return Err(Error::Parameter(format!("row {} of Q is not a probability vector", i + 1)));
            }
        }
        Ok(())
    }
}

/// Transition probability of the MTD chain from history `x[..t]` to `x[t]`.
fn mtd_prob(params: &MtdParams, x: &[usize], t: usize) -> f64 {
    params
        .lambda
        .iter()
        .enumerate()
        .map(|(g, l)| l * params.q[(x[t - g - 1], x[t])])
        .sum()
}

/// `Σ_t log Σ_g λ_g Q[x_{t−g}, x_t]` over the transitions after `l_max`.
pub fn mtd_loglik(params: &MtdParams, data: &ChainData) -> Result<f64> {
    if params.order() > data.l_max() {
        return Err(Error::Precondition(format!(
            "order {} exceeds the conditioned prefix {}",
            params.order(),
            data.l_max()
        )));
    }
    if params.m() != data.m() {
        return Err(Error::Precondition("state count mismatch".into()));
    }
    let x = data.states();
    Ok((data.l_max()..x.len()).map(|t| mtd_prob(params, x, t).ln()).sum())
}

/// Dirichlet hyperparameters for `λ` (length ℓ) and each row of `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct MtdPrior {
    pub b: Vec<f64>,
    pub a: DMatrix<f64>,
}

impl MtdPrior {
    /// `Dir(½, …, ½)` for `λ` and every row of `Q`.
    pub fn jeffreys(order: usize, m: usize) -> Self {
        MtdPrior {
            b: vec![0.5; order],
            a: DMatrix::from_element(m, m, 0.5),
        }
    }

    fn validate(&self, order: usize, m: usize) -> Result<()> {
        if self.b.len() != order || self.a.nrows() != m || self.a.ncols() != m {
            return Err(Error::Parameter("prior dimensions do not match the model".into()));
        }
        if self.b.iter().chain(self.a.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::Parameter("Dirichlet hyperparameters must be positive".into()));
        }
        Ok(())
    }
}

/// Lag index `w[t − l_max]` (0-based, lag `g = w + 1`) for each transition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentLags {
    pub w: Vec<usize>,
}

/// One augmented Gibbs sweep: lags, then `λ`, then the rows of `Q`.
pub fn mtd_gibbs_sweep(
    params: &mut MtdParams,
    latents: &mut LatentLags,
    data: &ChainData,
    prior: &MtdPrior,
    rng: &mut RngStream,
) -> Result<()> {
    let order = params.order();
    let m = params.m();
    let x = data.states();
    let start = data.l_max();
    latents.w.resize(x.len() - start, 0);
    let mut weights = vec![0.0; order];
    let mut lag_counts = vec![0.0; order];
    let mut trans = DMatrix::<f64>::zeros(m, m);
    for t in start..x.len() {
        for (g, w) in weights.iter_mut().enumerate() {
            *w = params.lambda[g] * params.q[(x[t - g - 1], x[t])];
        }
        let g = sample_categorical(rng, &weights)?;
        latents.w[t - start] = g;
        lag_counts[g] += 1.0;
        trans[(x[t - g - 1], x[t])] += 1.0;
    }
    let post_b: Vec<f64> = prior.b.iter().zip(&lag_counts).map(|(b, c)| b + c).collect();
    params.lambda = sample_dirichlet(rng, &post_b)?;
    for i in 0..m {
        let row: Vec<f64> = (0..m).map(|j| prior.a[(i, j)] + trans[(i, j)]).collect();
        let draw = sample_dirichlet(rng, &row)?;
        for (j, v) in draw.into_iter().enumerate() {
            params.q[(i, j)] = v;
        }
    }
    Ok(())
}

/// Posterior draws of one MTD order with their log-likelihoods.
#[derive(Clone, Debug, PartialEq)]
pub struct MtdFit {
    pub order: usize,
    pub draws: Vec<MtdParams>,
    pub loglik: Vec<f64>,
}

fn initial_params(data: &ChainData, order: usize, prior: &MtdPrior) -> MtdParams {
    let m = data.m();
    let x = data.states();
    let mut q = prior.a.clone();
    for t in data.l_max()..x.len() {
        q[(x[t - 1], x[t])] += 1.0;
    }
    for i in 0..m {
        let s: f64 = q.row(i).sum();
        for j in 0..m {
            q[(i, j)] /= s;
        }
    }
    MtdParams {
        lambda: vec![1.0 / order as f64; order],
        q,
    }
}

pub fn mtd_fit(
    data: &ChainData,
    order: usize,
    prior: &MtdPrior,
    length: RunLength,
    rng: &mut RngStream,
) -> Result<MtdFit> {
    length.validate()?;
    if order == 0 || order > data.l_max() {
        return Err(Error::Precondition(format!("order {order} outside 1..={}", data.l_max())));
    }
    prior.validate(order, data.m())?;
    let mut params = initial_params(data, order, prior);
    let mut latents = LatentLags { w: Vec::new() };
    for _ in 0..length.burn_in {
        mtd_gibbs_sweep(&mut params, &mut latents, data, prior, rng)?;
    }
    let mut draws = Vec::with_capacity(length.kept());
    let mut loglik = Vec::with_capacity(length.kept());
    for it in 1..=length.iters {
        mtd_gibbs_sweep(&mut params, &mut latents, data, prior, rng)?;
        if it % length.thin == 0 {
            loglik.push(mtd_loglik(&params, data)?);
            draws.push(params.clone());
        }
    }
    Ok(MtdFit {
        order,
        draws,
        loglik,
    })
}

impl MtdFit {
    /// Draws as a chain with columns `lambda[g]` and `q[i,j]` (1-based).
    pub fn to_chain(&self, burn_in: usize, thin: usize, seed: u64) -> Result<PosteriorChain> {
        let m = self.draws.first().map_or(0, |d| d.m());
        let mut names: Vec<String> = (1..=self.order).map(|g| format!("lambda[{g}]")).collect();
        for i in 1..=m {
            for j in 1..=m {
                names.push(format!("q[{i},{j}]"));
            }
        }
        names.push("loglik".into());
        let mut chain = PosteriorChain::new(names, burn_in, thin, seed);
        for (d, ll) in self.draws.iter().zip(&self.loglik) {
            let mut row = d.lambda.clone();
            for i in 0..m {
                row.extend(d.q.row(i).iter());
            }
            row.push(*ll);
            chain.push(&row)?;
        }
        Ok(chain)
    }

    pub fn mean_lambda(&self) -> Vec<f64> {
        let k = self.draws.len() as f64;
        (0..self.order)
            .map(|g| self.draws.iter().map(|d| d.lambda[g]).sum::<f64>() / k)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEntry {
    pub order: usize,
    pub mean_loglik: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub orders: Vec<OrderEntry>,
    pub modal_order: usize,
}

/// Posterior probability of each order `1..=L` from likelihoods averaged
/// over `B` posterior draws per order, under `prior` (uniform when `None`).
///
/// Order `ℓ` is fit with its own stream `(seed, ℓ)`; all fits condition on
/// the same `l_max` prefix.
pub fn order_probs(
    data: &ChainData,
    max_order: usize,
    length: RunLength,
    prior: Option<&[f64]>,
    seed: u64,
) -> Result<(OrderReport, Vec<MtdFit>)> {
    if length.kept() < 10 {
        return Err(Error::Precondition(format!(
            "{} kept draws per order; at least 10 needed",
            length.kept()
        )));
    }
    if max_order == 0 || max_order > data.l_max() {
        return Err(Error::Precondition(format!(
            "maximum order {max_order} must be in 1..={}",
            data.l_max()
        )));
    }
    let log_prior: Vec<f64> = match prior {
        None => vec![0.0; max_order],
        Some(p) if p.len() == max_order && p.iter().all(|&v| v > 0.0) => p.iter().map(|v| v.ln()).collect(),
        Some(_) => return Err(Error::Parameter("order prior must be positive with one entry per order".into())),
    };
    let mut fits = Vec::with_capacity(max_order);
    let mut log_post = Vec::with_capacity(max_order);
    for order in 1..=max_order {
        let mut rng = RngStream::with_stream(seed, order as u64);
        let fit = mtd_fit(data, order, &MtdPrior::jeffreys(order, data.m()), length, &mut rng)?;
        let b = fit.loglik.len() as f64;
        log_post.push(log_sum_exp(&fit.loglik) - b.ln() + log_prior[order - 1]);
        fits.push(fit);
    }
    let norm = log_sum_exp(&log_post);
    let orders: Vec<OrderEntry> = fits
        .iter()
        .zip(&log_post)
        .map(|(f, lp)| OrderEntry {
            order: f.order,
            mean_loglik: f.loglik.iter().sum::<f64>() / f.loglik.len() as f64,
            probability: (lp - norm).exp(),
        })
        .collect();
    let modal_order = orders
        .iter()
        .fold(&orders[0], |best, e| if e.probability > best.probability { e } else { best })
        .order;
    Ok((OrderReport { orders, modal_order }, fits))
}

/// Transition array of an order-ℓ chain on `m` states: row `r` encodes the
/// history `(i_ℓ, …, i_1)` as base-`m` digits with `i_ℓ` most significant,
/// so `i_g = (r / m^{g−1}) mod m`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionArray {
    pub p: DMatrix<f64>,
    pub m: usize,
    pub order: usize,
}

impl TransitionArray {
    pub fn n_tuples(&self) -> usize {
        self.p.nrows()
    }

    /// Row index of a history given most-recent-first states `i_1, …, i_ℓ`.
    pub fn row_of(&self, recent_first: &[usize]) -> usize {
        recent_first.iter().rev().fold(0, |r, &s| r * self.m + s)
    }

    /// Row reached after emitting `next` from row `r`.
    pub fn shift(&self, r: usize, next: usize) -> usize {
        (r % self.m.pow(self.order as u32 - 1)) * self.m + next
    }

    /// 1-based tuple label `(i_ℓ, …, i_1)` of row `r`.
    pub fn label(&self, r: usize) -> String {
        let digits: Vec<String> = (0..self.order)
            .rev()
            .map(|g| ((r / self.m.pow(g as u32)) % self.m + 1).to_string())
            .collect();
        digits.join("")
    }
}

/// `P[(i_ℓ…i_1), i_0] = Σ_g λ_g Q[i_g, i_0]`.
pub fn reconstruct_p(params: &MtdParams) -> TransitionArray {
    let m = params.m();
    let order = params.order();
    let rows = m.pow(order as u32);
    let p = DMatrix::from_fn(rows, m, |r, i0| {
        (0..order)
            .map(|g| params.lambda[g] * params.q[((r / m.pow(g as u32)) % m, i0)])
            .sum()
    });
    TransitionArray { p, m, order }
}

/// Stationary law of the lifted chain on history tuples, by power iteration.
pub fn stationary(t: &TransitionArray) -> Result<Vec<f64>> {
    let n = t.n_tuples();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..100_000 {
        next.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..n {
            for i0 in 0..t.m {
                next[t.shift(r, i0)] += pi[r] * t.p[(r, i0)];
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let delta: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if delta < 1e-14 {
            return Ok(pi);
        }
    }
    Err(Error::numerical(0, "stationary distribution did not converge in 100000 iterations"))
}

/// Transition counts of order `order` over the transitions after `l_max`.
pub fn transition_counts(data: &ChainData, order: usize) -> Result<DMatrix<f64>> {
    if order == 0 || order > data.l_max() {
        return Err(Error::Precondition(format!("order {order} outside 1..={}", data.l_max())));
    }
    let m = data.m();
    let x = data.states();
    let shape = TransitionArray {
        p: DMatrix::zeros(0, 0),
        m,
        order,
    };
    let mut counts = DMatrix::zeros(m.pow(order as u32), m);
    for t in data.l_max()..x.len() {
        let hist: Vec<usize> = (1..=order).map(|g| x[t - g]).collect();
        counts[(shape.row_of(&hist), x[t])] += 1.0;
    }
    Ok(counts)
}

/// Row-wise conjugate posterior of the fully parameterized chain.
#[derive(Clone, Debug, PartialEq)]
pub struct FullMarkovFit {
    pub order: usize,
    pub m: usize,
    /// Dirichlet parameters `a + counts`, one row per history.
    pub posterior: DMatrix<f64>,
    pub draws: Vec<TransitionArray>,
}

impl FullMarkovFit {
    pub fn posterior_mean(&self) -> DMatrix<f64> {
        let mut p = self.posterior.clone();
        for mut row in p.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        p
    }
}

pub fn fit_full_markov(
    data: &ChainData,
    order: usize,
    prior: f64,
    n_draws: usize,
    rng: &mut RngStream,
) -> Result<FullMarkovFit> {
    if !(prior > 0.0) {
        return Err(Error::Parameter("Dirichlet hyperparameter must be positive".into()));
    }
    let posterior = transition_counts(data, order)?.add_scalar(prior);
    let m = data.m();
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let mut p = DMatrix::zeros(posterior.nrows(), m);
        for r in 0..posterior.nrows() {
            let alpha: Vec<f64> = posterior.row(r).iter().copied().collect();
            for (j, v) in sample_dirichlet(rng, &alpha)?.into_iter().enumerate() {
                p[(r, j)] = v;
            }
        }
        draws.push(TransitionArray { p, m, order });
    }
    Ok(FullMarkovFit {
        order,
        m,
        posterior,
        draws,
    })
}

/// One replicate per posterior draw of every modelled transition, coded
/// `1..=m`: row `d` holds `ŷ_t ~ P_d(· | observed history)`.
pub fn predictive_draws(
    draws: &[TransitionArray],
    data: &ChainData,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    let x = data.states();
    let mut out = Vec::with_capacity(draws.len());
    for t_arr in draws {
        if t_arr.order > data.l_max() {
            return Err(Error::Precondition("order exceeds the conditioned prefix".into()));
        }
        let mut row = Vec::with_capacity(data.n_transitions());
        for t in data.l_max()..x.len() {
            let hist: Vec<usize> = (1..=t_arr.order).map(|g| x[t - g]).collect();
            let r = t_arr.row_of(&hist);
            let probs: Vec<f64> = t_arr.p.row(r).iter().copied().collect();
            row.push((sample_categorical(rng, &probs)? + 1) as f64);
        }
        out.push(row);
    }
    Ok(out)
}

/// Posterior predictive loss: penalty `P`, fit `G`, and `D_r = P + r/(r+1) G`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PplReport {
    pub penalty: f64,
    pub fit: f64,
    pub d_r: f64,
    pub d_inf: f64,
}

/// `D_r` from penalty and fit terms; `r = ∞` gives `P + G`.
pub fn ppl_from_terms(penalty: f64, fit: f64, r: f64) -> f64 {
    if r.is_infinite() {
        penalty + fit
    } else {
        penalty + r / (r + 1.0) * fit
    }
}

/// `pred[d][t]` are replicate draws; variances use divisor `B`.
pub fn ppl(pred: &[Vec<f64>], observed: &[f64], r: f64) -> Result<PplReport> {
    if pred.is_empty() {
        return Err(Error::Precondition("no predictive draws".into()));
    }
    if !(r >= 0.0) {
        return Err(Error::Parameter(format!("r must be nonnegative, got {r}")));
    }
    if pred.iter().any(|row| row.len() != observed.len()) {
        return Err(Error::Precondition("predictive draws do not match the observations".into()));
    }
    let b = pred.len() as f64;
    let mut penalty = 0.0;
    let mut fit = 0.0;
    for (t, y) in observed.iter().enumerate() {
        let mean = pred.iter().map(|row| row[t]).sum::<f64>() / b;
        penalty += pred.iter().map(|row| (row[t] - mean).powi(2)).sum::<f64>() / b;
        fit += (y - mean).powi(2);
    }
    Ok(PplReport {
        penalty,
        fit,
        d_r: ppl_from_terms(penalty, fit, r),
        d_inf: penalty + fit,
    })
}

/// Probability of each state `h = 1..=H` steps ahead of the last `l_max`
/// observations, averaged over draws. Each draw's tuple-state law is
/// propagated exactly.
pub fn forecast(draws: &[TransitionArray], data: &ChainData, horizon: usize) -> Result<Vec<Vec<f64>>> {
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if draws.is_empty() {
        return Err(Error::Precondition("no posterior draws".into()));
    }
    let m = data.m();
    let x = data.states();
    let mut table = vec![vec![0.0; m]; horizon];
    for t_arr in draws {
        if t_arr.order > data.l_max() || t_arr.m != m {
            return Err(Error::Precondition("transition array does not match the data".into()));
        }
        let hist: Vec<usize> = (1..=t_arr.order).map(|g| x[x.len() - g]).collect();
        let mut dist = vec![0.0; t_arr.n_tuples()];
        dist[t_arr.row_of(&hist)] = 1.0;
        for row in table.iter_mut() {
            let mut next = vec![0.0; dist.len()];
            let mut step = vec![0.0; m];
            for (r, &pr) in dist.iter().enumerate() {
                if pr == 0.0 {
                    continue;
                }
                for (i0, s) in step.iter_mut().enumerate() {
                    let v = pr * t_arr.p[(r, i0)];
                    *s += v;
                    next[t_arr.shift(r, i0)] += v;
                }
            }
            for (acc, s) in row.iter_mut().zip(step) {
                *acc += s;
            }
            dist = next;
        }
    }
    let k = draws.len() as f64;
    for row in &mut table {
        row.iter_mut().for_each(|v| *v /= k);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(table)
}

/// Free parameters of an order-ℓ MTD model on `m` states.
pub fn mtd_param_count(m: usize, order: usize) -> usize {
    m * (m - 1) + (order - 1)
}

/// Free parameters of the fully parameterized order-ℓ chain.
pub fn full_param_count(m: usize, order: usize) -> usize {
    m.pow(order as u32) * (m - 1)
}

/// Draws `n` further states after the 0-based `prefix` from an MTD chain.
pub fn simulate_mtd(params: &MtdParams, prefix: &[usize], n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    params.validate()?;
    if prefix.len() < params.order() {
        return Err(Error::Precondition("prefix shorter than the order".into()));
    }
    let mut x = prefix.to_vec();
    for _ in 0..n {
        let t = x.len();
        let g = sample_categorical(rng, &params.lambda)?;
        let from = x[t - g - 1];
        let row: Vec<f64> = params.q.row(from).iter().copied().collect();
        x.push(sample_categorical(rng, &row)?);
    }
    Ok(x)
}
