//! Two-level hierarchical model for grouped device means with Student-t
//! errors.
//!
//! Level 1: `y_ij | θ_j, σ²_j, λ_ij ~ N(θ_j, σ²_j / (n_ij λ_ij))` with
//! `λ_ij ~ Gamma(ν/2, ν/2)`, which integrates to t_ν errors.
//! Level 2: `θ_j ~ N(μ, τ²)`, `σ²_j ~ IG(α+1, ασ²)`, `σ² ~ Gamma(a, b)`.
//!
//! The `(μ, τ²)` prior is Normal-inverse-Gamma, `μ | τ² ~ N(m₀, τ²/κ₀)`,
//! `τ² ~ IG(a₀, b₀)`. Its default `κ₀ = 0, a₀ = −½, b₀ = 0` is the flat prior
//! `p(μ, τ²) ∝ 1/τ²`, for which the blocked update reduces to
//! `τ² | θ ~ IG((J−1)/2, ½Σ(θ_j − θ̄)²)` and `μ | τ², θ ~ N(θ̄, τ²/J)`.
//! That prior leaves the posterior improper near `τ² = 0`; when the group
//! means sit close together a chain can be absorbed there.
//! [`LevelTwoPrior::UNIFORM_SCALE`], flat in `τ`, is proper for `J ≥ 3`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, PosteriorChain, RngStream, RunLength};

/// One device record: the mean of `n_records` measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierRecord {
    pub device_id: String,
    pub group: String,
    pub y_mean: f64,
    pub n_records: u64,
}

#[derive(Clone, Debug)]
pub struct HierData {
    pub device_ids: Vec<String>,
    pub group_labels: Vec<String>,
    /// Group index (0-based) of each device.
    pub group: Vec<usize>,
    pub y: Vec<f64>,
    pub n: Vec<f64>,
    /// Device indices per group.
    pub members: Vec<Vec<usize>>,
}

impl HierData {
    /// Groups are ordered numerically when every label is an integer and
    /// lexicographically otherwise.
    pub fn new(records: &[HierRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Precondition("no device records".into()));
        }
        let numeric = records.iter().all(|r| r.group.trim().parse::<i64>().is_ok());
        let mut labels: Vec<String> = records.iter().map(|r| r.group.clone()).collect();
        if numeric {
            labels.sort_by_key(|l| l.trim().parse::<i64>().unwrap());
        } else {
            labels.sort();
        }
        labels.dedup();
        let index: BTreeMap<&str, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut members = vec![Vec::new(); labels.len()];
        let mut group = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.n_records == 0 {
                return Err(Error::Precondition(format!(
                    "device `{}` has zero records",
                    r.device_id
                )));
            }
            if !r.y_mean.is_finite() {
                return Err(Error::Precondition(format!(
                    "device `{}` has a non-finite mean",
                    r.device_id
                )));
            }
            let g = index[r.group.as_str()];
            members[g].push(i);
            group.push(g);
        }
        Ok(HierData {
            device_ids: records.iter().map(|r| r.device_id.clone()).collect(),
            group_labels: labels,
            group,
            y: records.iter().map(|r| r.y_mean).collect(),
            n: records.iter().map(|r| r.n_records as f64).collect(),
            members,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn n_devices(&self) -> usize {
        self.y.len()
    }

    pub fn records(&self) -> Vec<HierRecord> {
        (0..self.n_devices())
            .map(|i| HierRecord {
                device_id: self.device_ids[i].clone(),
                group: self.group_labels[self.group[i]].clone(),
                y_mean: self.y[i],
                n_records: self.n[i] as u64,
            })
            .collect()
    }
}

/// Which shape the σ²_j and σ² updates use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleUpdate {
    /// Full conditionals of the stated model `σ²_j ~ IG(α+1, ασ²)`:
    /// σ²_j shape `α + 1 + N_j/2`, σ² shape `a + J(α+1)`.
    #[default]
    Corrected,
    /// The printed updates: σ²_j shape `α + N_j/2`, σ² shape `a`.
    PaperLiteral,
}

/// Normal-inverse-Gamma prior on `(μ, τ²)`; see the module docs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTwoPrior {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub rate: f64,
}

impl LevelTwoPrior {
    pub const FLAT: LevelTwoPrior = LevelTwoPrior {
        mean: 0.0,
        kappa: 0.0,
        shape: -0.5,
        rate: 0.0,
    };

    /// `p(μ, τ) ∝ 1`, i.e. `p(μ, τ²) ∝ 1/τ`.
    pub const UNIFORM_SCALE: LevelTwoPrior = LevelTwoPrior {
        mean: 0.0,
        kappa: 0.0,
        shape: -1.0,
        rate: 0.0,
    };
}

impl Default for LevelTwoPrior {
    fn default() -> Self {
        Self::FLAT
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierHyper {
    /// Shape linkage of the group scales to σ².
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    /// Degrees of freedom of the level-1 t errors.
    pub dof: f64,
    pub scale_update: ScaleUpdate,
    pub level_two: LevelTwoPrior,
}

impl Default for HierHyper {
    fn default() -> Self {
        HierHyper {
            alpha: 2.0,
            a: 2.0,
            b: 2.0,
            dof: 5.0,
            scale_update: ScaleUpdate::Corrected,
            level_two: LevelTwoPrior::FLAT,
        }
    }
}

impl HierHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("a", self.a), ("b", self.b), ("dof", self.dof)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        let l2 = &self.level_two;
        if !(l2.kappa >= 0.0 && l2.rate >= 0.0 && l2.shape >= -1.0) {
            return Err(Error::Parameter(format!("invalid level-two prior {l2:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierState {
    pub theta: Vec<f64>,
    pub sigma2_group: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub tau2: f64,
    pub sigma2: f64,
}

const VAR_FLOOR: f64 = 1e-6;

fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    xs.sum::<f64>() / n
}

pub fn hier_init(data: &HierData, _hyper: &HierHyper) -> HierState {
    let group_means: Vec<f64> = data
        .members
        .iter()
        .map(|m| mean(m.iter().map(|&i| data.y[i])))
        .collect();
    // pooled within-group variance for singleton groups
    let (ss, dof) = data
        .members
        .iter()
        .zip(&group_means)
        .filter(|(m, _)| m.len() > 1)
        .fold((0.0, 0usize), |(ss, dof), (m, &gm)| {
            let s: f64 = m.iter().map(|&i| (data.y[i] - gm).powi(2)).sum();
            (ss + s, dof + m.len() - 1)
        });
    let pooled = if dof > 0 {
        ss / dof as f64
    } else if data.n_devices() > 1 {
        let gm = mean(data.y.iter().copied());
        data.y.iter().map(|y| (y - gm).powi(2)).sum::<f64>() / (data.n_devices() - 1) as f64
    } else {
        1.0
    };
    let sigma2_group = data
        .members
        .iter()
        .zip(&group_means)
        .map(|(m, &gm)| {
            let v = if m.len() > 1 {
                m.iter().map(|&i| (data.y[i] - gm).powi(2)).sum::<f64>() / (m.len() - 1) as f64
            } else {
                pooled
            };
            v.max(VAR_FLOOR)
        })
        .collect();
    let j = group_means.len();
    let mu = mean(group_means.iter().copied());
    let tau2 = if j > 1 {
        group_means.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / (j - 1) as f64
    } else {
        0.0
    }
    .max(VAR_FLOOR);
    HierState {
        theta: group_means,
        sigma2_group,
        lambda: vec![1.0; data.n_devices()],
        mu,
        tau2,
        sigma2: 1.0,
    }
}

fn at_step<T>(step: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Numerical { message, .. } => Error::numerical(step, message),
        other => Error::numerical(step, other.to_string()),
    })
}

fn finite(step: usize, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(step, format!("{name} is not finite")))
    }
}

/// Conditional mean and variance of θ_j given everything else.
pub fn theta_conditional(state: &HierState, data: &HierData, j: usize) -> (f64, f64) {
    let mut prec = 1.0 / state.tau2;
    let mut num = state.mu / state.tau2;
    for &i in &data.members[j] {
        let w = data.n[i] * state.lambda[i] / state.sigma2_group[j];
        prec += w;
        num += w * data.y[i];
    }
    (num / prec, 1.0 / prec)
}

/// Step 1: group means.
pub fn draw_theta(state: &mut HierState, data: &HierData, rng: &mut RngStream) -> Result<()> {
    for j in 0..data.n_groups() {
        let (m, v) = theta_conditional(state, data, j);
        let t = at_step(1, stats::sample_normal(rng, m, v))?;
        state.theta[j] = finite(1, "theta", t)?;
    }
    Ok(())
}

/// Step 2: group scales σ²_j.
pub fn draw_group_scales(
    state: &mut HierState,
    data: &HierData,
    hyper: &HierHyper,
    rng: &mut RngStream,
) -> Result<()> {
    let extra = match hyper.scale_update {
        ScaleUpdate::Corrected => 1.0,
        ScaleUpdate::PaperLiteral => 0.0,
    };
    for (j, members) in data.members.iter().enumerate() {
        let ss: f64 = members
            .iter()
            .map(|&i| data.n[i] * state.lambda[i] * (data.y[i] - state.theta[j]).powi(2))
            .sum();
        let shape = hyper.alpha + extra + members.len() as f64 / 2.0;
        let rate = hyper.alpha * state.sigma2 + 0.5 * ss;
        let s = at_step(2, stats::sample_inv_gamma(rng, shape, rate))?;
        state.sigma2_group[j] = finite(2, "sigma2_group", s)?;
    }
    Ok(())
}

/// Step 3: t-mixing scales λ_ij.
pub fn draw_mixing_scales(
    state: &mut HierState,
    data: &HierData,
    hyper: &HierHyper,
    rng: &mut RngStream,
) -> Result<()> {
    let shape = (hyper.dof + 1.0) / 2.0;
    for i in 0..data.n_devices() {
        let j = data.group[i];
        let r = data.y[i] - state.theta[j];
        let rate = hyper.dof / 2.0 + data.n[i] * r * r / (2.0 * state.sigma2_group[j]);
        let l = at_step(3, stats::sample_gamma(rng, shape, rate))?;
        state.lambda[i] = finite(3, "lambda", l)?;
    }
    Ok(())
}

/// Steps 5 then 4: τ² from its θ-conditional with μ integrated out, then
/// μ given τ² and θ.
pub fn draw_tau2_mu(state: &mut HierState, hyper: &HierHyper, rng: &mut RngStream) -> Result<()> {
    let j = state.theta.len() as f64;
    let tbar = state.theta.iter().sum::<f64>() / j;
    let ss: f64 = state.theta.iter().map(|t| (t - tbar).powi(2)).sum();
    let p = &hyper.level_two;
    let kappa_n = p.kappa + j;
    let shape = p.shape + j / 2.0;
    let rate = p.rate + 0.5 * ss + p.kappa * j * (tbar - p.mean).powi(2) / (2.0 * kappa_n);
    if !(rate > 0.0) {
        return Err(Error::Degenerate(
            "τ² collapsed to zero with all group means equal; use a proper level-two prior".into(),
        ));
    }
    if !(shape > 0.0) {
        return Err(Error::Precondition(format!("level-two prior needs more groups than {j}")));
    }
    let tau2 = at_step(5, stats::sample_inv_gamma(rng, shape, rate))?;
    state.tau2 = finite(5, "tau2", tau2)?;
    let mean = (p.kappa * p.mean + j * tbar) / kappa_n;
    let mu = at_step(4, stats::sample_normal(rng, mean, state.tau2 / kappa_n))?;
    state.mu = finite(4, "mu", mu)?;
    Ok(())
}

/// Step 6: common scale σ².
pub fn draw_sigma2(state: &mut HierState, hyper: &HierHyper, rng: &mut RngStream) -> Result<()> {
    let j = state.sigma2_group.len() as f64;
    let shape = match hyper.scale_update {
        ScaleUpdate::Corrected => hyper.a + j * (hyper.alpha + 1.0),
        ScaleUpdate::PaperLiteral => hyper.a,
    };
    let rate = hyper.b + hyper.alpha * state.sigma2_group.iter().map(|s| 1.0 / s).sum::<f64>();
    let s = at_step(6, stats::sample_gamma(rng, shape, rate))?;
    state.sigma2 = finite(6, "sigma2", s)?;
    Ok(())
}

/// One full Gibbs sweep: θ, σ²_j, λ, (τ², μ), σ².
pub fn hier_sweep(
    state: &mut HierState,
    data: &HierData,
    hyper: &HierHyper,
    rng: &mut RngStream,
) -> Result<()> {
    draw_theta(state, data, rng)?;
    draw_group_scales(state, data, hyper, rng)?;
    draw_mixing_scales(state, data, hyper, rng)?;
    draw_tau2_mu(state, hyper, rng)?;
    draw_sigma2(state, hyper, rng)
}

/// Default schedule: 10,000 burn-in sweeps, then 50,000 sweeps thinned by 10.
pub const DEFAULT_RUN: RunLength = RunLength {
    burn_in: 10_000,
    iters: 50_000,
    thin: 10,
};

/// Column names of a hierarchical chain, in storage order.
pub fn chain_names(data: &HierData) -> Vec<String> {
    let mut names = Vec::new();
    names.extend(data.group_labels.iter().map(|g| format!("theta[{g}]")));
    names.extend(data.group_labels.iter().map(|g| format!("sigma2_group[{g}]")));
    names.extend(data.device_ids.iter().map(|d| format!("lambda[{d}]")));
    names.extend(["mu", "tau2", "sigma2"].map(String::from));
    names
}

fn state_row(state: &HierState) -> Vec<f64> {
    let mut row = Vec::with_capacity(state.theta.len() * 2 + state.lambda.len() + 3);
    row.extend(&state.theta);
    row.extend(&state.sigma2_group);
    row.extend(&state.lambda);
    row.extend([state.mu, state.tau2, state.sigma2]);
    row
}

pub fn hier_run(
    data: &HierData,
    hyper: &HierHyper,
    length: RunLength,
    seed: u64,
) -> Result<PosteriorChain> {
    hyper.validate()?;
    length.validate()?;
    let mut rng = RngStream::new(seed);
    let mut state = hier_init(data, hyper);
    for _ in 0..length.burn_in {
        hier_sweep(&mut state, data, hyper, &mut rng)?;
    }
    let mut chain = PosteriorChain::new(chain_names(data), length.burn_in, length.thin, seed);
    for it in 1..=length.iters {
        hier_sweep(&mut state, data, hyper, &mut rng)?;
        if it % length.thin == 0 {
            chain.push(&state_row(&state))?;
        }
    }
    Ok(chain)
}

/// Posterior mean and median of one device's λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub device_id: String,
    pub mean: f64,
    pub median: f64,
}

/// λ posterior summaries of every device, sorted ascending by mean.
pub fn lambda_summaries(chain: &PosteriorChain) -> Vec<LambdaSummary> {
    let mut out: Vec<LambdaSummary> = chain
        .names()
        .iter()
        .enumerate()
        .filter_map(|(j, name)| {
            let id = name.strip_prefix("lambda[")?.strip_suffix(']')?;
            let col = chain.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            Some(LambdaSummary {
                device_id: id.to_owned(),
                mean,
                median: stats::quantile(&col, 0.5),
            })
        })
        .collect();
    out.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    out
}

/// Devices whose posterior mean λ is below `threshold`, smallest first.
pub fn detect_outliers(chain: &PosteriorChain, threshold: f64) -> Vec<LambdaSummary> {
    lambda_summaries(chain)
        .into_iter()
        .filter(|s| s.mean < threshold)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevicePValue {
    pub device_id: String,
    pub p_value: f64,
    /// Posterior mean of the replicated measurement.
    pub mean_replicate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    pub devices: Vec<DevicePValue>,
    pub average: f64,
}

struct Columns {
    theta: Vec<usize>,
    sigma2_group: Vec<usize>,
    lambda: Vec<usize>,
}

fn locate_columns(chain: &PosteriorChain, data: &HierData) -> Result<Columns> {
    let find = |name: String| {
        chain
            .index_of(&name)
            .ok_or_else(|| Error::Precondition(format!("chain has no column `{name}`")))
    };
    Ok(Columns {
        theta: data
            .group_labels
            .iter()
            .map(|g| find(format!("theta[{g}]")))
            .collect::<Result<_>>()?,
        sigma2_group: data
            .group_labels
            .iter()
            .map(|g| find(format!("sigma2_group[{g}]")))
            .collect::<Result<_>>()?,
        lambda: data
            .device_ids
            .iter()
            .map(|d| find(format!("lambda[{d}]")))
            .collect::<Result<_>>()?,
    })
}

/// Posterior predictive p-values with test quantity `T(z, θ) = |z − θ_j|`.
pub fn bayesian_p_value(
    chain: &PosteriorChain,
    data: &HierData,
    rng: &mut RngStream,
) -> Result<PValueReport> {
    bayesian_p_value_with(chain, data, |_, theta, var| {
        stats::sample_normal(rng, theta, var)
    })
}

/// Same as [`bayesian_p_value`] with a caller-supplied replicate generator
/// `replicate(device, θ_j, var)` returning `z` for one device and draw.
pub fn bayesian_p_value_with<F>(
    chain: &PosteriorChain,
    data: &HierData,
    mut replicate: F,
) -> Result<PValueReport>
where
    F: FnMut(usize, f64, f64) -> Result<f64>,
{
    if chain.is_empty() {
        return Err(Error::Precondition("empty chain".into()));
    }
    let cols = locate_columns(chain, data)?;
    let n_dev = data.n_devices();
    let mut exceed = vec![0usize; n_dev];
    let mut z_sum = vec![0.0; n_dev];
    for row in chain.rows() {
        for i in 0..n_dev {
            let j = data.group[i];
            let theta = row[cols.theta[j]];
            let var = row[cols.sigma2_group[j]] / (data.n[i] * row[cols.lambda[i]]);
            let z = replicate(i, theta, var)?;
            z_sum[i] += z;
            if (z - theta).abs() >= (data.y[i] - theta).abs() {
                exceed[i] += 1;
            }
        }
    }
    let k = chain.n_draws() as f64;
    let devices: Vec<DevicePValue> = (0..n_dev)
        .map(|i| DevicePValue {
            device_id: data.device_ids[i].clone(),
            p_value: exceed[i] as f64 / k,
            mean_replicate: z_sum[i] / k,
        })
        .collect();
    let average = devices.iter().map(|d| d.p_value).sum::<f64>() / n_dev as f64;
    Ok(PValueReport { devices, average })
}
