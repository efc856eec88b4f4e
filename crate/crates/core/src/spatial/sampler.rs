use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};

use super::corr::{covariance, distances, Smoothness};
use super::gls::PsiFactor;
use super::trend::{build_trend, TrendMatrix, TREND_COLUMNS};
use super::{log_post_from_profile, Psi, PsiGrid, SpatialData, SpatialPrior};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, psd_cholesky};
use crate::stats::{sample_std_normal, PosteriorChain, RngStream, RunLength};

/// 500 burn-in iterations followed by 1,000 kept iterations.
pub const DEFAULT_RUN: RunLength = RunLength {
    burn_in: 500,
    iters: 1000,
    thin: 1,
};

const CACHE_BUDGET_BYTES: usize = 512 << 20;

/// Kriging weights and conditional factor of the missing block given the
/// observed block, for one `V`.
#[derive(Clone, Debug)]
pub struct ImputeFactor {
    weights: DMatrix<f64>,
    cond_chol: DMatrix<f64>,
}

impl ImputeFactor {
    pub fn new(v_oo: &DMatrix<f64>, v_mo: &DMatrix<f64>, v_mm: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky_jittered(v_oo)?;
        // W = V_mo V_oo⁻¹, via V_oo Wᵀ = V_om
        let weights = chol.solve(&v_mo.transpose()).transpose();
        let mut cond = v_mm - &weights * v_mo.transpose();
        cond = (&cond + cond.transpose()) * 0.5;
        let cond_chol = psd_cholesky(&cond, 1e-8).map_err(|e| {
            Error::numerical(0, format!("conditional covariance of missing values: {e}"))
        })?;
        Ok(ImputeFactor { weights, cond_chol })
    }

    /// Conditional mean and covariance (without σ²) given residual `X_o − D_oβ`.
    pub fn moments(&self, mean_m: &DVector<f64>, resid_o: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (mean_m + &self.weights * resid_o, &self.cond_chol * self.cond_chol.transpose())
    }

    pub fn draw(
        &self,
        mean_m: &DVector<f64>,
        resid_o: &DVector<f64>,
        sigma2: f64,
        rng: &mut RngStream,
    ) -> DVector<f64> {
        let z = DVector::from_fn(mean_m.len(), |_, _| sample_std_normal(rng));
        mean_m + &self.weights * resid_o + &self.cond_chol * z * sigma2.sqrt()
    }
}

/// Dense conditional moments of `X_m | X_o`:
/// `D_mβ + V_mo V_oo⁻¹(X_o − D_oβ)` and `σ²(V_mm − V_mo V_oo⁻¹ V_om)`.
#[allow(clippy::too_many_arguments)]
pub fn conditional_moments(
    v_oo: &DMatrix<f64>,
    v_mo: &DMatrix<f64>,
    v_mm: &DMatrix<f64>,
    d_o: &DMatrix<f64>,
    d_m: &DMatrix<f64>,
    x_o: &DVector<f64>,
    beta: &DVector<f64>,
    sigma2: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let f = ImputeFactor::new(v_oo, v_mo, v_mm)?;
    let (m, c) = f.moments(&(d_m * beta), &(x_o - d_o * beta));
    Ok((m, c * sigma2))
}

/// One draw of `X_m | X_o, β, σ², ψ`; empty when nothing is missing.
#[allow(clippy::too_many_arguments)]
pub fn impute_missing(
    v_oo: &DMatrix<f64>,
    v_mo: &DMatrix<f64>,
    v_mm: &DMatrix<f64>,
    d_o: &DMatrix<f64>,
    d_m: &DMatrix<f64>,
    x_o: &DVector<f64>,
    beta: &DVector<f64>,
    sigma2: f64,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    if v_mm.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let f = ImputeFactor::new(v_oo, v_mo, v_mm)?;
    Ok(f.draw(&(d_m * beta), &(x_o - d_o * beta), sigma2, rng))
}

struct CellFactors {
    full: PsiFactor,
    impute: Option<ImputeFactor>,
}

/// Everything the sampler needs that does not change between iterations.
pub struct SpatialModel {
    data: SpatialData,
    trend: TrendMatrix,
    dist: DMatrix<f64>,
    grid: PsiGrid,
    nu: Smoothness,
    prior: SpatialPrior,
    cache: RefCell<HashMap<usize, Rc<CellFactors>>>,
    cache_cap: usize,
}

/// Current sampler state; `x` holds observed values and the latest
/// imputations in record order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialState {
    pub cell: usize,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub x: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhOutcome {
    pub accepted: bool,
    pub log_ratio: f64,
}

impl SpatialModel {
    pub fn new(data: SpatialData, grid: PsiGrid, nu: Smoothness, prior: SpatialPrior) -> Result<Self> {
        let trend = build_trend(&data)?;
        Self::with_trend(data, trend, grid, nu, prior)
    }

    /// Uses a caller-supplied design instead of the default trend columns.
    pub fn with_trend(
        data: SpatialData,
        trend: TrendMatrix,
        grid: PsiGrid,
        nu: Smoothness,
        prior: SpatialPrior,
    ) -> Result<Self> {
        let k = trend.ncols();
        if data.observed().len() < k + 2 {
            return Err(Error::Precondition(format!(
                "{} observed responses; at least {} needed for {k} trend columns",
                data.observed().len(),
                k + 2
            )));
        }
        if trend.nrows() != data.len() {
            return Err(Error::Precondition("trend rows do not match records".into()));
        }
        for g in grid.gamma2() {
            if !(*g > prior.gamma2_lower && *g < prior.gamma2_upper) {
                return Err(Error::Parameter(format!("γ² grid value {g} outside the prior support")));
            }
        }
        let coords = data.coords();
        let dist = distances(&coords, &coords);
        let n = data.len();
        let cache_cap = (CACHE_BUDGET_BYTES / (16 * n * n).max(1)).max(1);
        Ok(SpatialModel {
            data,
            trend,
            dist,
            grid,
            nu,
            prior,
            cache: RefCell::new(HashMap::new()),
            cache_cap,
        })
    }

    pub fn data(&self) -> &SpatialData {
        &self.data
    }

    pub fn trend(&self) -> &TrendMatrix {
        &self.trend
    }

    pub fn grid(&self) -> &PsiGrid {
        &self.grid
    }

    pub fn nu(&self) -> Smoothness {
        self.nu
    }

    pub fn prior(&self) -> &SpatialPrior {
        &self.prior
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.dist
    }

    fn factors(&self, cell: usize) -> Result<Rc<CellFactors>> {
        if let Some(f) = self.cache.borrow().get(&cell) {
            return Ok(Rc::clone(f));
        }
        let psi = self.grid.cell(cell);
        let v = covariance(&self.dist, psi, self.nu);
        let full = PsiFactor::new(&v, &self.trend.d)?;
        let obs = self.data.observed();
        let mis = self.data.missing();
        let impute = if mis.is_empty() {
            None
        } else {
            let v_oo = v.select_rows(obs).select_columns(obs);
            let v_mo = v.select_rows(mis).select_columns(obs);
            let v_mm = v.select_rows(mis).select_columns(mis);
            Some(ImputeFactor::new(&v_oo, &v_mo, &v_mm)?)
        };
        let f = Rc::new(CellFactors { full, impute });
        let mut cache = self.cache.borrow_mut();
        if cache.len() < self.cache_cap {
            cache.insert(cell, Rc::clone(&f));
        }
        Ok(f)
    }

    /// Factorization of `V(ψ)` over all records for grid cell `cell`.
    pub fn psi_factor(&self, cell: usize) -> Result<PsiFactor> {
        Ok(self.factors(cell)?.full.clone())
    }

    pub(crate) fn with_psi_factor<T>(&self, cell: usize, f: impl FnOnce(&PsiFactor) -> Result<T>) -> Result<T> {
        let fac = self.factors(cell)?;
        f(&fac.full)
    }

    /// `log p(ψ | X)` at every grid cell for the full response vector `x`.
    pub fn grid_log_post(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        (0..self.grid.len())
            .map(|k| {
                let profile = self.factors(k)?.full.profile(x)?;
                Ok(log_post_from_profile(self.grid.cell(k), &profile, x.len(), &self.prior))
            })
            .collect()
    }

    /// Observed responses, with missing entries filled by the OLS trend fit.
    fn initial_x(&self) -> Result<DVector<f64>> {
        let obs = self.data.observed();
        let d_o = self.trend.select_rows(obs);
        let x_o = DVector::from_iterator(
            obs.len(),
            obs.iter().map(|&i| self.data.records()[i].rainfall_mm.unwrap()),
        );
        let beta = d_o
            .clone()
            .svd(true, true)
            .solve(&x_o, 1e-12)
            .map_err(|e| Error::Decomposition(e.to_string()))?;
        let fitted = &self.trend.d * beta;
        Ok(DVector::from_fn(self.data.len(), |i, _| {
            self.data.records()[i].rainfall_mm.unwrap_or(fitted[i])
        }))
    }

    /// Starts at the grid mode for the initially filled responses, with
    /// `(σ², β)` drawn from their conditional there.
    pub fn initial_state(&self, rng: &mut RngStream) -> Result<SpatialState> {
        let x = self.initial_x()?;
        let lp = self.grid_log_post(&x)?;
        let cell = (0..lp.len()).fold(0, |best, k| if lp[k] > lp[best] { k } else { best });
        let profile = self.factors(cell)?.full.profile(&x)?;
        let (sigma2, beta) = profile.draw_sigma2_beta(x.len(), &self.prior, rng)?;
        Ok(SpatialState {
            cell,
            beta,
            sigma2,
            x,
        })
    }

    /// Draws the missing responses given the rest of the state.
    pub fn impute(&self, state: &mut SpatialState, rng: &mut RngStream) -> Result<()> {
        let fac = self.factors(state.cell)?;
        let Some(imp) = &fac.impute else {
            return Ok(());
        };
        let obs = self.data.observed();
        let mis = self.data.missing();
        let mean_trend = &self.trend.d * &state.beta;
        let resid_o = DVector::from_iterator(obs.len(), obs.iter().map(|&i| state.x[i] - mean_trend[i]));
        let mean_m = DVector::from_iterator(mis.len(), mis.iter().map(|&i| mean_trend[i]));
        let draw = imp.draw(&mean_m, &resid_o, state.sigma2, rng);
        for (k, &i) in mis.iter().enumerate() {
            if !draw[k].is_finite() {
                return Err(Error::numerical(0, "non-finite imputed value"));
            }
            state.x[i] = draw[k];
        }
        Ok(())
    }

    pub fn chain_names(&self) -> Vec<String> {
        let mut names: Vec<String> = TREND_COLUMNS
            .iter()
            .take(self.trend.ncols())
            .map(|c| format!("beta[{c}]"))
            .collect();
        for j in TREND_COLUMNS.len()..self.trend.ncols() {
            names.push(format!("beta[{j}]"));
        }
        names.extend(["sigma2", "phi", "gamma2"].map(String::from));
        names.extend(self.data.missing().iter().map(|i| format!("x_mis[{i}]")));
        names
    }
}

/// Independence Metropolis step on `ψ` with a uniform grid proposal; on
/// acceptance `σ²` and `β` are redrawn from their conditional at the new `ψ`.
pub fn block_mh_step(model: &SpatialModel, state: &mut SpatialState, rng: &mut RngStream) -> Result<MhOutcome> {
    let grid = model.grid();
    let proposal = rng.below(grid.len());
    let n = state.x.len();
    let prior = model.prior();
    let cur = model.factors(state.cell)?.full.profile(&state.x)?;
    let lp_cur = log_post_from_profile(grid.cell(state.cell), &cur, n, prior);
    let (prop_profile, lp_prop) = if proposal == state.cell {
        (cur, lp_cur)
    } else {
        let p = model.factors(proposal)?.full.profile(&state.x)?;
        let lp = log_post_from_profile(grid.cell(proposal), &p, n, prior);
        (p, lp)
    };
    let log_ratio = if proposal == state.cell { 0.0 } else { lp_prop - lp_cur };
    let accepted = log_ratio >= 0.0 || rng.uniform().ln() < log_ratio;
    if accepted {
        let (sigma2, beta) = prop_profile.draw_sigma2_beta(n, prior, rng)?;
        if !sigma2.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::numerical(0, "non-finite (σ², β) draw"));
        }
        state.cell = proposal;
        state.sigma2 = sigma2;
        state.beta = beta;
    }
    Ok(MhOutcome { accepted, log_ratio })
}

/// Retained draws with columns `beta[..]`, `sigma2`, `phi`, `gamma2`,
/// then `x_mis[record]` for each missing record.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialPosterior {
    pub chain: PosteriorChain,
    pub acceptance_rate: f64,
}

impl SpatialPosterior {
    pub fn k(&self) -> usize {
        self.chain.names().iter().take_while(|n| n.starts_with("beta[")).count()
    }

    /// Full response vector of draw `d`: observed values plus its imputations.
    pub fn full_x(&self, model: &SpatialModel, d: usize) -> DVector<f64> {
        let row = self.chain.row(d);
        let k = self.k();
        let mut x = DVector::from_fn(model.data().len(), |i, _| {
            model.data().records()[i].rainfall_mm.unwrap_or(f64::NAN)
        });
        for (m, &i) in model.data().missing().iter().enumerate() {
            x[i] = row[k + 3 + m];
        }
        x
    }

    pub fn draw_params(&self, d: usize) -> (DVector<f64>, f64, Psi) {
        let row = self.chain.row(d);
        let k = self.k();
        (
            DVector::from_column_slice(&row[..k]),
            row[k],
            Psi {
                phi: row[k + 1],
                gamma2: row[k + 2],
            },
        )
    }
}

fn state_row(model: &SpatialModel, state: &SpatialState) -> Vec<f64> {
    let psi = model.grid().cell(state.cell);
    let mut row: Vec<f64> = state.beta.iter().copied().collect();
    row.extend([state.sigma2, psi.phi, psi.gamma2]);
    row.extend(model.data().missing().iter().map(|&i| state.x[i]));
    row
}

pub fn spatial_run(model: &SpatialModel, length: RunLength, seed: u64) -> Result<SpatialPosterior> {
    length.validate()?;
    let mut rng = RngStream::new(seed);
    let mut state = model.initial_state(&mut rng)?;
    model.impute(&mut state, &mut rng)?;
    let mut chain = PosteriorChain::new(model.chain_names(), length.burn_in, length.thin, seed);
    let mut accepted = 0usize;
    let total = length.burn_in + length.iters;
    for it in 1..=total {
        if block_mh_step(model, &mut state, &mut rng)?.accepted {
            accepted += 1;
        }
        model.impute(&mut state, &mut rng)?;
        if it > length.burn_in && (it - length.burn_in) % length.thin == 0 {
            chain.push(&state_row(model, &state))?;
        }
    }
    Ok(SpatialPosterior {
        chain,
        acceptance_rate: accepted as f64 / total as f64,
    })
}
