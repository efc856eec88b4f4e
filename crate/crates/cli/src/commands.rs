use std::fs;

use bayeskit::dpmm::{self, cgs, vi, DpHyper};
use bayeskit::hier::{self, HierData, HierHyper, HierRecord, LevelTwoPrior};
use bayeskit::io::{load_dataset, Dataset, Schema, Series};
use bayeskit::mtd::{self, ChainData};
use bayeskit::simulate::{self, DpmmSim, HierSim, MtdSim, SpatialSim};
use bayeskit::spatial::{
    self, PredictMode, PredictionSite, PsiGrid, Smoothness, SpatialData, SpatialModel, SpatialPrior,
};
use bayeskit::stats::{summarize_column, PosteriorSummary, RngStream};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, SimModel, TauPrior};
use crate::output::{num, OutDir};
use crate::CliError;

const DEFAULT_THRESHOLD_MM: f64 = 1200.0;
const DEFAULT_ORDER_MAX: usize = 5;
const DEFAULT_HORIZON: usize = 6;
const DEFAULT_INIT_CLUSTERS: usize = 3;
const VI_MAX_ITERS: usize = 1000;
const VI_ASSIGNMENT_DRAWS: usize = 1000;
const RASTER_SIDE: usize = 20;

fn input(config: &RunConfig, schema: Schema) -> Result<Dataset, CliError> {
    let path = config.input.as_ref().ok_or_else(|| CliError::config("--input is required"))?;
    Ok(load_dataset(path, schema)?)
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn hier(config: &RunConfig, out: &mut OutDir) -> Result<bool, CliError> {
    let Dataset::Hier(records) = input(config, Schema::Hier)? else { unreachable!() };
    let data = HierData::new(&records)?;
    let hyper = HierHyper {
        level_two: match config.tau_prior {
            TauPrior::Flat => LevelTwoPrior::FLAT,
            TauPrior::UniformScale => LevelTwoPrior::UNIFORM_SCALE,
        },
        ..HierHyper::default()
    };
    let length = config.run_length(hier::DEFAULT_RUN);
    out.stage("ingest");
    out.seed("sample", config.seed, 0);
    let chain = hier::hier_run(&data, &hyper, length, config.seed)?;
    out.stage("sample");
    out.seed("p_value", config.seed, 1);
    let mut rng = RngStream::with_stream(config.seed, 1);
    let p_values = hier::bayesian_p_value(&chain, &data, &mut rng)?;
    out.stage("p_value");
    out.chain("chain.csv", &chain)?;
    out.json(
        "summary.json",
        &json!({
            "model": "hier",
            "n_devices": data.n_devices(),
            "n_groups": data.n_groups(),
            "run": length,
            "hyper": hyper,
            "parameters": chain.summarize()?,
            "outliers": hier::detect_outliers(&chain, 0.5),
            "lambda": hier::lambda_summaries(&chain),
            "p_values": p_values,
        }),
    )?;
    Ok(true)
}

fn raster(data: &SpatialData) -> Vec<PredictionSite> {
    let recs = data.records();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut year = f64::NEG_INFINITY;
    for r in recs {
        x0 = x0.min(r.x_km);
        x1 = x1.max(r.x_km);
        y0 = y0.min(r.y_km);
        y1 = y1.max(r.y_km);
        year = year.max(r.year);
    }
    let xs = dpmm::linspace(x0, x1, RASTER_SIDE);
    let ys = dpmm::linspace(y0, y1, RASTER_SIDE);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| PredictionSite { x_km: x, y_km: y, year }))
        .collect()
}

pub fn spatial(config: &RunConfig, out: &mut OutDir) -> Result<bool, CliError> {
    let Dataset::Spatial { records, missing } = input(config, Schema::Spatial)? else { unreachable!() };
    let sites = match &config.sites {
        Some(p) => match load_dataset(p, Schema::PredictionGrid)? {
            Dataset::PredictionGrid(s) => Some(s),
            _ => unreachable!(),
        },
        None => None,
    };
    let data = SpatialData::new(records)?;
    let prior = SpatialPrior::default();
    let grid = match (&config.phi_grid, &config.gamma2_grid) {
        (None, None) => PsiGrid::default_for(&data)?,
        (phi, gamma2) => {
            let d = PsiGrid::default_for(&data)?;
            PsiGrid::new(
                phi.clone().unwrap_or_else(|| d.phi().to_vec()),
                gamma2.clone().unwrap_or_else(|| d.gamma2().to_vec()),
                &prior,
            )?
        }
    };
    let sites = sites.unwrap_or_else(|| raster(&data));
    let variogram = spatial::variogram_ls(&data, &Smoothness::ALL).ok();
    let model = SpatialModel::new(data, grid.clone(), Smoothness::FiveHalves, prior)?;
    let length = config.run_length(spatial::DEFAULT_RUN);
    out.stage("ingest");
    out.seed("sample", config.seed, 0);
    let posterior = spatial::spatial_run(&model, length, config.seed)?;
    out.stage("sample");
    out.seed("predict", config.seed, 1);
    let mut rng = RngStream::with_stream(config.seed, 1);
    let d_hat = spatial::prediction_trend(&model, &sites);
    let pred = spatial::predict(&model, &posterior, &sites, &d_hat, PredictMode::Marginal, &mut rng)?;
    out.stage("predict");
    let threshold = config.threshold_mm.unwrap_or(DEFAULT_THRESHOLD_MM);
    let (mean, var, exceed) = (pred.mean(), pred.variance(), pred.exceedance(threshold));
    out.chain("chain.csv", &posterior.chain)?;
    out.csv(
        "predictions.csv",
        &header(&["x_km", "y_km", "year", "mean", "variance", "p_exceed"]),
        sites.iter().enumerate().map(|(i, s)| {
            vec![num(s.x_km), num(s.y_km), num(s.year), num(mean[i]), num(var[i]), num(exceed[i])]
        }),
    )?;
    out.json(
        "summary.json",
        &json!({
            "model": "spatial",
            "n_records": model.data().len(),
            "n_missing": missing,
            "run": length,
            "nu": Smoothness::FiveHalves,
            "prior": prior,
            "phi_grid": grid.phi(),
            "gamma2_grid": grid.gamma2(),
            "acceptance_rate": posterior.acceptance_rate,
            "parameters": posterior.chain.summarize()?,
            "threshold_mm": threshold,
            "variogram": variogram,
        }),
    )?;
    Ok(true)
}

#[derive(Serialize)]
struct PplRow {
    model: &'static str,
    order: usize,
    parameters: usize,
    penalty: f64,
    fit: f64,
    d_1: f64,
    d_inf: f64,
}

pub fn mtd(config: &RunConfig, out: &mut OutDir) -> Result<bool, CliError> {
    let Dataset::Series(series) = input(config, Schema::Series)? else { unreachable!() };
    let (codes, encoded) = match series {
        Series::Rates(r) => (mtd::encode_changes(&r, 9)?, true),
        Series::Codes(c) => (c, false),
    };
    let m = if encoded { 3 } else { codes.iter().copied().max().unwrap_or(0) };
    let order_max = config.order_max.unwrap_or(DEFAULT_ORDER_MAX);
    let data = ChainData::from_codes(&codes, m, order_max)?;
    let length = config.run_length(mtd::DEFAULT_RUN);
    out.stage("ingest");
    for order in 1..=order_max {
        out.seed(&format!("order_{order}"), config.seed, order as u64);
    }
    let (report, fits) = mtd::order_probs(&data, order_max, length, None, config.seed)?;
    out.stage("order_selection");
    let modal = &fits[report.modal_order - 1];
    let arrays: Vec<_> = modal.draws.iter().map(mtd::reconstruct_p).collect();
    let n_tuples = arrays[0].n_tuples();
    let mut mean_p = arrays[0].clone();
    mean_p.p.fill(0.0);
    for a in &arrays {
        mean_p.p += &a.p;
    }
    mean_p.p /= arrays.len() as f64;
    let pi = mtd::stationary(&mean_p)?;
    let horizon = config.horizon.unwrap_or(DEFAULT_HORIZON);
    let fc = mtd::forecast(&arrays, &data, horizon)?;
    out.stage("analysis");

    out.seed("ppl_mtd", config.seed, order_max as u64 + 1);
    out.seed("ppl_full", config.seed, order_max as u64 + 2);
    let observed: Vec<f64> = data.states()[data.l_max()..].iter().map(|&s| (s + 1) as f64).collect();
    let mut rng = RngStream::with_stream(config.seed, order_max as u64 + 1);
    let pred_mtd = mtd::predictive_draws(&arrays, &data, &mut rng)?;
    let mut rng = RngStream::with_stream(config.seed, order_max as u64 + 2);
    let full = mtd::fit_full_markov(&data, report.modal_order, 0.5, arrays.len(), &mut rng)?;
    let pred_full = mtd::predictive_draws(&full.draws, &data, &mut rng)?;
    let mut ppl = Vec::new();
    for (name, pred, k) in [
        ("mtd", &pred_mtd, mtd::mtd_param_count(m, report.modal_order)),
        ("full", &pred_full, mtd::full_param_count(m, report.modal_order)),
    ] {
        let r = mtd::ppl(pred, &observed, 1.0)?;
        ppl.push(PplRow {
            model: name,
            order: report.modal_order,
            parameters: k,
            penalty: r.penalty,
            fit: r.fit,
            d_1: r.d_r,
            d_inf: r.d_inf,
        });
    }
    out.stage("ppl");

    out.chain("chain.csv", &modal.to_chain(length.burn_in, length.thin, config.seed)?)?;
    out.csv(
        "stationary.csv",
        &header(&["history", "probability"]),
        (0..n_tuples).map(|r| vec![mean_p.label(r), num(pi[r])]),
    )?;
    let mut fc_header = header(&["step"]);
    fc_header.extend((1..=m).map(|s| format!("p_state{s}")));
    out.csv(
        "forecast.csv",
        &fc_header,
        fc.iter().enumerate().map(|(h, row)| {
            std::iter::once((h + 1).to_string()).chain(row.iter().map(|&v| num(v))).collect::<Vec<_>>()
        }),
    )?;
    out.json(
        "summary.json",
        &json!({
            "model": "mtd",
            "states": m,
            "encoded_from_rates": encoded,
            "n_transitions": data.n_transitions(),
            "run": length,
            "order_report": report,
            "mean_lambda": modal.mean_lambda(),
            "ppl": ppl,
        }),
    )?;
    Ok(true)
}

fn observations(config: &RunConfig) -> Result<(Vec<f64>, f64, f64), CliError> {
    let Dataset::Observations(y) = input(config, Schema::Observations)? else { unreachable!() };
    Ok(dpmm::standardize(&y)?)
}

fn dp_hyper(config: &RunConfig) -> Result<DpHyper, CliError> {
    let mut h = DpHyper::default();
    if let Some(t) = config.truncation {
        h.truncation = t;
    }
    h.validate()?;
    Ok(h)
}

fn density_csv(out: &mut OutDir, grid: &[f64], dens: &[f64], mean: f64, sd: f64) -> Result<(), CliError> {
    out.csv(
        "density.csv",
        &header(&["z", "y", "density_z", "density_y"]),
        grid.iter()
            .zip(dens)
            .map(|(&z, &d)| vec![num(z), num(mean + sd * z), num(d), num(d / sd)]),
    )
}

#[derive(Serialize)]
struct Component {
    weight: f64,
    mean: f64,
    variance: f64,
    expected_count: f64,
}

pub fn dpmm_vi(config: &RunConfig, out: &mut OutDir) -> Result<bool, CliError> {
    let (z, mean, sd) = observations(config)?;
    let hyper = dp_hyper(config)?;
    let k = config.init_clusters.unwrap_or(DEFAULT_INIT_CLUSTERS);
    out.stage("ingest");
    let (params, trace) = vi::vi_fit(&z, &hyper, k, config.iters.unwrap_or(VI_MAX_ITERS))?;
    out.stage("fit");
    let grid = config.density_grid();
    let dens = vi::predictive_density(&params, &grid);
    out.seed("assignments", config.seed, 0);
    let mut rng = RngStream::new(config.seed);
    let inc = cgs::incidence(&vi::sample_assignments(&params, VI_ASSIGNMENT_DRAWS, &mut rng)?)?;
    out.stage("predict");
    let weights = vi::expected_weights(&params.gamma);
    let counts = params.counts();
    let final_elbo = *trace.elbo.last().expect("trace holds the initial bound");
    let components: Vec<Component> = (0..params.truncation())
        .map(|l| Component {
            weight: weights[l],
            mean: params.eta[l].0,
            variance: params.eta[l].1,
            expected_count: counts[l],
        })
        .collect();
    let resp: Vec<Vec<f64>> = params.varpi.row_iter().map(|r| r.iter().copied().collect()).collect();
    out.json(
        "fit.json",
        &json!({
            "model": "dpmm-vi",
            "hyper": hyper,
            "k_init": k,
            "n": z.len(),
            "standardization": { "mean": mean, "sd": sd },
            "iterations": trace.iterations,
            "converged": trace.converged,
            "elbo": final_elbo,
            "elbo_data_scale": final_elbo - z.len() as f64 * sd.ln(),
            "xi": [params.xi.0, params.xi.1],
            "expected_weights": weights,
            "components": components,
            "responsibilities": resp,
        }),
    )?;
    out.csv(
        "trace.csv",
        &header(&["iteration", "elbo", "delta"]),
        trace.elbo.iter().enumerate().map(|(i, &e)| {
            let d = if i == 0 { String::new() } else { num(trace.delta[i - 1]) };
            vec![i.to_string(), num(e), d]
        }),
    )?;
    density_csv(out, &grid, &dens, mean, sd)?;
    out.matrix("incidence.csv", "obs_", z.len(), |i, j| inc[(i, j)])?;
    Ok(trace.converged)
}

pub fn dpmm_cgs(config: &RunConfig, out: &mut OutDir) -> Result<bool, CliError> {
    let (z, mean, sd) = observations(config)?;
    let hyper = dp_hyper(config)?;
    let length = config.run_length(cgs::DEFAULT_RUN);
    out.stage("ingest");
    out.seed("sample", config.seed, 0);
    let draws = cgs::cgs_run(&z, &hyper, length, config.seed)?;
    out.stage("sample");
    let grid = config.density_grid();
    let dens = cgs::cgs_predictive(&draws, &z, &hyper, &grid)?;
    let inc = cgs::incidence(&draws.assignments)?;
    out.stage("predict");
    let counts = draws.cluster_counts();
    let kmax = counts.iter().copied().max().unwrap_or(0);
    let mut freq = vec![0usize; kmax + 1];
    for &c in &counts {
        freq[c] += 1;
    }
    let modal = (1..=kmax).max_by_key(|&c| (freq[c], std::cmp::Reverse(c))).unwrap_or(0);
    let phi: PosteriorSummary = summarize_column("phi", &draws.phi);
    let mut asg_header = header(&["phi"]);
    asg_header.extend((1..=z.len()).map(|i| format!("obs_{i}")));
    out.csv(
        "assignments.csv",
        &asg_header,
        draws.assignments.iter().zip(&draws.phi).map(|(a, &p)| {
            std::iter::once(num(p)).chain(a.iter().map(|l| (l + 1).to_string())).collect::<Vec<_>>()
        }),
    )?;
    out.matrix("incidence.csv", "obs_", z.len(), |i, j| inc[(i, j)])?;
    density_csv(out, &grid, &dens, mean, sd)?;
    out.json(
        "summary.json",
        &json!({
            "model": "dpmm-cgs",
            "hyper": hyper,
            "run": length,
            "n": z.len(),
            "standardization": { "mean": mean, "sd": sd },
            "phi": phi,
            "occupied_clusters": {
                "modal": modal,
                "frequency": (1..=kmax).map(|c| json!({"clusters": c, "draws": freq[c]})).collect::<Vec<_>>(),
            },
        }),
    )?;
    Ok(true)
}

fn sim_settings<T: DeserializeOwned + Default>(config: &RunConfig) -> Result<T, CliError> {
    match &config.truth {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| CliError::config(format!("--truth {}: {e}", p.display()))),
    }
}

fn hier_csv(out: &mut OutDir, records: &[HierRecord]) -> Result<(), CliError> {
    out.csv(
        "data.csv",
        &header(Schema::Hier.columns()),
        records.iter().map(|r| {
            vec![r.device_id.clone(), r.group.clone(), num(r.y_mean), r.n_records.to_string()]
        }),
    )
}

pub fn simulate(config: &RunConfig, out: &mut OutDir) -> Result<bool, CliError> {
    let model = config.model.ok_or_else(|| CliError::config("simulate needs --model"))?;
    out.seed("simulate", config.seed, 0);
    let mut rng = RngStream::new(config.seed);
    match model {
        SimModel::Hier => {
            let sim: HierSim = sim_settings(config)?;
            let (records, truth) = simulate::simulate_hier(&sim, &mut rng)?;
            out.stage("simulate");
            hier_csv(out, &records)?;
            out.json("truth.json", &json!({ "settings": sim, "truth": truth }))?;
        }
        SimModel::Spatial => {
            let sim: SpatialSim = sim_settings(config)?;
            let (records, truth) = simulate::simulate_spatial(&sim, &mut rng)?;
            out.stage("simulate");
            out.csv(
                "data.csv",
                &header(Schema::Spatial.columns()),
                records.iter().map(|r| {
                    vec![
                        r.site_id.clone(),
                        num(r.x_km),
                        num(r.y_km),
                        num(r.altitude_km),
                        num(r.year),
                        r.rainfall_mm.map(num).unwrap_or_default(),
                    ]
                }),
            )?;
            out.json("truth.json", &json!({ "settings": sim, "truth": truth }))?;
        }
        SimModel::Mtd => {
            let sim: MtdSim = sim_settings(config)?;
            let codes = simulate::simulate_mtd_codes(&sim, &mut rng)?;
            out.stage("simulate");
            out.csv("data.csv", &header(&["state"]), codes.iter().map(|c| vec![c.to_string()]))?;
            out.json("truth.json", &json!({ "settings": sim }))?;
        }
        SimModel::Dpmm => {
            let sim: DpmmSim = sim_settings(config)?;
            let (y, truth) = simulate::simulate_dpmm(&sim, &mut rng)?;
            out.stage("simulate");
            out.csv("data.csv", &header(&["y"]), y.iter().map(|&v| vec![num(v)]))?;
            out.json("truth.json", &json!({ "settings": sim, "truth": truth }))?;
        }
    }
    Ok(true)
}
