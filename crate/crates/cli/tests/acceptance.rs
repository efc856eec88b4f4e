//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the checks share setup and
//! report in order; exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bayeskit::dpmm::{self, cgs, trapezoid, vi, DpHyper};
use bayeskit::hier::{self, HierData, HierHyper, HierState, LevelTwoPrior};
use bayeskit::io::{load_dataset, Dataset, Schema};
use bayeskit::mtd::{self, ChainData, MtdParams};
use bayeskit::simulate::{self, HierSim, MtdSim, SpatialSim};
use bayeskit::spatial::{
    self, PredictMode, PredictionSite, Psi, PsiGrid, Smoothness, SpatialData, SpatialModel,
    SpatialPrior, TrendMatrix,
};
use bayeskit::stats::{self, RngStream, RunLength};
use nalgebra::{DMatrix, DVector};

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn check(name: &str, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        ok,
        detail: detail.into(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Monte Carlo standard error of the mean, from the chain's ESS.
fn mc_se(xs: &[f64]) -> f64 {
    let ess = stats::ess(xs).unwrap_or(xs.len() as f64);
    sd(xs) / ess.sqrt()
}

fn galaxies() -> Vec<f64> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/galaxies.csv");
    match load_dataset(path, Schema::Observations).expect("galaxies data") {
        Dataset::Observations(y) => y,
        _ => unreachable!(),
    }
}

fn galaxies_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/galaxies.csv")
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Vec<Check> {
    let start = Instant::now();
    let mut rng = RngStream::new(101);
    let mut worst_beta = 0.0f64;
    let mut worst_normal = 0.0f64;
    let mut flags_ok = true;
    for case in 0..1000 {
        let (a, b) = if case % 10 == 0 {
            (0.0, 0.0)
        } else {
            (0.05 + 5.0 * rng.uniform(), 0.05 + 5.0 * rng.uniform())
        };
        let n = rng.below(60);
        let p = rng.uniform();
        let xs: Vec<u8> = (0..n).map(|_| u8::from(rng.uniform() < p)).collect();
        let s = xs.iter().filter(|&&x| x == 1).count() as f64;
        let post = bayeskit::stats::beta_bernoulli_posterior(a, b, &xs).unwrap();
        let (ea, eb) = (a + s, b + n as f64 - s);
        worst_beta = worst_beta.max((post.a - ea).abs()).max((post.b - eb).abs());
        flags_ok &= post.improper == (ea == 0.0 || eb == 0.0);

        let mu = 20.0 * (rng.uniform() - 0.5);
        let tau2 = 0.01 + 10.0 * rng.uniform();
        let sigma2 = 0.01 + 10.0 * rng.uniform();
        let m = 1 + rng.below(40);
        let ys: Vec<f64> = (0..m).map(|_| mu + 10.0 * (rng.uniform() - 0.5)).collect();
        let (pm, pv) = bayeskit::stats::normal_normal_posterior(mu, tau2, sigma2, &ys).unwrap();
        let prec = 1.0 / tau2 + m as f64 / sigma2;
        let ev = 1.0 / prec;
        let em = ev * (mu / tau2 + ys.iter().sum::<f64>() / sigma2);
        worst_normal = worst_normal
            .max((pm - em).abs() / em.abs().max(1.0))
            .max((pv - ev).abs() / ev.max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    vec![
        check(
            "beta-bernoulli matches closed form",
            worst_beta <= 1e-12 && flags_ok,
            format!("max error {worst_beta:e}, improper flags {flags_ok}"),
        ),
        check(
            "normal-normal matches closed form",
            worst_normal <= 1e-12,
            format!("max relative error {worst_normal:e}"),
        ),
        check("runtime < 1 s", secs < 1.0, format!("{secs:.3} s")),
    ]
}

// ---------------------------------------------------------------- 2

fn prior_draw(hyper: &HierHyper, data: &HierData, rng: &mut RngStream) -> HierState {
    let l2 = hyper.level_two;
    let tau2 = stats::sample_inv_gamma(rng, l2.shape, l2.rate).unwrap();
    let mu = stats::sample_normal(rng, l2.mean, tau2 / l2.kappa).unwrap();
    let sigma2 = stats::sample_gamma(rng, hyper.a, hyper.b).unwrap();
    let j = data.n_groups();
    let theta = (0..j).map(|_| stats::sample_normal(rng, mu, tau2).unwrap()).collect();
    let sigma2_group = (0..j)
        .map(|_| stats::sample_inv_gamma(rng, hyper.alpha + 1.0, hyper.alpha * sigma2).unwrap())
        .collect();
    let lambda = (0..data.n_devices())
        .map(|_| stats::sample_gamma(rng, hyper.dof / 2.0, hyper.dof / 2.0).unwrap())
        .collect();
    HierState {
        theta,
        sigma2_group,
        lambda,
        mu,
        tau2,
        sigma2,
    }
}

fn redraw_data(state: &HierState, data: &mut HierData, rng: &mut RngStream) {
    for i in 0..data.n_devices() {
        let j = data.group[i];
        let var = state.sigma2_group[j] / (data.n[i] * state.lambda[i]);
        data.y[i] = stats::sample_normal(rng, state.theta[j], var).unwrap();
    }
}

fn geweke() -> Vec<Check> {
    let hyper = HierHyper {
        level_two: LevelTwoPrior {
            mean: 0.0,
            kappa: 1.0,
            shape: 4.0,
            rate: 3.0,
        },
        ..HierHyper::default()
    };
    let layout = HierSim {
        devices_per_group: 3,
        ..HierSim::default()
    };
    let (records, _) = simulate::simulate_hier(&layout, &mut RngStream::new(7)).unwrap();
    let mut data = HierData::new(&records).unwrap();
    let mut rng = RngStream::new(2024);
    let mut state = prior_draw(&hyper, &data, &mut rng);
    redraw_data(&state, &mut data, &mut rng);
    let sweeps = 200_000;
    let mut draws = [Vec::with_capacity(sweeps), Vec::with_capacity(sweeps), Vec::with_capacity(sweeps)];
    for _ in 0..sweeps {
        hier::hier_sweep(&mut state, &data, &hyper, &mut rng).unwrap();
        redraw_data(&state, &mut data, &mut rng);
        draws[0].push(state.mu);
        draws[1].push(state.tau2);
        draws[2].push(state.sigma2);
    }
    let l2 = hyper.level_two;
    let truth = [l2.mean, l2.rate / (l2.shape - 1.0), hyper.a / hyper.b];
    ["mu", "tau2", "sigma2"]
        .iter()
        .zip(draws.iter().zip(truth))
        .map(|(name, (xs, t))| {
            let (m, se) = (mean(xs), mc_se(xs));
            let z = (m - t) / se;
            check(
                &format!("Geweke prior recovery {name}"),
                z.abs() <= 5.0,
                format!("mean {m:.4} vs {t}, {z:+.2} MC SE"),
            )
        })
        .collect()
}

fn hier_replicates() -> Vec<Check> {
    let hyper = HierHyper {
        level_two: LevelTwoPrior::UNIFORM_SCALE,
        ..HierHyper::default()
    };
    let length = RunLength::new(2_000, 20_000, 10);
    let reps = 20;
    let sim = HierSim::default();
    let mut covered = vec![0usize; sim.n_groups];
    let mut p_avgs = Vec::new();
    for rep in 0..reps {
        let mut rng = RngStream::with_stream(500 + rep, 0);
        let (records, truth) = simulate::simulate_hier(&sim, &mut rng).unwrap();
        let data = HierData::new(&records).unwrap();
        let chain = hier::hier_run(&data, &hyper, length, 900 + rep).unwrap();
        for (j, label) in data.group_labels.iter().enumerate() {
            let col = chain.column_by_name(&format!("theta[{label}]")).unwrap();
            let (lo, hi) = (stats::quantile(&col, 0.025), stats::quantile(&col, 0.975));
            if lo <= truth.theta[j] && truth.theta[j] <= hi {
                covered[j] += 1;
            }
        }
        let mut prng = RngStream::with_stream(900 + rep, 1);
        p_avgs.push(hier::bayesian_p_value(&chain, &data, &mut prng).unwrap().average);
    }
    let min_cov = *covered.iter().min().unwrap();
    let p_lo = p_avgs.iter().copied().fold(f64::INFINITY, f64::min);
    let p_hi = p_avgs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![
        check(
            "95% intervals cover θ_j in ≥ 16/20 runs",
            min_cov >= 16,
            format!("covered runs per group {covered:?}"),
        ),
        check(
            "average Bayesian p-value in [0.3, 0.7]",
            p_lo >= 0.3 && p_hi <= 0.7,
            format!("range over runs [{p_lo:.3}, {p_hi:.3}], mean {:.3}", mean(&p_avgs)),
        ),
    ];

    let mut hits = 0;
    for rep in 0..10u64 {
        let dev = (rep as usize * 17 + 3) % (sim.n_groups * sim.devices_per_group);
        let osim = HierSim {
            outlier: Some((dev, 6.0)),
            ..HierSim::default()
        };
        let mut rng = RngStream::with_stream(700 + rep, 0);
        let (records, _) = simulate::simulate_hier(&osim, &mut rng).unwrap();
        let data = HierData::new(&records).unwrap();
        let chain = hier::hier_run(&data, &hyper, length, 1300 + rep).unwrap();
        if hier::lambda_summaries(&chain)[0].device_id == records[dev].device_id {
            hits += 1;
        }
    }
    out.push(check(
        "6-sd outlier has the smallest mean λ in ≥ 9/10 runs",
        hits >= 9,
        format!("{hits}/10"),
    ));
    out
}

fn criterion_2() -> Vec<Check> {
    let start = Instant::now();
    let mut out = geweke();
    out.extend(hier_replicates());
    let secs = start.elapsed().as_secs_f64();
    out.push(check("runtime < 5 min", secs < 300.0, format!("{secs:.1} s")));
    out
}

// ---------------------------------------------------------------- 3

fn matern52(d: f64, phi: f64) -> f64 {
    let u = 5f64.sqrt() * d / phi;
    (1.0 + u + u * u / 3.0) * (-u).exp()
}

fn oracle_v(coords: &[(f64, f64)], psi: Psi) -> DMatrix<f64> {
    let n = coords.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = ((coords[i].0 - coords[j].0).powi(2) + (coords[i].1 - coords[j].1).powi(2)).sqrt();
        matern52(d, psi.phi) + if i == j { psi.gamma2 } else { 0.0 }
    })
}

/// `(β̂, log p(ψ | X))` by dense inversion.
fn oracle_gls(coords: &[(f64, f64)], d: &DMatrix<f64>, x: &DVector<f64>, psi: Psi, prior: &SpatialPrior) -> (DVector<f64>, f64) {
    let v = oracle_v(coords, psi);
    let vinv = v.clone().try_inverse().unwrap();
    let dvd = d.transpose() * &vinv * d;
    let beta = dvd.clone().try_inverse().unwrap() * d.transpose() * &vinv * x;
    let r = x - d * &beta;
    let s2 = (r.transpose() * &vinv * &r)[(0, 0)];
    let (n, k) = (x.len() as f64, d.ncols() as f64);
    let lp = -0.5 * v.determinant().ln() - 0.5 * dvd.determinant().ln()
        - ((n - k) / 2.0 + prior.sigma2_shape) * (s2 + 2.0 * prior.sigma2_rate).ln()
        - psi.phi.ln();
    (beta, lp)
}

/// Single-year data with a `[1, x, y, altitude]` trend.
fn planar(n_sites: usize, psi: Psi, seed: u64) -> (SpatialData, TrendMatrix, DVector<f64>) {
    let sim = SpatialSim {
        n_sites,
        years: vec![1.0],
        psi,
        ..SpatialSim::default()
    };
    let (records, truth) = simulate::simulate_spatial(&sim, &mut RngStream::new(seed)).unwrap();
    let d = DMatrix::from_fn(records.len(), 4, |i, j| match j {
        0 => 1.0,
        1 => records[i].x_km,
        2 => records[i].y_km,
        _ => records[i].altitude_km,
    });
    let x = DVector::from_vec(truth.x);
    (SpatialData::new(records).unwrap(), TrendMatrix { d }, x)
}

fn spatial_fixed_psi() -> Check {
    let psi = Psi { phi: 30.0, gamma2: 3.0 };
    let prior = SpatialPrior::default();
    let (data, trend, x) = planar(50, psi, 31);
    let coords = data.coords();
    let (beta_hat, _) = oracle_gls(&coords, &trend.d, &x, psi, &prior);
    let grid = PsiGrid::new(vec![psi.phi], vec![psi.gamma2], &prior).unwrap();
    let model = SpatialModel::with_trend(data, trend, grid, Smoothness::FiveHalves, prior).unwrap();
    let post = spatial::spatial_run(&model, RunLength::new(10, 20_000, 1), 41).unwrap();
    let worst = (0..beta_hat.len())
        .map(|j| {
            let col = post.chain.column(j);
            ((mean(&col) - beta_hat[j]) / mc_se(&col)).abs()
        })
        .fold(0.0, f64::max);
    check(
        "fixed-ψ posterior mean of β matches GLS",
        worst <= 3.0,
        format!("worst coefficient {worst:.2} MC SE"),
    )
}

fn spatial_grid_frequencies() -> Check {
    let prior = SpatialPrior::default();
    let (data, trend, x) = planar(20, Psi { phi: 25.0, gamma2: 3.0 }, 37);
    let coords = data.coords();
    let phi = vec![10.0, 25.0, 60.0];
    let gamma2 = vec![2.5, 3.0, 3.5];
    let grid = PsiGrid::new(phi, gamma2, &prior).unwrap();
    let lp: Vec<f64> = (0..grid.len())
        .map(|k| oracle_gls(&coords, &trend.d, &x, grid.cell(k), &prior).1)
        .collect();
    let top = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|v| v / total).collect();

    let model = SpatialModel::with_trend(data, trend, grid.clone(), Smoothness::FiveHalves, prior).unwrap();
    let iters = 400_000;
    let post = spatial::spatial_run(&model, RunLength::new(1_000, iters, 1), 43).unwrap();
    let k = post.k();
    let cells: Vec<usize> = post
        .chain
        .rows()
        .map(|r| grid.index_of(Psi { phi: r[k + 1], gamma2: r[k + 2] }).unwrap())
        .collect();
    let mut worst = 0.0f64;
    for (c, &p) in exact.iter().enumerate() {
        let ind: Vec<f64> = cells.iter().map(|&v| f64::from(u8::from(v == c))).collect();
        let f = mean(&ind);
        let se = match stats::ess(&ind) {
            Ok(ess) => (p * (1.0 - p) / ess).sqrt(),
            Err(_) => (p * (1.0 - p) / iters as f64).sqrt(),
        };
        worst = worst.max((f - p).abs() / se.max(f64::MIN_POSITIVE));
    }
    let shown: Vec<String> = exact.iter().map(|p| format!("{p:.3}")).collect();
    check(
        "3×3 grid MH frequencies match exact grid posterior",
        worst <= 3.0,
        format!("worst cell {worst:.2} MC SE; exact [{}]", shown.join(", ")),
    )
}

fn spatial_interpolation() -> Check {
    let psi = Psi { phi: 15.0, gamma2: 0.0 };
    let prior = SpatialPrior {
        gamma2_lower: -1.0,
        gamma2_upper: 1.0,
        ..SpatialPrior::default()
    };
    let (data, trend, x) = planar(30, psi, 53);
    let site = 7;
    let rec = data.records()[site].clone();
    let d_hat = TrendMatrix {
        d: trend.d.rows(site, 1).into_owned(),
    };
    let grid = PsiGrid::new(vec![psi.phi], vec![0.0], &prior).unwrap();
    let model = SpatialModel::with_trend(data, trend, grid, Smoothness::FiveHalves, prior).unwrap();
    let post = spatial::spatial_run(&model, RunLength::new(0, 200, 1), 59).unwrap();
    let sites = [PredictionSite {
        x_km: rec.x_km,
        y_km: rec.y_km,
        year: rec.year,
    }];
    let pred = spatial::predict(&model, &post, &sites, &d_hat, PredictMode::Marginal, &mut RngStream::new(61)).unwrap();
    let worst = pred.draws.iter().map(|v| (v - x[site]).abs()).fold(0.0, f64::max);
    check(
        "noiseless interpolation at a duplicated site",
        worst <= 1e-6,
        format!("max |draw − observed| {worst:e}"),
    )
}

fn spatial_coverage() -> Check {
    let mut hits = 0;
    let reps = 20;
    for rep in 0..reps {
        let sim = SpatialSim {
            n_sites: 41,
            ..SpatialSim::default()
        };
        let (mut records, truth) = simulate::simulate_spatial(&sim, &mut RngStream::with_stream(800 + rep, 0)).unwrap();
        let held = records.len() - 1;
        let r = records.remove(held);
        let data = SpatialData::new(records).unwrap();
        let grid = PsiGrid::default_for(&data).unwrap();
        let model = SpatialModel::new(data, grid, Smoothness::FiveHalves, SpatialPrior::default()).unwrap();
        let post = spatial::spatial_run(&model, RunLength::new(500, 2_000, 2), 810 + rep).unwrap();
        let site = PredictionSite {
            x_km: r.x_km,
            y_km: r.y_km,
            year: r.year,
        };
        let d_hat = TrendMatrix::assemble(&[(r.x_km, r.y_km, r.altitude_km, r.year)]);
        let mut rng = RngStream::with_stream(810 + rep, 1);
        let pred = spatial::predict(&model, &post, &[site], &d_hat, PredictMode::Marginal, &mut rng).unwrap();
        let col: Vec<f64> = pred.draws.column(0).iter().copied().collect();
        let (lo, hi) = (stats::quantile(&col, 0.025), stats::quantile(&col, 0.975));
        if lo <= truth.x[held] && truth.x[held] <= hi {
            hits += 1;
        }
    }
    check(
        "held-out 95% predictive coverage ≥ 18/20",
        hits >= 18,
        format!("{hits}/{reps}"),
    )
}

fn spatial_timing() -> Check {
    let sim = SpatialSim {
        n_sites: 50,
        years: vec![1.0, 2.0, 3.0, 4.0],
        missing_frac: 0.05,
        ..SpatialSim::default()
    };
    let (records, _) = simulate::simulate_spatial(&sim, &mut RngStream::new(71)).unwrap();
    let start = Instant::now();
    let data = SpatialData::new(records).unwrap();
    let grid = PsiGrid::default_for(&data).unwrap();
    let model = SpatialModel::new(data, grid, Smoothness::FiveHalves, SpatialPrior::default()).unwrap();
    let post = spatial::spatial_run(&model, spatial::DEFAULT_RUN, 73).unwrap();
    let sites: Vec<PredictionSite> = (0..100)
        .map(|i| PredictionSite {
            x_km: (i % 10) as f64 * 10.0,
            y_km: (i / 10) as f64 * 10.0,
            year: 4.0,
        })
        .collect();
    let d_hat = spatial::prediction_trend(&model, &sites);
    let pred = spatial::predict(&model, &post, &sites, &d_hat, PredictMode::Marginal, &mut RngStream::new(79));
    let secs = start.elapsed().as_secs_f64();
    check(
        "runtime < 5 min at n = 200",
        pred.is_ok() && secs < 300.0,
        format!("{secs:.1} s for 200 records, 140 grid cells, 1500 sweeps, 100 predictions"),
    )
}

fn criterion_3() -> Vec<Check> {
    vec![
        spatial_fixed_psi(),
        spatial_grid_frequencies(),
        spatial_interpolation(),
        spatial_coverage(),
        spatial_timing(),
    ]
}

// ---------------------------------------------------------------- 4

fn random_params(rng: &mut RngStream, order: usize, m: usize) -> MtdParams {
    let lambda = stats::sample_dirichlet(rng, &vec![1.0; order]).unwrap();
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m {
        let row = stats::sample_dirichlet(rng, &vec![1.0; m]).unwrap();
        for j in 0..m {
            q[(i, j)] = row[j];
        }
    }
    MtdParams::new(lambda, q).unwrap()
}

/// Transition probabilities over histories indexed with the most recent
/// state as the lowest base-`m` digit.
fn oracle_p(params: &MtdParams) -> DMatrix<f64> {
    let (m, order) = (params.m(), params.order());
    let rows = m.pow(order as u32);
    DMatrix::from_fn(rows, m, |r, next| {
        let mut digits = r;
        let mut p = 0.0;
        for g in 0..order {
            p += params.lambda[g] * params.q[(digits % m, next)];
            digits /= m;
        }
        p
    })
}

fn oracle_stationary(p: &DMatrix<f64>, m: usize, order: usize) -> DVector<f64> {
    let n = p.nrows();
    let high = m.pow(order as u32 - 1);
    let mut a = DMatrix::zeros(n, n);
    for r in 0..n {
        for next in 0..m {
            let to = (r % high) * m + next;
            a[(to, r)] += p[(r, next)];
        }
        a[(r, r)] -= 1.0;
    }
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    a.lu().solve(&b).unwrap()
}

fn criterion_4() -> Vec<Check> {
    let start = Instant::now();
    let mut rng = RngStream::new(404);
    let mut worst_row = 0.0f64;
    let mut worst_entry = 0.0f64;
    for _ in 0..1000 {
        let order = 1 + rng.below(4);
        let m = 2 + rng.below(4);
        let params = random_params(&mut rng, order, m);
        let t = mtd::reconstruct_p(&params);
        for r in 0..t.n_tuples() {
            worst_row = worst_row.max((t.p.row(r).sum() - 1.0).abs());
        }
        worst_entry = worst_entry.max((&t.p - oracle_p(&params)).abs().max());
    }
    let mut worst_pi = 0.0f64;
    for _ in 0..50 {
        let order = 1 + rng.below(3);
        let m = 2 + rng.below(2);
        let params = random_params(&mut rng, order, m);
        let t = mtd::reconstruct_p(&params);
        let pi = mtd::stationary(&t).unwrap();
        let oracle = oracle_stationary(&oracle_p(&params), m, order);
        for (a, b) in pi.iter().zip(oracle.iter()) {
            worst_pi = worst_pi.max((a - b).abs());
        }
    }

    let mut modal = Vec::new();
    for rep in 0..10u64 {
        let codes = simulate::simulate_mtd_codes(&MtdSim::default(), &mut RngStream::with_stream(600 + rep, 0)).unwrap();
        let data = ChainData::from_codes(&codes, 3, 5).unwrap();
        let (report, _) = mtd::order_probs(&data, 5, mtd::DEFAULT_RUN, None, 610 + rep).unwrap();
        modal.push(report.modal_order);
    }
    let hits = modal.iter().filter(|&&o| o == 2).count();

    let rows = [("M2", 21.46, 20.88, 42.34, 31.9), ("M0", 23.21, 20.38, 43.59, 33.4)];
    let mut ppl_ok = true;
    let mut ppl_detail = Vec::new();
    for (name, p, g, d_inf, d_1) in rows {
        let inf = mtd::ppl_from_terms(p, g, f64::INFINITY);
        let one = mtd::ppl_from_terms(p, g, 1.0);
        ppl_ok &= format!("{inf:.2}") == format!("{d_inf:.2}") && format!("{one:.1}") == format!("{d_1:.1}");
        ppl_detail.push(format!("{name}: D∞ {inf:.2}, D₁ {one:.2}"));
    }
    let hand = mtd::ppl(&[vec![1.0, 2.0], vec![3.0, 4.0]], &[2.0, 2.0], 1.0).unwrap();
    ppl_ok &= hand.penalty == 2.0 && hand.fit == 1.0 && hand.d_r == 2.5 && hand.d_inf == 3.0;
    let secs = start.elapsed().as_secs_f64();
    vec![
        check(
            "reconstructed rows sum to 1",
            worst_row <= 1e-12 && worst_entry <= 1e-12,
            format!("max row error {worst_row:e}, max entry error vs oracle {worst_entry:e}"),
        ),
        check(
            "stationary distribution matches linear-solve oracle",
            worst_pi <= 1e-10,
            format!("max error {worst_pi:e}"),
        ),
        check(
            "modal order 2 on ≥ 8/10 chains of 500 steps",
            hits >= 8,
            format!("modal orders {modal:?}"),
        ),
        check("PPL identities", ppl_ok, ppl_detail.join("; ")),
        check("runtime < 2 min", secs < 120.0, format!("{secs:.1} s")),
    ]
}

// ---------------------------------------------------------------- 5

fn criterion_5(z: &[f64], data_sd: f64) -> Vec<Check> {
    let hyper = DpHyper::default();
    let start = Instant::now();
    let grid = dpmm::linspace(-10.0, 10.0, 2001);
    let mut worst_drop = 0.0f64;
    let mut over_cap = Vec::new();
    let mut worst_weight = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut k3 = None;
    let mut iters = Vec::new();
    for k in 1..=20 {
        let (params, trace) = vi::vi_fit(z, &hyper, k, 1000).unwrap();
        for w in trace.elbo.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        if !trace.converged || trace.iterations > 200 {
            over_cap.push(format!("k={k}: {}", trace.iterations));
        }
        iters.push(trace.iterations);
        worst_weight = worst_weight.max((vi::expected_weights(&params.gamma).iter().sum::<f64>() - 1.0).abs());
        let dens = vi::predictive_density(&params, &grid);
        worst_mass = worst_mass.max((trapezoid(&grid, &dens) - 1.0).abs());
        if k == 3 {
            k3 = Some((trace.iterations, *trace.elbo.last().unwrap()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let (k3_iters, k3_elbo) = k3.unwrap();
    let n = z.len() as f64;
    let bound_kms = k3_elbo - n * (data_sd / 1000.0).ln();
    vec![
        check("ELBO non-decreasing within 1e-8", worst_drop <= 1e-8, format!("largest drop {worst_drop:e}")),
        check(
            "converges in ≤ 200 iterations for every k_init",
            over_cap.is_empty(),
            format!("iterations {iters:?}; over 200: [{}]", over_cap.join(", ")),
        ),
        check("k_init = 3 converges in ≤ 50 iterations", k3_iters <= 50, format!("{k3_iters} iterations")),
        check(
            "k_init = 3 bound in [−290, −235]",
            (-290.0..=-235.0).contains(&bound_kms),
            format!("{bound_kms:.2} for velocities in 10³ km/s ({k3_elbo:.2} on the standardized scale)"),
        ),
        check("expected weights sum to 1", worst_weight <= 1e-12, format!("max error {worst_weight:e}")),
        check("predictive density integrates to 1", worst_mass <= 1e-3, format!("max error {worst_mass:e}")),
        check("runtime < 10 s", secs < 10.0, format!("{secs:.2} s for 20 fits")),
    ]
}

// ---------------------------------------------------------------- 6

fn incidence_ok(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| m[(i, i)] == 1.0 && (0..n).all(|j| m[(i, j)] == m[(j, i)]))
}

fn criterion_6(z: &[f64]) -> Vec<Check> {
    let start = Instant::now();
    let hyper = DpHyper::default();
    let grid = dpmm::linspace(-3.0, 3.0, 601);

    let vi_start = Instant::now();
    let (params, _) = vi::vi_fit(z, &hyper, 3, 1000).unwrap();
    let vi_secs = vi_start.elapsed().as_secs_f64();
    let f_vi = vi::predictive_density(&params, &grid);

    let cgs_start = Instant::now();
    let draws = cgs::cgs_run(z, &hyper, cgs::DEFAULT_RUN, 1).unwrap();
    let cgs_secs = cgs_start.elapsed().as_secs_f64();
    let f_cgs = cgs::cgs_predictive(&draws, z, &hyper, &grid).unwrap();

    let l1 = |f: &[f64]| {
        let diff: Vec<f64> = f.iter().zip(&f_cgs).map(|(a, b)| (a - b).abs()).collect();
        trapezoid(&grid, &diff)
    };
    let l1_k3 = l1(&f_vi);
    let best = (1..=20)
        .map(|k| vi::vi_fit(z, &hyper, k, 1000).unwrap())
        .max_by(|a, b| a.1.elbo.last().unwrap().total_cmp(b.1.elbo.last().unwrap()))
        .unwrap();
    let l1_best = l1(&vi::predictive_density(&best.0, &grid));

    let vi_inc = cgs::incidence(&vi::sample_assignments(&params, 1000, &mut RngStream::new(5)).unwrap()).unwrap();
    let cgs_inc = cgs::incidence(&draws.assignments).unwrap();
    let secs = start.elapsed().as_secs_f64();
    vec![
        check(
            "VI and CGS predictive densities within L1 0.2 on [−3, 3]",
            l1_k3 <= 0.2,
            format!("k_init = 3: {l1_k3:.3}; best-ELBO start over k_init 1..20: {l1_best:.3}"),
        ),
        check(
            "incidence matrices symmetric with unit diagonal",
            incidence_ok(&vi_inc) && incidence_ok(&cgs_inc),
            format!("VI {}, CGS {}", incidence_ok(&vi_inc), incidence_ok(&cgs_inc)),
        ),
        check(
            "VI wall time ≤ CGS wall time / 50",
            vi_secs * 50.0 <= cgs_secs,
            format!("VI {:.2} ms, CGS {cgs_secs:.2} s, ratio {:.0}×", vi_secs * 1e3, cgs_secs / vi_secs),
        ),
        check("runtime < 15 min", secs < 900.0, format!("{secs:.1} s")),
    ]
}

// ---------------------------------------------------------------- 7

fn bin(args: &[String]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bayeskit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn criterion_7() -> Vec<Check> {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let path = |s: &str| root.join(s).to_string_lossy().into_owned();
    let mut runs: Vec<(String, Vec<String>)> = Vec::new();
    for model in ["hier", "spatial", "mtd", "dpmm"] {
        runs.push((
            format!("simulate {model}"),
            vec!["simulate".into(), "--model".into(), model.into(), "--seed".into(), "3".into()],
        ));
    }
    let fit = |cmd: &str, input: String, extra: &[&str]| {
        let mut a = vec![cmd.to_string(), "--input".into(), input, "--seed".into(), "11".into()];
        a.extend(extra.iter().map(|s| s.to_string()));
        (cmd.to_string(), a)
    };
    let gal = galaxies_path().to_string_lossy().into_owned();
    let mut checks = Vec::new();
    let mut failures = Vec::new();
    let mut compared = Vec::new();

    let mut execute = |label: &str, args: &[String], tag: &str| -> Option<PathBuf> {
        let mut dirs = Vec::new();
        for pass in 0..2 {
            let dir = root.join(format!("{tag}-{pass}"));
            let mut a = args.to_vec();
            a.extend(["--out".to_string(), dir.to_string_lossy().into_owned()]);
            if let Err(e) = bin(&a) {
                failures.push(e);
                return None;
            }
            dirs.push(dir);
        }
        let (a, b) = (outputs(&dirs[0]), outputs(&dirs[1]));
        if a != b || a.is_empty() {
            failures.push(format!("{label}: outputs differ"));
        } else {
            compared.push(format!("{label} ({} files)", a.len()));
        }
        Some(dirs.remove(0))
    };

    let mut inputs = BTreeMap::new();
    for (i, (label, args)) in runs.iter().enumerate() {
        if let Some(dir) = execute(label, args, &format!("sim{i}")) {
            inputs.insert(label.trim_start_matches("simulate ").to_string(), dir.join("data.csv"));
        }
    }
    let data = |m: &str| inputs.get(m).map(|p| p.to_string_lossy().into_owned()).unwrap_or_else(|| path("missing.csv"));
    let fits = [
        fit("hier", data("hier"), &["--burn-in", "200", "--iters", "1000"]),
        fit("spatial", data("spatial"), &["--burn-in", "50", "--iters", "200"]),
        fit("mtd", data("mtd"), &["--order-max", "3", "--burn-in", "100", "--iters", "500"]),
        fit("dpmm-vi", gal.clone(), &[]),
        fit("dpmm-cgs", gal, &["--burn-in", "100", "--iters", "500"]),
    ];
    for (i, (label, args)) in fits.iter().enumerate() {
        execute(label, args, &format!("fit{i}"));
    }
    checks.push(check(
        "every subcommand is byte-identical on rerun",
        failures.is_empty() && compared.len() == 9,
        if failures.is_empty() {
            compared.join(", ")
        } else {
            failures.join("; ")
        },
    ));
    checks
}

// ----------------------------------------------------------------

fn main() {
    let y = galaxies();
    let (z, _, data_sd) = dpmm::standardize(&y).unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Vec<Check>>)> = vec![
        ("conjugate oracle exactness", Box::new(criterion_1)),
        ("hierarchical sampler correctness", Box::new(criterion_2)),
        ("spatial sampler", Box::new(criterion_3)),
        ("MTD", Box::new(criterion_4)),
        ("DPMM VI on galaxies", Box::new(|| criterion_5(&z, data_sd))),
        ("VI vs CGS on galaxies", Box::new(|| criterion_6(&z))),
        ("determinism", Box::new(criterion_7)),
    ];
    let mut failed = Vec::new();
    for (i, (title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let checks = run();
        let ok = checks.iter().all(|c| c.ok);
        println!(
            "{} criterion {}: {title} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
        for c in &checks {
            println!("    [{}] {}: {}", if c.ok { "ok" } else { "FAIL" }, c.name, c.detail);
        }
        if !ok {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("all criteria passed");
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
