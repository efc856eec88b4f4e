use bayeskit::dpmm::cgs::{cgs_run, incidence, DEFAULT_RUN as CGS_DEFAULT_RUN};
use bayeskit::dpmm::vi::{predictive_density, update_eta, update_xi, vi_fit, vi_init, ViParams};
use bayeskit::dpmm::{linspace, standardize, trapezoid, DpHyper};
use bayeskit::io::{load_dataset, Dataset, Schema};
use bayeskit::simulate::{simulate_dpmm, DpmmSim};
use bayeskit::stats::{
    ln_gamma, normal_normal_posterior, sample_categorical, sample_dirichlet, sample_normal, RngStream, RunLength,
};
use std::collections::HashMap;
use std::path::Path;

fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let next = cur.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            cur.push(l);
            rec(cur, n, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, &mut out);
    out
}

// log p(z_c | φ) with Z integrated out: covariance I/φ + 11ᵀ/ν.
fn cluster_marginal(z: &[f64], phi: f64, h: &DpHyper) -> f64 {
    let m = z.len() as f64;
    let s: f64 = z.iter().map(|x| x - h.psi).sum();
    let ss: f64 = z.iter().map(|x| (x - h.psi).powi(2)).sum();
    let log_det = -m * phi.ln() + (1.0 + m * phi / h.nu).ln();
    let quad = phi * ss - phi * phi * s * s / (h.nu + m * phi);
    -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

fn crp_log_prior(labels: &[usize], alpha: f64) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let mut out = k as f64 * alpha.ln() - (ln_gamma(alpha + labels.len() as f64) - ln_gamma(alpha));
    for c in 0..k {
        let size = labels.iter().filter(|&&l| l == c).count();
        out += ln_gamma(size as f64);
    }
    out
}

// Exact joint over partitions and φ on a fine log-φ grid.
fn exact_posterior(z: &[f64], h: &DpHyper) -> (Vec<(Vec<usize>, f64)>, f64) {
    let parts = partitions(z.len());
    let grid: Vec<f64> = (0..6001).map(|i| -12.0 + 24.0 * i as f64 / 6000.0).collect();
    let mut log_w = Vec::new();
    for p in &parts {
        let k = p.iter().max().unwrap() + 1;
        let row: Vec<f64> = grid
            .iter()
            .map(|&t| {
                let phi = t.exp();
                let mut lp = crp_log_prior(p, h.alpha) + h.a_phi * t - h.b_phi * phi;
                for c in 0..k {
                    let zc: Vec<f64> = z.iter().zip(p).filter(|(_, &l)| l == c).map(|(x, _)| *x).collect();
                    lp += cluster_marginal(&zc, phi, h);
                }
                lp
            })
            .collect();
        log_w.push(row);
    }
    let top = log_w.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = vec![0.0; parts.len()];
    let mut phi_mass = 0.0;
    let mut total = 0.0;
    for (pi, row) in log_w.iter().enumerate() {
        for (g, &lw) in row.iter().enumerate() {
            let w = (lw - top).exp();
            mass[pi] += w;
            phi_mass += w * grid[g].exp();
            total += w;
        }
    }
    let probs = parts.into_iter().zip(mass.into_iter().map(|m| m / total)).collect();
    (probs, phi_mass / total)
}

#[test]
fn cgs_matches_enumerated_partition_posterior() {
    let z = [-1.1, -0.9, 0.4, 1.6];
    let h = DpHyper {
        b_phi: 1.0,
        ..DpHyper::default()
    };
    let (exact, phi_mean) = exact_posterior(&z, &h);
    let draws = cgs_run(&z, &h, RunLength::new(1000, 200_000, 1), 17).unwrap();
    let mut freq: HashMap<Vec<usize>, f64> = HashMap::new();
    for a in &draws.assignments {
        *freq.entry(a.clone()).or_default() += 1.0 / draws.len() as f64;
    }
    let mut tv = 0.0;
    for (p, prob) in &exact {
        let f = freq.get(p).copied().unwrap_or(0.0);
        tv += 0.5 * (f - prob).abs();
        assert!((f - prob).abs() < 0.01, "partition {p:?}: {f} vs {prob}");
    }
    assert!(tv < 0.015, "total variation {tv}");
    let sampled_phi = draws.phi.iter().sum::<f64>() / draws.len() as f64;
    assert!((sampled_phi - phi_mean).abs() / phi_mean < 0.02, "{sampled_phi} vs {phi_mean}");
}

#[test]
fn incidence_from_draws_is_symmetric_with_unit_diagonal() {
    let z = [-1.1, -0.9, 0.4, 1.6, 2.0];
    let draws = cgs_run(&z, &DpHyper::default(), RunLength::new(10, 200, 1), 3).unwrap();
    let m = incidence(&draws.assignments).unwrap();
    for i in 0..z.len() {
        assert_eq!(m[(i, i)], 1.0);
        for j in 0..z.len() {
            assert_eq!(m[(i, j)], m[(j, i)]);
        }
    }
}

fn random_params(z: &[f64], h: &DpHyper, rng: &mut RngStream) -> ViParams {
    let mut p = vi_init(z, 3, h).unwrap();
    let nt = h.truncation;
    for i in 0..z.len() {
        let row = sample_dirichlet(rng, &vec![0.5; nt]).unwrap();
        for l in 0..nt {
            p.varpi[(i, l)] = row[l];
        }
    }
    for e in p.eta.iter_mut() {
        *e = (sample_normal(rng, 0.0, 1.0).unwrap(), 0.05 + rng.uniform());
    }
    p.xi = (1.0 + 5.0 * rng.uniform(), 0.5 + rng.uniform());
    p
}

#[test]
fn xi_rate_matches_monte_carlo_under_q() {
    let h = DpHyper {
        truncation: 5,
        ..DpHyper::default()
    };
    let mut rng = RngStream::new(41);
    let z: Vec<f64> = (0..12).map(|_| sample_normal(&mut rng, 0.0, 1.0).unwrap()).collect();
    for _ in 0..5 {
        let mut p = random_params(&z, &h, &mut rng);
        update_xi(&mut p, &z, &h).unwrap();
        let draws: Vec<f64> = (0..20_000)
            .map(|_| {
                let mut ss = 0.0;
                for (i, &zi) in z.iter().enumerate() {
                    let w: Vec<f64> = p.varpi.row(i).iter().copied().collect();
                    let l = sample_categorical(&mut rng, &w).unwrap();
                    let zl = sample_normal(&mut rng, p.eta[l].0, p.eta[l].1).unwrap();
                    ss += (zi - zl).powi(2);
                }
                h.b_phi + 0.5 * ss
            })
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        let se = sd / (draws.len() as f64).sqrt();
        assert!((p.xi.1 - m).abs() < 3.0 * se, "ξ₂ {} vs Monte Carlo {m} ± {se}", p.xi.1);
        assert_eq!(p.xi.0, h.a_phi + z.len() as f64 / 2.0);
    }
}

#[test]
fn eta_matches_normal_normal_posterior_for_hard_assignments() {
    let h = DpHyper {
        truncation: 4,
        psi: 0.3,
        ..DpHyper::default()
    };
    let mut rng = RngStream::new(42);
    for _ in 0..20 {
        let z: Vec<f64> = (0..15).map(|_| sample_normal(&mut rng, 0.0, 2.0).unwrap()).collect();
        let mut p = vi_init(&z, 1, &h).unwrap();
        p.varpi.fill(0.0);
        let labels: Vec<usize> = (0..z.len()).map(|_| rng.below(3)).collect();
        for (i, &l) in labels.iter().enumerate() {
            p.varpi[(i, l)] = 1.0;
        }
        p.xi = (1.0 + 5.0 * rng.uniform(), 0.2 + rng.uniform());
        let phi_bar = p.xi.0 / p.xi.1;
        update_eta(&mut p, &z, &h);
        for l in 0..h.truncation {
            let zl: Vec<f64> = z.iter().zip(&labels).filter(|(_, &c)| c == l).map(|(x, _)| *x).collect();
            let (m, v) = if zl.is_empty() {
                (h.psi, 1.0 / h.nu)
            } else {
                normal_normal_posterior(h.psi, 1.0 / h.nu, 1.0 / phi_bar, &zl).unwrap()
            };
            assert!((p.eta[l].0 - m).abs() < 1e-12 * (1.0 + m.abs()), "mean {} vs {m}", p.eta[l].0);
            assert!((p.eta[l].1 - v).abs() < 1e-12 * v, "variance {} vs {v}", p.eta[l].1);
        }
    }
}

#[test]
fn elbo_trace_is_monotone_on_random_datasets() {
    let mut rng = RngStream::new(43);
    for rep in 0..20 {
        let sim = DpmmSim {
            n: 30 + 5 * rep,
            ..DpmmSim::default()
        };
        let (y, _) = simulate_dpmm(&sim, &mut rng).unwrap();
        let (z, _, _) = standardize(&y).unwrap();
        let k = 1 + rep % 5;
        let (_, trace) = vi_fit(&z, &DpHyper::default(), k, 2000).unwrap();
        for w in trace.elbo.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "dataset {rep}: bound fell from {} to {}", w[0], w[1]);
        }
    }
}

#[test]
fn standardized_predictive_integrates_to_one() {
    let mut rng = RngStream::new(44);
    let (y, _) = simulate_dpmm(&DpmmSim::default(), &mut rng).unwrap();
    let (z, _, _) = standardize(&y).unwrap();
    let (p, _) = vi_fit(&z, &DpHyper::default(), 3, 1000).unwrap();
    let grid = linspace(-10.0, 10.0, 2001);
    let mass = trapezoid(&grid, &predictive_density(&p, &grid));
    assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
}

#[test]
fn cluster_count_on_prior_data_matches_crp_expectation() {
    let h = DpHyper::default();
    let n = 20;
    let expected: f64 = (1..=n).map(|i| h.alpha / (h.alpha + i as f64 - 1.0)).sum();
    let mut rng = RngStream::new(45);
    let mut total = 0.0;
    for rep in 0..50 {
        let (y, _) = simulate_dpmm(&DpmmSim { n, ..DpmmSim::default() }, &mut rng).unwrap();
        let draws = cgs_run(&y, &h, RunLength::new(200, 1000, 1), 900 + rep).unwrap();
        let counts = draws.cluster_counts();
        total += counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    }
    let mean = total / 50.0;
    assert!((mean - expected).abs() / expected < 0.10, "mean clusters {mean} vs {expected}");
}

#[test]
fn galaxies_modal_cluster_count_at_least_three() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/galaxies.csv");
    let Dataset::Observations(y) = load_dataset(path, Schema::Observations).unwrap() else {
        unreachable!()
    };
    let (z, _, _) = standardize(&y).unwrap();
    let draws = cgs_run(&z, &DpHyper::default(), CGS_DEFAULT_RUN, 8).unwrap();
    let mut freq: HashMap<usize, usize> = HashMap::new();
    for k in draws.cluster_counts() {
        *freq.entry(k).or_default() += 1;
    }
    let (modal, _) = freq.iter().max_by_key(|(k, c)| (**c, std::cmp::Reverse(**k))).unwrap();
    assert!(*modal >= 3, "modal count {modal}, frequencies {freq:?}");
}
