use std::path::PathBuf;

use bayeskit::stats::RunLength;
use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Hier,
    Spatial,
    Mtd,
    DpmmVi,
    DpmmCgs,
    Simulate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimModel {
    Hier,
    Spatial,
    Mtd,
    Dpmm,
}

/// Prior on the between-group mean and variance for `hier`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TauPrior {
    /// `p(μ, τ²) ∝ 1/τ²`.
    #[default]
    Flat,
    /// `p(μ, τ) ∝ 1`; proper for three or more groups.
    UniformScale,
}

/// One batch run. Unset settings fall back to each model's defaults.
#[derive(Clone, Debug, Parser, Serialize)]
#[command(name = "bayeskit", version, about = "Batch Bayesian model fitting")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,

    /// Input CSV; not used by `simulate`.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Output directory; must be absent or empty.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long)]
    pub burn_in: Option<usize>,

    /// Kept-chain length before thinning; the iteration cap for `dpmm-vi`.
    #[arg(long)]
    pub iters: Option<usize>,

    #[arg(long)]
    pub thin: Option<usize>,

    #[arg(long)]
    pub truncation: Option<usize>,

    #[arg(long)]
    pub init_clusters: Option<usize>,

    #[arg(long)]
    pub order_max: Option<usize>,

    /// Comma-separated φ values.
    #[arg(long, value_delimiter = ',')]
    pub phi_grid: Option<Vec<f64>>,

    /// Comma-separated γ² values.
    #[arg(long, value_delimiter = ',')]
    pub gamma2_grid: Option<Vec<f64>>,

    #[arg(long, value_enum, default_value_t = TauPrior::Flat)]
    pub tau_prior: TauPrior,

    /// Exceedance threshold for spatial predictions.
    #[arg(long)]
    pub threshold_mm: Option<f64>,

    /// Forecast horizon for `mtd`.
    #[arg(long)]
    pub horizon: Option<usize>,

    /// Generative model for `simulate`.
    #[arg(long, value_enum)]
    pub model: Option<SimModel>,

    /// JSON file overriding the default simulation settings.
    #[arg(long)]
    pub truth: Option<PathBuf>,

    /// Prediction sites CSV (`x_km,y_km,year`) for `spatial`.
    #[arg(long)]
    pub sites: Option<PathBuf>,

    /// Density grid `lo,hi,n` on the standardized scale for the DPMM commands.
    #[arg(long, value_delimiter = ',')]
    pub density_grid: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            input: None,
            out: out.into(),
            seed: 1,
            burn_in: None,
            iters: None,
            thin: None,
            truncation: None,
            init_clusters: None,
            order_max: None,
            phi_grid: None,
            gamma2_grid: None,
            tau_prior: TauPrior::Flat,
            threshold_mm: None,
            horizon: None,
            model: None,
            truth: None,
            sites: None,
            density_grid: None,
        }
    }

    pub fn with_input(mut self, path: impl Into<PathBuf>) -> Self {
        self.input = Some(path.into());
        self
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: Option<usize>| {
            if v == Some(0) {
                bad.push(format!("--{name} must be positive"));
            }
        };
        positive("iters", self.iters);
        positive("thin", self.thin);
        positive("truncation", self.truncation);
        positive("init-clusters", self.init_clusters);
        positive("order-max", self.order_max);
        positive("horizon", self.horizon);
        if let (Some(i), Some(t)) = (self.iters, self.thin) {
            if t > 0 && i % t != 0 {
                bad.push(format!("--iters {i} is not a multiple of --thin {t}"));
            }
        }
        match (self.command, &self.input) {
            (Command::Simulate, _) => {
                if self.model.is_none() {
                    bad.push("simulate needs --model".into());
                }
            }
            (_, None) => bad.push("--input is required".into()),
            (_, Some(p)) if !p.is_file() => bad.push(format!("--input {} does not exist", p.display())),
            _ => {}
        }
        for (flag, path) in [("truth", &self.truth), ("sites", &self.sites)] {
            if let Some(p) = path {
                if !p.is_file() {
                    bad.push(format!("--{flag} {} does not exist", p.display()));
                }
            }
        }
        for (flag, grid) in [("phi-grid", &self.phi_grid), ("gamma2-grid", &self.gamma2_grid)] {
            if let Some(g) = grid {
                if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    bad.push(format!("--{flag} values must be positive"));
                }
            }
        }
        if let Some(t) = self.threshold_mm {
            if !t.is_finite() {
                bad.push("--threshold-mm must be finite".into());
            }
        }
        if let Some(g) = &self.density_grid {
            let ok = g.len() == 3 && g[0].is_finite() && g[1] > g[0] && g[1].is_finite() && g[2] >= 2.0 && g[2].fract() == 0.0;
            if !ok {
                bad.push("--density-grid must be lo,hi,n with lo < hi and integer n ≥ 2".into());
            }
        }
        if self.out.exists() {
            let empty = self.out.is_dir() && std::fs::read_dir(&self.out).map(|mut d| d.next().is_none()).unwrap_or(false);
            if !empty {
                bad.push(format!("--out {} exists and is not an empty directory", self.out.display()));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad))
        }
    }

    pub fn run_length(&self, default: RunLength) -> RunLength {
        RunLength::new(
            self.burn_in.unwrap_or(default.burn_in),
            self.iters.unwrap_or(default.iters),
            self.thin.unwrap_or(default.thin),
        )
    }

    pub fn density_grid(&self) -> Vec<f64> {
        match &self.density_grid {
            Some(g) => bayeskit::dpmm::linspace(g[0], g[1], g[2] as usize),
            None => bayeskit::dpmm::linspace(-4.0, 4.0, 801),
        }
    }
}
