//! Batch front end: `bayeskit <command> --input FILE --out DIR [settings]`.
//!
//! Each run writes summary JSON and array CSVs into a fresh output directory,
//! then `manifest.json` listing every file, seed and stage time. Wall times
//! appear only in the manifest, so all other outputs are byte-identical for a
//! repeated seed.

mod commands;
pub mod config;
pub mod output;

pub use config::{Command, RunConfig, SimModel, TauPrior};
pub use output::RunManifest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Core(#[from] bayeskit::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    /// 2 configuration, 3 ingestion, 4 numerical, 5 non-convergence.
    pub fn exit_code(&self) -> i32 {
        use bayeskit::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::Parameter(_) => 2,
                E::Ingestion { .. } | E::Io(_) | E::Precondition(_) => 3,
                E::Fit(_) => 5,
                E::Domain(_)
                | E::Degenerate(_)
                | E::Decomposition(_)
                | E::Numerical { .. }
                | E::RankDeficient { .. } => 4,
            },
        }
    }
}

/// Validates `config`, runs the command, and writes the manifest.
pub fn run(config: &RunConfig) -> Result<RunManifest, CliError> {
    config.validate()?;
    let mut out = output::OutDir::create(&config.out)?;
    let converged = match config.command {
        Command::Hier => commands::hier(config, &mut out)?,
        Command::Spatial => commands::spatial(config, &mut out)?,
        Command::Mtd => commands::mtd(config, &mut out)?,
        Command::DpmmVi => commands::dpmm_vi(config, &mut out)?,
        Command::DpmmCgs => commands::dpmm_cgs(config, &mut out)?,
        Command::Simulate => commands::simulate(config, &mut out)?,
    };
    out.finish(config, converged)
}
