use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bayeskit::stats::PosteriorChain;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRecord {
    pub stage: String,
    pub seed: u64,
    pub stream: u64,
}

/// Written last, atomically, as `manifest.json` in the output directory.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub stages: Vec<StageTime>,
    pub seeds: Vec<SeedRecord>,
    /// Paths relative to the output directory, in write order.
    pub files: Vec<String>,
    /// False only when an iterative fit stopped at its cap.
    pub converged: bool,
}

impl RunManifest {
    pub fn path(&self) -> PathBuf {
        self.config.out.join("manifest.json")
    }
}

pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
    stages: Vec<StageTime>,
    seeds: Vec<SeedRecord>,
    clock: Instant,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
            stages: Vec::new(),
            seeds: Vec::new(),
            clock: Instant::now(),
        })
    }

    /// Records the time since the previous call under `name`.
    pub fn stage(&mut self, name: &str) {
        self.stages.push(StageTime {
            stage: name.to_string(),
            wall_time_s: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
    }

    pub fn seed(&mut self, stage: &str, seed: u64, stream: u64) {
        self.seeds.push(SeedRecord {
            stage: stage.to_string(),
            seed,
            stream,
        });
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<fs::File>, CliError> {
        let f = fs::File::create(self.root.join(name))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[String], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(self.open(name)?);
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn chain(&mut self, name: &str, chain: &PosteriorChain) -> Result<(), CliError> {
        let w = self.open(name)?;
        chain.write_csv(w)?;
        Ok(())
    }

    pub fn matrix(&mut self, name: &str, prefix: &str, n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<(), CliError> {
        let header: Vec<String> = (1..=n).map(|j| format!("{prefix}{j}")).collect();
        let rows: Vec<Vec<String>> = (0..n).map(|i| (0..n).map(|j| num(entry(i, j))).collect()).collect();
        self.csv(name, &header, rows)
    }

    pub fn finish(mut self, config: &RunConfig, converged: bool) -> Result<RunManifest, CliError> {
        self.stage("write");
        let manifest = RunManifest {
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            stages: self.stages,
            seeds: self.seeds,
            files: self.files,
            converged,
        };
        let tmp = self.root.join(".manifest.json.tmp");
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::Io(e.into()))?;
            writeln!(w)?;
            w.flush()?;
        }
        fs::rename(&tmp, self.root.join("manifest.json"))?;
        Ok(manifest)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}
