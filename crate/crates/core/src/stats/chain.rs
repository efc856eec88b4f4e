use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retained draws of a sampler run, one row per kept iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorChain {
    names: Vec<String>,
    draws: Vec<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    #[serde(rename = "q2.5")]
    pub q025: f64,
    #[serde(rename = "q50")]
    pub q50: f64,
    #[serde(rename = "q97.5")]
    pub q975: f64,
}

impl PosteriorChain {
    pub fn new(names: Vec<String>, burn_in: usize, thin: usize, seed: u64) -> Self {
        PosteriorChain {
            names,
            draws: Vec::new(),
            burn_in,
            thin: thin.max(1),
            seed,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.draws.len() / self.names.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n_draws() == 0
    }

    /// Appends one kept draw; rejects rows of the wrong width or with
    /// non-finite entries.
    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::Precondition(format!(
                "row has {} values, chain has {} parameters",
                row.len(),
                self.names.len()
            )));
        }
        if let Some(k) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::numerical(
                0,
                format!("non-finite draw for `{}`", self.names[k]),
            ));
        }
        self.draws.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.names.len();
        &self.draws[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks(self.names.len().max(1))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|j| self.column(j))
    }

    pub fn summarize(&self) -> Result<Vec<PosteriorSummary>> {
        if self.is_empty() {
            return Err(Error::Precondition("empty chain".into()));
        }
        Ok((0..self.n_params())
            .map(|j| summarize_column(&self.names[j], &self.column(j)))
            .collect())
    }

    /// Writes a header of parameter names and one row per draw, with
    /// shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names).map_err(csv_io)?;
        for row in self.rows() {
            w.write_record(row.iter().map(|x| format!("{x:?}"))).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a chain written by [`write_csv`](Self::write_csv). Metadata
    /// (burn-in, thin, seed) lives outside the CSV and is set by the caller.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| ingest(1, "", &e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut chain = PosteriorChain::new(names, 0, 1, 0);
        for (i, rec) in rdr.records().enumerate() {
            let row_no = i + 2;
            let rec = rec.map_err(|e| ingest(row_no, "", &e.to_string()))?;
            let mut row = Vec::with_capacity(rec.len());
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| ingest(row_no, &chain.names[j], &format!("not a number: `{field}`")))?;
                row.push(v);
            }
            chain
                .push(&row)
                .map_err(|e| ingest(row_no, "", &e.to_string()))?;
        }
        Ok(chain)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn ingest(row: usize, column: &str, message: &str) -> Error {
    Error::Ingestion {
        row,
        column: column.to_owned(),
        message: message.to_owned(),
    }
}

pub fn summarize_column(name: &str, xs: &[f64]) -> PosteriorSummary {
    let n = xs.len() as f64;
    let rough = xs.iter().sum::<f64>() / n;
    let mean = rough + xs.iter().map(|x| x - rough).sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    PosteriorSummary {
        name: name.to_owned(),
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q50: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
    }
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pairs, clamped to `(0, n]`.
pub fn ess(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 10 {
        return Err(Error::Precondition(format!("ESS needs at least 10 draws, got {n}")));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let autocov = |k: usize| -> f64 {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    if !(gamma0 > 0.0) {
        return Err(Error::Degenerate("constant chain".into()));
    }
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = (autocov(k) + autocov(k + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    let ess = n as f64 / tau;
    Ok(if tau <= 0.0 || ess > n as f64 { n as f64 } else { ess })
}

/// Sweep schedule of a sampler: discarded sweeps, then kept sweeps thinned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLength {
    pub burn_in: usize,
    pub iters: usize,
    pub thin: usize,
}

impl RunLength {
    pub fn new(burn_in: usize, iters: usize, thin: usize) -> Self {
        RunLength {
            burn_in,
            iters,
            thin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.iters == 0 {
            return Err(Error::Precondition("iters and thin must be positive".into()));
        }
        if self.iters % self.thin != 0 {
            return Err(Error::Precondition(format!(
                "iters ({}) must be divisible by thin ({})",
                self.iters, self.thin
            )));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        self.iters / self.thin
    }
}
