//! CSV ingestion for the four pipelines.
//!
//! Every loader checks the header against a fixed schema and reports failures
//! as [`Error::Ingestion`] with the 1-based line number of the offending
//! record (the header is line 1) and the column name.

use crate::hier::HierRecord;
use crate::spatial::{PredictionSite, SpatialRecord};
use crate::{Error, Result};
use std::io::Read;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    /// `device_id,group,y_mean,n_records`
    Hier,
    /// `site_id,x_km,y_km,altitude_km,year,rainfall_mm`; empty rainfall is missing.
    Spatial,
    /// `x_km,y_km,year`
    PredictionGrid,
    /// One column named `rate` (raw values) or `state` (1-based codes).
    Series,
    /// One numeric column under any header.
    Observations,
}

impl Schema {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Schema::Hier => &["device_id", "group", "y_mean", "n_records"],
            Schema::Spatial => &["site_id", "x_km", "y_km", "altitude_km", "year", "rainfall_mm"],
            Schema::PredictionGrid => &["x_km", "y_km", "year"],
            Schema::Series | Schema::Observations => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Series {
    Rates(Vec<f64>),
    Codes(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Hier(Vec<HierRecord>),
    Spatial { records: Vec<SpatialRecord>, missing: usize },
    PredictionGrid(Vec<PredictionSite>),
    Series(Series),
    Observations(Vec<f64>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Hier(r) => r.len(),
            Dataset::Spatial { records, .. } => records.len(),
            Dataset::PredictionGrid(s) => s.len(),
            Dataset::Series(Series::Rates(v)) => v.len(),
            Dataset::Series(Series::Codes(v)) => v.len(),
            Dataset::Observations(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn ingest(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Ingestion {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| ingest(row, column, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(ingest(row, column, format!("`{cell}` is not finite")));
    }
    Ok(v)
}

fn count(cell: &str, row: usize, column: &str) -> Result<u64> {
    cell.parse()
        .map_err(|_| ingest(row, column, format!("`{cell}` is not a non-negative integer")))
}

fn text(cell: &str, row: usize, column: &str) -> Result<String> {
    if cell.is_empty() {
        return Err(ingest(row, column, "empty cell"));
    }
    Ok(cell.to_string())
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(reader: impl Read) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| ingest(1, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(k + 2, |p| p.line() as usize);
            ingest(line, "", e.to_string())
        })?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn check_header(table: &Table, expected: &[&str]) -> Result<()> {
    if table.header.len() != expected.len() || table.header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(ingest(
            1,
            "",
            format!("header {:?} does not match {:?}", table.header, expected),
        ));
    }
    Ok(())
}

/// Parses a dataset from any reader.
pub fn parse_dataset(reader: impl Read, schema: Schema) -> Result<Dataset> {
    let table = read_table(reader)?;
    let cols = schema.columns();
    match schema {
        Schema::Hier => {
            check_header(&table, cols)?;
            let recs = table
                .rows
                .iter()
                .map(|(line, r)| {
                    Ok(HierRecord {
                        device_id: text(&r[0], *line, cols[0])?,
                        group: text(&r[1], *line, cols[1])?,
                        y_mean: number(&r[2], *line, cols[2])?,
                        n_records: count(&r[3], *line, cols[3])?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Dataset::Hier(recs))
        }
        Schema::Spatial => {
            check_header(&table, cols)?;
            let mut missing = 0;
            let mut records = Vec::with_capacity(table.rows.len());
            for (line, r) in &table.rows {
                let rainfall = if r[5].is_empty() {
                    missing += 1;
                    None
                } else {
                    Some(number(&r[5], *line, cols[5])?)
                };
                records.push(SpatialRecord {
                    site_id: text(&r[0], *line, cols[0])?,
                    x_km: number(&r[1], *line, cols[1])?,
                    y_km: number(&r[2], *line, cols[2])?,
                    altitude_km: number(&r[3], *line, cols[3])?,
                    year: number(&r[4], *line, cols[4])?,
                    rainfall_mm: rainfall,
                });
            }
            Ok(Dataset::Spatial { records, missing })
        }
        Schema::PredictionGrid => {
            check_header(&table, cols)?;
            let sites = table
                .rows
                .iter()
                .map(|(line, r)| {
                    Ok(PredictionSite {
                        x_km: number(&r[0], *line, cols[0])?,
                        y_km: number(&r[1], *line, cols[1])?,
                        year: number(&r[2], *line, cols[2])?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Dataset::PredictionGrid(sites))
        }
        Schema::Series => {
            if table.header.len() != 1 {
                return Err(ingest(1, "", "series files have exactly one column"));
            }
            match table.header[0].as_str() {
                "rate" => Ok(Dataset::Series(Series::Rates(
                    table.rows.iter().map(|(l, r)| number(&r[0], *l, "rate")).collect::<Result<_>>()?,
                ))),
                "state" => Ok(Dataset::Series(Series::Codes(
                    table
                        .rows
                        .iter()
                        .map(|(l, r)| match count(&r[0], *l, "state")? {
                            0 => Err(ingest(*l, "state", "state codes start at 1")),
                            c => usize::try_from(c).map_err(|_| ingest(*l, "state", "state code too large")),
                        })
                        .collect::<Result<_>>()?,
                ))),
                other => Err(ingest(1, other, "series header must be `rate` or `state`")),
            }
        }
        Schema::Observations => {
            if table.header.len() != 1 {
                return Err(ingest(1, "", "observation files have exactly one column"));
            }
            let name = table.header[0].clone();
            Ok(Dataset::Observations(
                table.rows.iter().map(|(l, r)| number(&r[0], *l, &name)).collect::<Result<_>>()?,
            ))
        }
    }
}

pub fn parse_str(s: &str, schema: Schema) -> Result<Dataset> {
    parse_dataset(s.as_bytes(), schema)
}

/// Parses raw bytes; non-UTF-8 input is an ingestion error rather than a panic.
pub fn parse_bytes(bytes: &[u8], schema: Schema) -> Result<Dataset> {
    parse_dataset(bytes, schema)
}

pub fn load_dataset(path: impl AsRef<Path>, schema: Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_dataset(std::io::BufReader::new(file), schema)
}
