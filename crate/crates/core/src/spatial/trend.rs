use nalgebra::{DMatrix, DVector};

use super::SpatialData;
use crate::error::{Error, Result};

pub const TREND_COLUMNS: [&str; 7] = [
    "intercept",
    "longitude",
    "latitude",
    "altitude",
    "year",
    "latitude2",
    "year2",
];

/// Design matrix with columns named by [`TREND_COLUMNS`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrendMatrix {
    pub d: DMatrix<f64>,
}

impl TrendMatrix {
    /// Rows `[1, x, y, altitude, year, y², year²]`, without any rank check.
    pub fn assemble(rows: &[(f64, f64, f64, f64)]) -> TrendMatrix {
        let d = DMatrix::from_fn(rows.len(), TREND_COLUMNS.len(), |i, j| {
            let (x, y, alt, year) = rows[i];
            match j {
                0 => 1.0,
                1 => x,
                2 => y,
                3 => alt,
                4 => year,
                5 => y * y,
                _ => year * year,
            }
        });
        TrendMatrix { d }
    }

    pub fn nrows(&self) -> usize {
        self.d.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.d.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        self.d.select_rows(rows)
    }

    /// Columns that are numerically in the span of the columns before them.
    pub fn dependent_columns(m: &DMatrix<f64>) -> Vec<String> {
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut dependent = Vec::new();
        for j in 0..m.ncols() {
            let col = m.column(j).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                dependent.push(TREND_COLUMNS[j].to_owned());
                continue;
            }
            let mut r = col / norm;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&r);
                    r -= q * c;
                }
            }
            let rn = r.norm();
            if rn < 1e-9 {
                dependent.push(TREND_COLUMNS[j].to_owned());
            } else {
                basis.push(r / rn);
            }
        }
        dependent
    }
}

/// Trend for every record, with full column rank checked on observed rows.
pub fn build_trend(data: &SpatialData) -> Result<TrendMatrix> {
    let rows: Vec<_> = data
        .records()
        .iter()
        .map(|r| (r.x_km, r.y_km, r.altitude_km, r.year))
        .collect();
    let t = TrendMatrix::assemble(&rows);
    let obs = t.select_rows(data.observed());
    let dependent = TrendMatrix::dependent_columns(&obs);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient { columns: dependent });
    }
    Ok(t)
}
