//! Price and return panels, plus full-sample and rolling covariance.
//!
//! Prices arrive as a wide CSV (`date,<ticker>...,[INDEX]`). Returns are
//! simple per-period returns; log returns only show up in the cumulative
//! tracking metrics.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

/// Dense square matrix stored as rows.
pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error at row {row}: {message}")]
    Csv { row: u64, message: String },
    #[error("row {row}, column {column}: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("index column `{0}` not present in the price panel")]
    MissingIndex(String),
}

/// Prices for N assets (and optionally the target index) on T+1 dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub asset_ids: Vec<String>,
    /// One row per date, one column per asset.
    pub prices: Matrix,
    pub index_name: Option<String>,
    pub index: Option<Vec<f64>>,
}

impl PricePanel {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }
}

/// Reads a wide price CSV from disk. See [`parse_prices`].
pub fn load_prices(path: impl AsRef<Path>, index_col: &str) -> Result<PricePanel, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_prices(file, index_col)
}

/// Parses a wide price CSV. The first column holds ISO-8601 dates, every
/// other column is a positive price series; the column named `index_col`
/// (if present) becomes the target index. Rows are sorted by date.
pub fn parse_prices<R: Read>(reader: R, index_col: &str) -> Result<PricePanel, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| csv_error(&e, 1))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if headers.len() < 2 {
        return Err(DataError::Validation(
            "header needs a date column and at least one price column".into(),
        ));
    }

    let mut seen = HashSet::new();
    for h in &headers[1..] {
        if h.is_empty() {
            return Err(DataError::Validation("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(DataError::Validation(format!("duplicate column `{h}`")));
        }
    }

    let index_pos = headers[1..].iter().position(|h| h == index_col);
    let asset_ids: Vec<String> = headers[1..]
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != index_pos)
        .map(|(_, h)| h.clone())
        .collect();
    if asset_ids.is_empty() {
        return Err(DataError::Validation("no asset columns".into()));
    }

    let mut rows: Vec<(NaiveDate, String, Vec<f64>, Option<f64>)> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let record = record.map_err(|e| csv_error(&e, line as u64))?;
        if record.len() != headers.len() {
            return Err(DataError::Csv {
                row: line as u64,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let raw_date = &record[0];
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| DataError::Cell {
            row: line,
            column: headers[0].clone(),
            message: format!("invalid ISO-8601 date `{raw_date}`: {e}"),
        })?;

        let mut prices = Vec::with_capacity(asset_ids.len());
        let mut index = None;
        for (c, field) in record.iter().enumerate().skip(1) {
            let column = &headers[c];
            if field.is_empty() {
                return Err(DataError::Cell {
                    row: line,
                    column: column.clone(),
                    message: "missing value".into(),
                });
            }
            let value: f64 = field.parse().map_err(|_| DataError::Cell {
                row: line,
                column: column.clone(),
                message: format!("not a number: `{field}`"),
            })?;
            if !value.is_finite() || value <= 0.0 {
                return Err(DataError::Cell {
                    row: line,
                    column: column.clone(),
                    message: format!("price must be positive and finite, got {value}"),
                });
            }
            if Some(c - 1) == index_pos {
                index = Some(value);
            } else {
                prices.push(value);
            }
        }
        rows.push((date, date.format("%Y-%m-%d").to_string(), prices, index));
    }

    rows.sort_by_key(|r| r.0);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(DataError::Validation(format!("duplicate date {}", pair[0].1)));
        }
    }

    let has_index = index_pos.is_some();
    let mut dates = Vec::with_capacity(rows.len());
    let mut prices = Vec::with_capacity(rows.len());
    let mut index = Vec::with_capacity(rows.len());
    for (_, label, p, ix) in rows {
        dates.push(label);
        prices.push(p);
        if let Some(v) = ix {
            index.push(v);
        }
    }

    Ok(PricePanel {
        dates,
        asset_ids,
        prices,
        index_name: has_index.then(|| index_col.to_owned()),
        index: has_index.then_some(index),
    })
}

fn csv_error(e: &csv::Error, fallback_row: u64) -> DataError {
    let row = e
        .position()
        .map(|p| p.line())
        .unwrap_or(fallback_row);
    DataError::Csv {
        row,
        message: e.to_string(),
    }
}

/// T periods of simple returns for N assets and the target index.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<String>,
    asset_ids: Vec<String>,
    returns: Matrix,
    index_returns: Vec<f64>,
}

impl ReturnsPanel {
    pub fn new(
        dates: Vec<String>,
        asset_ids: Vec<String>,
        returns: Matrix,
        index_returns: Vec<f64>,
    ) -> Result<Self, DataError> {
        let t = returns.len();
        let n = asset_ids.len();
        if n == 0 {
            return Err(DataError::Validation("panel has no assets".into()));
        }
        if dates.len() != t || index_returns.len() != t {
            return Err(DataError::Validation(format!(
                "shape mismatch: {} return rows, {} dates, {} index returns",
                t,
                dates.len(),
                index_returns.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(DataError::Validation(format!("duplicate asset id `{id}`")));
            }
        }
        for (row_idx, row) in returns.iter().enumerate() {
            if row.len() != n {
                return Err(DataError::Validation(format!(
                    "return row {row_idx} has {} columns, expected {n}",
                    row.len()
                )));
            }
            for (i, &r) in row.iter().enumerate() {
                check_return(r, || format!("asset `{}` period {row_idx}", asset_ids[i]))?;
            }
        }
        for (row_idx, &r) in index_returns.iter().enumerate() {
            check_return(r, || format!("index period {row_idx}"))?;
        }
        Ok(Self {
            dates,
            asset_ids,
            returns,
            index_returns,
        })
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    /// T×N matrix, one row per period.
    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn index_returns(&self) -> &[f64] {
        &self.index_returns
    }

    pub fn n_periods(&self) -> usize {
        self.returns.len()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    /// Per-asset arithmetic mean return.
    pub fn mean_returns(&self) -> Vec<f64> {
        let n = self.n_assets();
        let t = self.n_periods();
        let mut mean = vec![0.0; n];
        if t == 0 {
            return mean;
        }
        for row in &self.returns {
            for (m, r) in mean.iter_mut().zip(row) {
                *m += r;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        mean
    }

    /// Restricts the panel to the periods in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> ReturnsPanel {
        ReturnsPanel {
            dates: self.dates[range.clone()].to_vec(),
            asset_ids: self.asset_ids.clone(),
            returns: self.returns[range.clone()].to_vec(),
            index_returns: self.index_returns[range].to_vec(),
        }
    }
}

fn check_return(r: f64, what: impl FnOnce() -> String) -> Result<(), DataError> {
    if !r.is_finite() {
        return Err(DataError::Validation(format!("{}: non-finite return", what())));
    }
    if r <= -1.0 {
        return Err(DataError::Validation(format!(
            "{}: return {r} is at or below -100%",
            what()
        )));
    }
    Ok(())
}

/// Converts T+1 price rows into T simple returns. Each return is labelled
/// with the date at the end of its period.
pub fn to_returns(prices: &PricePanel) -> Result<ReturnsPanel, DataError> {
    if prices.n_rows() < 2 {
        return Err(DataError::Insufficient(format!(
            "need at least 2 price rows, got {}",
            prices.n_rows()
        )));
    }
    let index = prices.index.as_ref().ok_or_else(|| {
        DataError::MissingIndex(prices.index_name.clone().unwrap_or_else(|| "INDEX".into()))
    })?;

    let returns = prices
        .prices
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(p0, p1)| p1 / p0 - 1.0).collect())
        .collect();
    let index_returns = index.windows(2).map(|w| w[1] / w[0] - 1.0).collect();

    ReturnsPanel::new(
        prices.dates[1..].to_vec(),
        prices.asset_ids.clone(),
        returns,
        index_returns,
    )
}

/// Full-sample covariance plus one covariance matrix per complete trailing
/// window.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub full: Matrix,
    /// `rolling[k]` covers periods `[k, k + window)`.
    pub rolling: Vec<Matrix>,
    pub window: usize,
}

impl CovarianceSet {
    /// Covariance attached to period `t`: the trailing window ending at `t`,
    /// or the earliest complete window during warm-up.
    pub fn at_period(&self, t: usize) -> &Matrix {
        &self.rolling[window_start(t, self.window).min(self.rolling.len() - 1)]
    }

    pub fn n_periods_covered(&self) -> usize {
        self.rolling.len() + self.window - 1
    }
}

/// First row of the trailing window attached to period `t`.
pub fn window_start(t: usize, window: usize) -> usize {
    (t + 1).saturating_sub(window)
}

pub fn covariances(panel: &ReturnsPanel, window: usize) -> Result<CovarianceSet, DataError> {
    let t = panel.n_periods();
    if window < 2 {
        return Err(DataError::Validation(format!(
            "covariance window must be at least 2, got {window}"
        )));
    }
    if window > t {
        return Err(DataError::Insufficient(format!(
            "window {window} exceeds the {t} available periods"
        )));
    }
    let rows = panel.returns();
    let full = sample_covariance(rows);
    let rolling = (0..=t - window)
        .into_par_iter()
        .map(|k| sample_covariance(&rows[k..k + window]))
        .collect();
    Ok(CovarianceSet {
        full,
        rolling,
        window,
    })
}

/// Unbiased sample covariance of the given rows. Only the upper triangle is
/// summed; the lower triangle is a copy, so the result is exactly symmetric.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Matrix {
    let t = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; n];
    for row in rows {
        for (m, r) in mean.iter_mut().zip(row) {
            *m += r;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);

    let mut cov = vec![vec![0.0; n]; n];
    for row in rows {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in i..n {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (t as f64 - 1.0).max(1.0);
    for i in 0..n {
        for j in i..n {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// Sample variance (T−1 denominator) of every trailing window, aligned the
/// same way as [`CovarianceSet::at_period`].
pub fn rolling_variance(series: &[f64], window: usize) -> Result<Vec<f64>, DataError> {
    let t = series.len();
    if window < 2 || window > t {
        return Err(DataError::Insufficient(format!(
            "window {window} not usable for {t} periods"
        )));
    }
    let per_window: Vec<f64> = series
        .windows(window)
        .map(|w| {
            let rows: Vec<Vec<f64>> = w.iter().map(|&x| vec![x]).collect();
            sample_covariance(&rows)[0][0]
        })
        .collect();
    Ok((0..t)
        .map(|p| per_window[window_start(p, window).min(per_window.len() - 1)])
        .collect())
}
