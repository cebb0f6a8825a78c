//! Price ingestion, log-price panels and spread construction.
//!
//! The canonical price file is a CSV with header `date,<ticker1>,...,<tickerM>`,
//! ISO-8601 dates and decimal prices. Prices are converted to natural-log
//! prices on ingestion; everything downstream works on log-prices.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{invalid, MrpError, Result};

/// Aligned, dated log-price series for `M` assets (`T x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    log_prices: DMatrix<f64>,
}

impl AssetPanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, log_prices: DMatrix<f64>) -> Result<Self> {
        if log_prices.nrows() != dates.len() {
            return Err(MrpError::DimensionMismatch {
                what: "panel rows vs dates",
                expected: dates.len(),
                found: log_prices.nrows(),
            });
        }
        if log_prices.ncols() != tickers.len() {
            return Err(MrpError::DimensionMismatch {
                what: "panel columns vs tickers",
                expected: tickers.len(),
                found: log_prices.ncols(),
            });
        }
        if tickers.is_empty() {
            return Err(invalid("panel needs at least one asset"));
        }
        if dates.len() < 2 {
            return Err(MrpError::InsufficientData(format!(
                "panel needs at least 2 rows, got {}",
                dates.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(invalid(format!(
                "dates must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        if log_prices.iter().any(|v| !v.is_finite()) {
            return Err(invalid("log-prices must be finite"));
        }
        let unique: HashSet<&String> = tickers.iter().collect();
        if unique.len() != tickers.len() {
            return Err(invalid("duplicate ticker in panel"));
        }
        Ok(Self {
            dates,
            tickers,
            log_prices,
        })
    }

    /// Builds a panel from raw (positive) prices.
    pub fn from_prices(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: &DMatrix<f64>) -> Result<Self> {
        for (row, r) in prices.row_iter().enumerate() {
            for (col, &p) in r.iter().enumerate() {
                if !(p > 0.0) || !p.is_finite() {
                    return Err(MrpError::NonPositivePrice {
                        row: row + 1,
                        date: dates.get(row).map(|d| d.to_string()).unwrap_or_default(),
                        ticker: tickers.get(col).cloned().unwrap_or_default(),
                        value: p,
                    });
                }
            }
        }
        Self::new(dates, tickers, prices.map(f64::ln))
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// `T x M` matrix of natural-log prices.
    pub fn log_prices(&self) -> &DMatrix<f64> {
        &self.log_prices
    }

    pub fn num_periods(&self) -> usize {
        self.log_prices.nrows()
    }

    pub fn num_assets(&self) -> usize {
        self.log_prices.ncols()
    }

    /// Raw prices, `exp(log_prices)`.
    pub fn prices(&self) -> DMatrix<f64> {
        self.log_prices.map(f64::exp)
    }

    /// Panel restricted to the first `len` periods.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len > self.num_periods() {
            return Err(invalid(format!(
                "prefix length {len} exceeds panel length {}",
                self.num_periods()
            )));
        }
        Self::new(
            self.dates[..len].to_vec(),
            self.tickers.clone(),
            self.log_prices.rows(0, len).into_owned(),
        )
    }
}

/// Cointegration basis `B` (`M x N`, columns are spread vectors) plus the
/// leverage budget `L` bounding `||B w||_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadBasis {
    basis: DMatrix<f64>,
    leverage_budget: f64,
}

impl SpreadBasis {
    pub fn new(basis: DMatrix<f64>, leverage_budget: f64) -> Result<Self> {
        let (m, n) = basis.shape();
        if n == 0 {
            return Err(invalid("basis needs at least one spread column"));
        }
        if n > m {
            return Err(invalid(format!(
                "basis has more spreads ({n}) than assets ({m})"
            )));
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(invalid("basis entries must be finite"));
        }
        if let Some(j) = basis.column_iter().position(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(invalid(format!("basis column {j} is all zero")));
        }
        if !(leverage_budget > 0.0) || !leverage_budget.is_finite() {
            return Err(invalid(format!(
                "leverage budget must be positive, got {leverage_budget}"
            )));
        }
        Ok(Self {
            basis,
            leverage_budget,
        })
    }

    pub fn identity(n: usize, leverage_budget: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n), leverage_budget)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn leverage_budget(&self) -> f64 {
        self.leverage_budget
    }

    pub fn num_assets(&self) -> usize {
        self.basis.nrows()
    }

    pub fn num_spreads(&self) -> usize {
        self.basis.ncols()
    }

    pub fn with_budget(&self, leverage_budget: f64) -> Result<Self> {
        Self::new(self.basis.clone(), leverage_budget)
    }
}

/// Spread values `s_t = B' y_t`, stored as a `T x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadSeries {
    values: DMatrix<f64>,
}

impl SpreadSeries {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("spread values must be finite"));
        }
        if values.ncols() == 0 {
            return Err(invalid("spread series needs at least one column"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn num_periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_spreads(&self) -> usize {
        self.values.ncols()
    }
}

pub fn build_spreads(panel: &AssetPanel, basis: &SpreadBasis) -> Result<SpreadSeries> {
    if basis.num_assets() != panel.num_assets() {
        return Err(MrpError::DimensionMismatch {
            what: "basis rows vs panel assets",
            expected: panel.num_assets(),
            found: basis.num_assets(),
        });
    }
    SpreadSeries::new(panel.log_prices() * basis.matrix())
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") || f.eq_ignore_ascii_case("null")
}

/// Loads a price CSV from disk. See [`read_panel`].
pub fn load_panel(path: impl AsRef<Path>) -> Result<AssetPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| MrpError::io(path, e))?;
    read_panel(file)
}

/// Parses a price CSV. Rows are sorted by date, rows with any missing price
/// are dropped and the natural log is applied elementwise.
pub fn read_panel<R: Read>(reader: R) -> Result<AssetPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(invalid(
            "price file needs a date column and at least one price column",
        ));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != header.len() {
            return Err(invalid(format!(
                "row {row}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let date_field = &record[0];
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d")
            .map_err(|e| invalid(format!("row {row}: bad date {date_field:?}: {e}")))?;
        let mut prices = Vec::with_capacity(tickers.len());
        let mut complete = true;
        for (field, ticker) in record.iter().skip(1).zip(&tickers) {
            if is_missing(field) {
                complete = false;
                continue;
            }
            let value: f64 = field.parse().map_err(|_| {
                invalid(format!("row {row}: price {field:?} for {ticker} is not a number"))
            })?;
            if !(value > 0.0) || !value.is_finite() {
                return Err(MrpError::NonPositivePrice {
                    row,
                    date: date.to_string(),
                    ticker: ticker.clone(),
                    value,
                });
            }
            prices.push(value);
        }
        if complete {
            rows.push((date, prices));
        }
    }

    rows.sort_by_key(|(d, _)| *d);
    if rows.len() < 2 {
        return Err(MrpError::InsufficientData(format!(
            "need at least 2 complete rows, found {}",
            rows.len()
        )));
    }
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(invalid(format!("duplicate date {}", w[0].0)));
    }

    let t = rows.len();
    let m = tickers.len();
    let log_prices = DMatrix::from_fn(t, m, |i, j| rows[i].1[j].ln());
    let dates = rows.into_iter().map(|(d, _)| d).collect();
    AssetPanel::new(dates, tickers, log_prices)
}

/// Writes raw prices (`exp` of the panel) in the canonical CSV format.
pub fn write_panel<W: Write>(panel: &AssetPanel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_owned()];
    header.extend(panel.tickers().iter().cloned());
    wtr.write_record(&header)?;
    for (i, date) in panel.dates().iter().enumerate() {
        let mut rec = vec![date.to_string()];
        rec.extend(panel.log_prices().row(i).iter().map(|v| v.exp().to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| MrpError::io("<price writer>", e))?;
    Ok(())
}

/// Loads a basis CSV with header `ticker,<spread1>,...,<spreadN>`, one row per
/// asset. Rows are reordered to match `tickers`.
pub fn load_basis(path: impl AsRef<Path>, tickers: &[String], leverage_budget: f64) -> Result<SpreadBasis> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| MrpError::io(path, e))?;
    read_basis(file, tickers, leverage_budget)
}

pub fn read_basis<R: Read>(reader: R, tickers: &[String], leverage_budget: f64) -> Result<SpreadBasis> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let n = header.len().saturating_sub(1);
    if n == 0 {
        return Err(invalid("basis file needs a ticker column and at least one spread column"));
    }
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(invalid(format!(
                "basis row {}: expected {} fields, found {}",
                idx + 1,
                header.len(),
                record.len()
            )));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| invalid(format!("basis row {}: {f:?} is not a number", idx + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((record[0].to_owned(), values));
    }
    if rows.len() != tickers.len() {
        return Err(MrpError::DimensionMismatch {
            what: "basis rows vs panel assets",
            expected: tickers.len(),
            found: rows.len(),
        });
    }
    let mut matrix = DMatrix::zeros(tickers.len(), n);
    for (i, ticker) in tickers.iter().enumerate() {
        let (_, values) = rows
            .iter()
            .find(|(t, _)| t == ticker)
            .ok_or_else(|| invalid(format!("basis file has no row for ticker {ticker}")))?;
        for (j, v) in values.iter().enumerate() {
            matrix[(i, j)] = *v;
        }
    }
    SpreadBasis::new(matrix, leverage_budget)
}

pub fn write_basis<W: Write>(basis: &SpreadBasis, tickers: &[String], writer: W) -> Result<()> {
    if tickers.len() != basis.num_assets() {
        return Err(MrpError::DimensionMismatch {
            what: "tickers vs basis rows",
            expected: basis.num_assets(),
            found: tickers.len(),
        });
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["ticker".to_owned()];
    header.extend((1..=basis.num_spreads()).map(|j| format!("spread_{j}")));
    wtr.write_record(&header)?;
    for (i, ticker) in tickers.iter().enumerate() {
        let mut rec = vec![ticker.clone()];
        rec.extend(basis.matrix().row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| MrpError::io("<basis writer>", e))?;
    Ok(())
}
