//! Loading and calendar alignment of the external data feeds.
//!
//! Every feed is a headed CSV with an ISO-8601 date (or fiscal year) column
//! and a decimal value column. Loaders validate, sort and reject non-finite
//! values; [`align_calendars`] inner-joins several series onto the dates
//! they all share.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("fiscal year {0} appears more than once")]
    DuplicateYear(i32),
    #[error("date {0} appears more than once")]
    DuplicateDate(NaiveDate),
    #[error("calendar dates must be strictly increasing")]
    UnorderedCalendar,
    #[error("series length {values} does not match calendar length {dates}")]
    LengthMismatch { dates: usize, values: usize },
    #[error("the input calendars share no common date")]
    EmptyIntersection,
    #[error("no series supplied")]
    NoSeries,
    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Ordered list of trading dates.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IngestError::UnorderedCalendar);
        }
        Ok(Self { dates })
    }

    /// Consecutive business days (Mon-Fri) starting at `start`, skipping weekends.
    pub fn business_days(start: NaiveDate, count: usize) -> Self {
        use chrono::{Datelike, Weekday};
        let mut dates = Vec::with_capacity(count);
        let mut d = start;
        while dates.len() < count {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                dates.push(d);
            }
            d = d.succ_opt().expect("date overflow");
        }
        Self { dates }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn first(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// Index of the last date `<= date`, if any.
    pub fn last_on_or_before(&self, date: NaiveDate) -> Option<usize> {
        match self.dates.partition_point(|d| *d <= date) {
            0 => None,
            i => Some(i - 1),
        }
    }

    /// Calendar without its first date; the carrier of one-step changes.
    pub fn tail(&self) -> Self {
        Self {
            dates: self.dates.iter().skip(1).copied().collect(),
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            dates: self.dates[start..end].to_vec(),
        }
    }
}

/// Dated asset values (stock price, index level, ESG-adjusted value, or β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    calendar: TradingCalendar,
    values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(calendar: TradingCalendar, values: Vec<f64>) -> Result<Self> {
        check_lengths(&calendar, &values)?;
        Ok(Self { calendar, values })
    }

    /// Builds a series on a synthetic business-day calendar starting 2016-01-04.
    pub fn from_values(values: Vec<f64>) -> Self {
        let start = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let calendar = TradingCalendar::business_days(start, values.len());
        Self { calendar, values }
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Restricts the series to the index window `[start, end)`.
    pub fn window(&self, start: usize, end: usize) -> Self {
        Self {
            calendar: self.calendar.slice(start, end),
            values: self.values[start..end].to_vec(),
        }
    }
}

/// Annualized yields (fractions per year) on a trading calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    calendar: TradingCalendar,
    annualized_yield: Vec<f64>,
}

impl RateSeries {
    pub fn new(calendar: TradingCalendar, annualized_yield: Vec<f64>) -> Result<Self> {
        check_lengths(&calendar, &annualized_yield)?;
        Ok(Self {
            calendar,
            annualized_yield,
        })
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn annualized_yield(&self) -> &[f64] {
        &self.annualized_yield
    }

    pub fn len(&self) -> usize {
        self.annualized_yield.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annualized_yield.is_empty()
    }
}

/// Fiscal-year ESG scores on the 0-10 scale, sorted by year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiscalEsgTable {
    entries: Vec<(i32, f64)>,
}

impl FiscalEsgTable {
    pub fn new(mut entries: Vec<(i32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IngestError::DuplicateYear(w[0].0));
        }
        if let Some(&(year, s)) = entries.iter().find(|e| !e.1.is_finite() || e.1 < 0.0) {
            return Err(IngestError::Parse {
                line: 0,
                message: format!("fiscal year {year}: score {s} must be finite and non-negative"),
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(i32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_lengths(calendar: &TradingCalendar, values: &[f64]) -> Result<()> {
    if calendar.len() != values.len() {
        return Err(IngestError::LengthMismatch {
            dates: calendar.len(),
            values: values.len(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(IngestError::Parse {
            line: 0,
            message: format!("non-finite value on {}", calendar.dates()[i]),
        });
    }
    Ok(())
}

/// Selects a CSV column by zero-based position or by header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

/// Which columns hold the date and the value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Columns {
    pub date: ColumnRef,
    pub value: ColumnRef,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            date: ColumnRef::Index(0),
            value: ColumnRef::Index(1),
        }
    }
}

impl Columns {
    fn resolve(&self, headers: &csv::StringRecord) -> Result<(usize, usize)> {
        let find = |c: &ColumnRef| match c {
            ColumnRef::Index(i) if *i < headers.len() => Ok(*i),
            ColumnRef::Index(i) => Err(IngestError::Parse {
                line: 1,
                message: format!("column index {i} out of range ({} columns)", headers.len()),
            }),
            ColumnRef::Name(n) => headers
                .iter()
                .position(|h| h.trim() == n)
                .ok_or_else(|| IngestError::Parse {
                    line: 1,
                    message: format!("no column named {n:?}"),
                }),
        };
        Ok((find(&self.date)?, find(&self.value)?))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_real(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| IngestError::Parse {
        line,
        message: format!("value {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Parse {
            line,
            message: format!("value {field:?} is not finite"),
        });
    }
    Ok(v)
}

fn parse_date(field: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|e| IngestError::Parse {
        line,
        message: format!("date {field:?}: {e}"),
    })
}

/// Reads (date, value) pairs, sorted by date, rejecting duplicates.
fn read_dated<R: Read>(reader: R, columns: &Columns) -> Result<(TradingCalendar, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let (di, vi) = columns.resolve(&headers)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| {
            rec.get(i).ok_or_else(|| IngestError::Parse {
                line,
                message: format!("missing column {i}"),
            })
        };
        rows.push((parse_date(get(di)?, line)?, parse_real(get(vi)?, line)?));
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateDate(w[0].0));
    }
    let (dates, values) = rows.into_iter().unzip();
    Ok((TradingCalendar { dates }, values))
}

pub fn read_price_series<R: Read>(reader: R, columns: &Columns) -> Result<PriceSeries> {
    let (calendar, values) = read_dated(reader, columns)?;
    Ok(PriceSeries { calendar, values })
}

/// Loads a dated price CSV (header, date column, value column).
pub fn load_price_series(path: impl AsRef<Path>, columns: &Columns) -> Result<PriceSeries> {
    read_price_series(open(path.as_ref())?, columns)
}

pub fn read_esg_fiscal_scores<R: Read>(reader: R) -> Result<FiscalEsgTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let (Some(y), Some(s)) = (rec.get(0), rec.get(1)) else {
            return Err(IngestError::Parse {
                line,
                message: "expected (year, score)".into(),
            });
        };
        let year: i32 = y.trim().parse().map_err(|_| IngestError::Parse {
            line,
            message: format!("fiscal year {y:?} is not an integer"),
        })?;
        let score = parse_real(s, line)?;
        if score < 0.0 {
            return Err(IngestError::Parse {
                line,
                message: format!("negative ESG score {score}"),
            });
        }
        if !seen.insert(year) {
            return Err(IngestError::DuplicateYear(year));
        }
        entries.push((year, score));
    }
    if entries.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    FiscalEsgTable::new(entries)
}

/// Loads a fiscal-year ESG table (header, year, score).
pub fn load_esg_fiscal_scores(path: impl AsRef<Path>) -> Result<FiscalEsgTable> {
    read_esg_fiscal_scores(open(path.as_ref())?)
}

pub fn read_treasury_rates<R: Read>(reader: R, percent: bool) -> Result<RateSeries> {
    let (calendar, mut values) = read_dated(reader, &Columns::default())?;
    if percent {
        values.iter_mut().for_each(|v| *v /= 100.0);
    }
    Ok(RateSeries {
        calendar,
        annualized_yield: values,
    })
}

/// Loads annualized treasury yields. With `percent`, the column is divided by 100.
/// Negative yields are accepted.
pub fn load_treasury_rates(path: impl AsRef<Path>, percent: bool) -> Result<RateSeries> {
    read_treasury_rates(open(path.as_ref())?, percent)
}

fn write_dated<W: Write>(
    writer: W,
    header: [&str; 2],
    calendar: &TradingCalendar,
    values: &[f64],
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for (d, v) in calendar.dates().iter().zip(values) {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        w.write_record([d.to_string(), v.to_string()])?;
    }
    w.flush()
}

pub fn write_price_series<W: Write>(writer: W, series: &PriceSeries) -> std::io::Result<()> {
    write_dated(writer, ["date", "value"], &series.calendar, &series.values)
}

pub fn write_rate_series<W: Write>(writer: W, series: &RateSeries) -> std::io::Result<()> {
    write_dated(writer, ["date", "yield"], &series.calendar, &series.annualized_yield)
}

pub fn write_esg_table<W: Write>(writer: W, table: &FiscalEsgTable) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fiscal_year", "score"])?;
    for (y, s) in table.entries() {
        w.write_record([y.to_string(), s.to_string()])?;
    }
    w.flush()
}

/// Anything carried on a trading calendar that can be cut down to a subset of it.
pub trait Dated: Sized {
    fn calendar(&self) -> &TradingCalendar;
    /// Keeps only the dates in `keep`, which must be a subset of this calendar.
    fn restrict(&self, keep: &TradingCalendar) -> Self;
}

fn restrict_values(from: &TradingCalendar, values: &[f64], keep: &TradingCalendar) -> Vec<f64> {
    let mut out = Vec::with_capacity(keep.len());
    let mut j = 0;
    for d in keep.dates() {
        while from.dates[j] < *d {
            j += 1;
        }
        debug_assert_eq!(from.dates[j], *d);
        out.push(values[j]);
    }
    out
}

impl Dated for PriceSeries {
    fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    fn restrict(&self, keep: &TradingCalendar) -> Self {
        Self {
            calendar: keep.clone(),
            values: restrict_values(&self.calendar, &self.values, keep),
        }
    }
}

impl Dated for RateSeries {
    fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    fn restrict(&self, keep: &TradingCalendar) -> Self {
        Self {
            calendar: keep.clone(),
            annualized_yield: restrict_values(&self.calendar, &self.annualized_yield, keep),
        }
    }
}

/// Dates present in every calendar.
pub fn common_calendar(calendars: &[&TradingCalendar]) -> Result<TradingCalendar> {
    let (first, rest) = calendars.split_first().ok_or(IngestError::NoSeries)?;
    let mut dates: Vec<NaiveDate> = first.dates.clone();
    for cal in rest {
        let other: BTreeSet<_> = cal.dates.iter().collect();
        dates.retain(|d| other.contains(d));
    }
    if dates.is_empty() {
        return Err(IngestError::EmptyIntersection);
    }
    Ok(TradingCalendar { dates })
}

/// Output of [`align_calendars`]: the restricted series and the number of
/// dates each input lost.
#[derive(Debug, Clone)]
pub struct Aligned<T> {
    pub series: Vec<T>,
    pub calendar: TradingCalendar,
    pub dropped: Vec<usize>,
}

impl<T> Aligned<T> {
    pub fn total_dropped(&self) -> usize {
        self.dropped.iter().sum()
    }
}

/// Inner-joins homogeneous series on the dates they all share. Missing dates
/// are dropped, never filled.
pub fn align_calendars<T: Dated>(series: &[T]) -> Result<Aligned<T>> {
    let cals: Vec<&TradingCalendar> = series.iter().map(Dated::calendar).collect();
    let calendar = common_calendar(&cals)?;
    let dropped = cals.iter().map(|c| c.len() - calendar.len()).collect();
    let series = series.iter().map(|s| s.restrict(&calendar)).collect();
    Ok(Aligned {
        series,
        calendar,
        dropped,
    })
}

/// Per-ticker inputs of a batch run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub prices: PathBuf,
    pub esg: PathBuf,
}

/// Ticker -> {price file, ESG file}. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub entries: BTreeMap<String, ManifestEntry>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let mut manifest: Manifest =
        serde_json::from_reader(open(path)?).map_err(|e| IngestError::Manifest(e.to_string()))?;
    if manifest.entries.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for entry in manifest.entries.values_mut() {
        if entry.prices.is_relative() {
            entry.prices = base.join(&entry.prices);
        }
        if entry.esg.is_relative() {
            entry.esg = base.join(&entry.esg);
        }
    }
    Ok(manifest)
}
