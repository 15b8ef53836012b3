//! CSV loading, column profiling and the row/column cleaning operations.

mod recipe;
mod table;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use recipe::Recipe;
pub use table::{Cell, Column, ColumnKind, Table, Value};

/// Text columns with at most this many distinct values are inferred as categorical.
pub const DEFAULT_CATEGORICAL_MAX: usize = 1024;

/// Default minimum `%valid` for a column to survive [`drop_sparse_columns`].
pub const DEFAULT_MIN_VALID_PCT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub enum HeaderMode {
    /// First record holds the column names.
    Present,
    /// No header row; use these names.
    Absent(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub kind_hints: HashMap<String, ColumnKind>,
    /// Tokens read as missing, compared case-insensitively after trimming.
    /// The empty string is always missing.
    pub sentinels: Vec<String>,
    /// `None` sniffs the first line: tab if it has a tab and no comma, comma otherwise.
    pub delimiter: Option<u8>,
    pub header: HeaderMode,
    pub categorical_max: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            kind_hints: HashMap::new(),
            sentinels: vec!["NA".into(), "NaN".into()],
            delimiter: None,
            header: HeaderMode::Present,
            categorical_max: DEFAULT_CATEGORICAL_MAX,
        }
    }
}

impl LoadOptions {
    pub fn with_hint(mut self, column: impl Into<String>, kind: ColumnKind) -> Self {
        self.kind_hints.insert(column.into(), kind);
        self
    }

    fn is_missing(&self, raw: &str) -> bool {
        let t = raw.trim();
        t.is_empty() || self.sentinels.iter().any(|s| s.eq_ignore_ascii_case(t))
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let delimiter = match opts.delimiter {
        Some(d) => d,
        None => sniff_delimiter(&mut reader).map_err(|e| Error::io(path, e))?,
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv_with(reader, &name, delimiter, opts)
}

/// Reads comma-delimited CSV from any reader.
pub fn read_csv<R: Read>(reader: R, name: &str, opts: &LoadOptions) -> Result<Table> {
    read_csv_with(reader, name, opts.delimiter.unwrap_or(b','), opts)
}

fn sniff_delimiter<R: BufRead>(reader: &mut R) -> std::io::Result<u8> {
    let buf = reader.fill_buf()?;
    let line_end = buf.iter().position(|&b| b == b'\n').unwrap_or(buf.len());
    let line = &buf[..line_end];
    let tab = line.contains(&b'\t');
    let comma = line.contains(&b',');
    Ok(if tab && !comma { b'\t' } else { b',' })
}

fn read_csv_with<R: Read>(reader: R, name: &str, delimiter: u8, opts: &LoadOptions) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header: Vec<String> = match &opts.header {
        HeaderMode::Present => match records.next() {
            Some(r) => r?.iter().map(|s| s.trim().to_string()).collect(),
            None => return Err(Error::invalid("csv input has no header row")),
        },
        HeaderMode::Absent(names) => names.clone(),
    };
    let mut rows = Vec::new();
    for (row, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    build_table(name, &header, &rows, opts)
}

/// Builds a typed table from raw string records, applying hints, sentinels and kind inference.
pub fn build_table(name: &str, header: &[String], rows: &[Vec<String>], opts: &LoadOptions) -> Result<Table> {
    let mut columns = Vec::with_capacity(header.len());
    for (j, col_name) in header.iter().enumerate() {
        let raw: Vec<Option<&str>> = rows
            .iter()
            .map(|r| {
                let s = r[j].as_str();
                (!opts.is_missing(s)).then_some(s)
            })
            .collect();
        let column = match opts.kind_hints.get(col_name) {
            Some(&kind) => typed_column(col_name, kind, &raw),
            None => infer_column(col_name, &raw, opts.categorical_max),
        };
        columns.push(column);
    }
    let mut table = Table::new(name, columns)?;
    if header.is_empty() {
        table = Table::empty(name, rows.len());
    }
    Ok(table)
}

fn parse_int(s: &str) -> Option<i64> {
    s.trim().parse::<i64>().ok()
}

fn parse_real(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_any(s: &str) -> Value {
    if let Some(i) = parse_int(s) {
        Value::Int(i)
    } else if let Some(r) = parse_real(s) {
        Value::Real(r)
    } else {
        Value::Text(s.to_string())
    }
}

fn typed_column(name: &str, kind: ColumnKind, raw: &[Option<&str>]) -> Column {
    let cells = raw
        .iter()
        .map(|c| {
            let s = (*c)?;
            match kind {
                ColumnKind::Integer | ColumnKind::Timestamp => parse_int(s).map(Value::Int),
                ColumnKind::Real => parse_real(s).map(Value::Real),
                ColumnKind::Text | ColumnKind::Categorical => Some(Value::Text(s.to_string())),
                ColumnKind::Mixed => Some(parse_any(s)),
            }
        })
        .collect();
    Column::new(name, kind, cells)
}

fn infer_column(name: &str, raw: &[Option<&str>], categorical_max: usize) -> Column {
    let parsed: Vec<Option<Value>> = raw.iter().map(|c| c.map(parse_any)).collect();
    let (mut ints, mut reals, mut texts) = (false, false, false);
    for v in parsed.iter().flatten() {
        match v {
            Value::Int(_) => ints = true,
            Value::Real(_) => reals = true,
            Value::Text(_) => texts = true,
        }
    }
    let kind = match (ints, reals, texts) {
        (true, false, false) => ColumnKind::Integer,
        (_, true, false) => ColumnKind::Real,
        (false, false, true) => {
            let distinct: HashSet<&str> = raw.iter().flatten().copied().collect();
            if distinct.len() <= categorical_max {
                ColumnKind::Categorical
            } else {
                ColumnKind::Text
            }
        }
        (false, false, false) => ColumnKind::Text,
        _ => ColumnKind::Mixed,
    };
    let cells = match kind {
        ColumnKind::Real => parsed
            .into_iter()
            .map(|c| c.map(|v| Value::Real(v.as_f64().expect("numeric cell"))))
            .collect(),
        _ => parsed,
    };
    Column::new(name, kind, cells)
}

/// Writes RFC-4180 CSV with a header row. Missing cells become empty fields.
pub fn write_csv<W: Write>(table: &Table, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(table.column_names())?;
    let mut record = Vec::with_capacity(table.columns().len());
    for i in 0..table.row_count() {
        record.clear();
        for c in table.columns() {
            record.push(c.cells[i].as_ref().map(Value::to_string).unwrap_or_default());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(table, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub null_count: usize,
    pub not_null_count: usize,
    pub kind: ColumnKind,
    pub valid_pct: f64,
}

/// One profile per column in table order. A zero-row table reports 100% valid.
pub fn profile(table: &Table) -> Vec<ColumnProfile> {
    let n = table.row_count();
    table
        .columns()
        .iter()
        .map(|c| {
            let null_count = c.null_count();
            let not_null_count = n - null_count;
            let valid_pct = if n == 0 {
                100.0
            } else {
                100.0 * not_null_count as f64 / n as f64
            };
            ColumnProfile {
                name: c.name.clone(),
                null_count,
                not_null_count,
                kind: c.kind,
                valid_pct,
            }
        })
        .collect()
}

pub fn drop_columns<S: AsRef<str>>(table: &Table, names: &[S]) -> Result<Table> {
    for n in names {
        table.column(n.as_ref())?;
    }
    let drop: HashSet<&str> = names.iter().map(AsRef::as_ref).collect();
    let kept = table
        .columns()
        .iter()
        .filter(|c| !drop.contains(c.name.as_str()))
        .cloned()
        .collect::<Vec<_>>();
    rebuild(table, kept)
}

/// Keeps only the named columns, in the order given.
pub fn select_columns<S: AsRef<str>>(table: &Table, names: &[S]) -> Result<Table> {
    let kept = names
        .iter()
        .map(|n| table.column(n.as_ref()).cloned())
        .collect::<Result<Vec<_>>>()?;
    rebuild(table, kept)
}

fn rebuild(table: &Table, columns: Vec<Column>) -> Result<Table> {
    if columns.is_empty() {
        return Ok(Table::empty(table.name(), table.row_count()));
    }
    Table::new(table.name(), columns)
}

/// Drops every column whose `%valid` is below `min_valid_pct`.
pub fn drop_sparse_columns(table: &Table, min_valid_pct: f64) -> Result<Table> {
    let sparse: Vec<String> = profile(table)
        .into_iter()
        .filter(|p| p.valid_pct < min_valid_pct)
        .map(|p| p.name)
        .collect();
    drop_columns(table, &sparse)
}

/// Removes rows with a missing cell in `subset` (or in any column when `subset` is `None`).
pub fn drop_null_rows<S: AsRef<str>>(table: &Table, subset: Option<&[S]>) -> Result<Table> {
    let cols: Vec<&Column> = match subset {
        Some(names) => names
            .iter()
            .map(|n| table.column(n.as_ref()))
            .collect::<Result<_>>()?,
        None => table.columns().iter().collect(),
    };
    let keep: Vec<usize> = (0..table.row_count())
        .filter(|&i| cols.iter().all(|c| c.cells[i].is_some()))
        .collect();
    Ok(table.select_rows(&keep))
}

/// Parses `"(lat, lon)"` or WKT `"POINT (lon lat)"` into `(lat, lon)`.
pub fn parse_geolocation(s: &str) -> Option<(f64, f64)> {
    let t = s.trim();
    let upper = t.get(..5).map(|p| p.eq_ignore_ascii_case("point")).unwrap_or(false);
    if upper {
        let inner = t[5..].trim().strip_prefix('(')?.strip_suffix(')')?;
        let mut it = inner.split_whitespace();
        let lon = parse_real(it.next()?)?;
        let lat = parse_real(it.next()?)?;
        if it.next().is_some() {
            return None;
        }
        Some((lat, lon))
    } else {
        let inner = t.strip_prefix('(')?.strip_suffix(')')?;
        let (a, b) = inner.split_once(',')?;
        Some((parse_real(a)?, parse_real(b)?))
    }
}

/// Replaces `col` with real columns `Geo_lat` and `Geo_lon` at the same position.
pub fn decompose_geolocation(table: &Table, col: &str) -> Result<Table> {
    let idx = table
        .column_index(col)
        .ok_or_else(|| Error::UnknownColumn(col.to_string()))?;
    let source = &table.columns()[idx];
    let (lat, lon): (Vec<Cell>, Vec<Cell>) = source
        .cells
        .iter()
        .map(|c| match c.as_ref().and_then(|v| parse_geolocation(&v.to_string())) {
            Some((la, lo)) => (Some(Value::Real(la)), Some(Value::Real(lo))),
            None => (None, None),
        })
        .unzip();
    let mut columns = table.columns().to_vec();
    columns.splice(
        idx..=idx,
        [
            Column::new("Geo_lat", ColumnKind::Real, lat),
            Column::new("Geo_lon", ColumnKind::Real, lon),
        ],
    );
    Table::new(table.name(), columns)
}

/// Parses a `MM-DD-YYYY` date and an `HH:MM` time (UTC) into Unix seconds.
pub fn parse_datetime(date: &str, time: &str) -> Option<i64> {
    let mut d = date.trim().split('-');
    let month: u32 = d.next()?.trim().parse().ok()?;
    let day: u32 = d.next()?.trim().parse().ok()?;
    let year: i32 = d.next()?.trim().parse().ok()?;
    if d.next().is_some() {
        return None;
    }
    let (h, m) = time.trim().split_once(':')?;
    let hour: u32 = h.trim().parse().ok()?;
    let minute: u32 = m.trim().parse().ok()?;
    let dt = NaiveDate::from_ymd_opt(year, month, day)?.and_hms_opt(hour, minute, 0)?;
    Some(dt.and_utc().timestamp())
}

/// Fuses a date and a time column into a `timestamp` column (Unix seconds, UTC)
/// placed where the date column was. Both source columns are removed.
pub fn combine_datetime(table: &Table, date_col: &str, time_col: &str) -> Result<Table> {
    let date_idx = table
        .column_index(date_col)
        .ok_or_else(|| Error::UnknownColumn(date_col.to_string()))?;
    let time = table.column(time_col)?;
    let date = &table.columns()[date_idx];
    let cells: Vec<Cell> = date
        .cells
        .iter()
        .zip(&time.cells)
        .map(|(d, t)| match (d, t) {
            (Some(d), Some(t)) => parse_datetime(&d.to_string(), &t.to_string()).map(Value::Int),
            _ => None,
        })
        .collect();
    let mut columns = Vec::with_capacity(table.columns().len() - 1);
    for (j, c) in table.columns().iter().enumerate() {
        if j == date_idx {
            columns.push(Column::new("timestamp", ColumnKind::Timestamp, cells.clone()));
        } else if c.name != time_col {
            columns.push(c.clone());
        }
    }
    Table::new(table.name(), columns)
}
