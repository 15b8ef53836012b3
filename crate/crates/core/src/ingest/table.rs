use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Integer,
    Real,
    Text,
    Categorical,
    Mixed,
    Timestamp,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Integer | ColumnKind::Real | ColumnKind::Timestamp)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Integer => "integer",
            ColumnKind::Real => "real",
            ColumnKind::Text => "text",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Mixed => "mixed",
            ColumnKind::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "integer" | "int" => Ok(ColumnKind::Integer),
            "real" | "float" => Ok(ColumnKind::Real),
            "text" | "string" => Ok(ColumnKind::Text),
            "categorical" => Ok(ColumnKind::Categorical),
            "mixed" => Ok(ColumnKind::Mixed),
            "timestamp" => Ok(ColumnKind::Timestamp),
            other => Err(Error::invalid(format!("unknown column kind `{other}`"))),
        }
    }
}

/// A single non-missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Real(r) => Some(r),
            Value::Text(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            // Debug keeps a trailing ".0" so integral reals reload as reals.
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

pub type Cell = Option<Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub cells: Vec<Cell>,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind, cells: Vec<Cell>) -> Self {
        Column {
            name: name.into(),
            kind,
            cells,
        }
    }

    pub fn null_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }
}

/// Columnar table. Immutable once built; every transformation returns a new table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    row_count: usize,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let row_count = columns.first().map_or(0, |c| c.cells.len());
        let mut seen = HashSet::new();
        for c in &columns {
            if c.cells.len() != row_count {
                return Err(Error::DimensionMismatch {
                    expected: row_count,
                    found: c.cells.len(),
                });
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Table {
            name: name.into(),
            columns,
            row_count,
        })
    }

    /// A table with no columns but a fixed number of rows.
    pub fn empty(name: impl Into<String>, row_count: usize) -> Self {
        Table {
            name: name.into(),
            columns: Vec::new(),
            row_count,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Looks a column up ignoring case, spaces and underscores, so
    /// `Year Start`, `YearStart` and `year_start` all resolve to the same column.
    pub fn resolve(&self, name: &str) -> Result<&str> {
        let key = normalize_name(name);
        self.columns
            .iter()
            .find(|c| normalize_name(&c.name) == key)
            .map(|c| c.name.as_str())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| c.cells.iter().any(Option::is_none))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                kind: c.kind,
                cells: indices.iter().map(|&i| c.cells[i].clone()).collect(),
            })
            .collect();
        Table {
            name: self.name.clone(),
            columns,
            row_count: indices.len(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Appends a column, returning an error on length mismatch or a duplicate name.
    pub fn with_column(self, column: Column) -> Result<Table> {
        let name = self.name.clone();
        let rows = self.row_count;
        if column.cells.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: column.cells.len(),
            });
        }
        let mut columns = self.columns;
        columns.push(column);
        let t = Table::new(name, columns)?;
        Ok(t)
    }
}

fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .flat_map(char::to_lowercase)
        .collect()
}
