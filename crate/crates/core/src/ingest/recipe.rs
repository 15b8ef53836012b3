//! Built-in cleaning recipes for the two lifelog datasets.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    decompose_geolocation, drop_null_rows, drop_sparse_columns, load_csv, parse_datetime,
    select_columns, ColumnKind, HeaderMode, LoadOptions, Table, DEFAULT_MIN_VALID_PCT,
};
use crate::error::{Error, Result};

/// US-CDI columns kept after dropping redundant and mostly-null attributes.
/// `Geo Location` appears once even though it is listed twice in the source notes.
pub const US_CDI_COLUMNS: [&str; 14] = [
    "Year Start",
    "Year End",
    "Location ID",
    "Data Source",
    "Topic ID",
    "Data Value Unit",
    "Data Value Type ID",
    "Data Value",
    "Low Confidence Limit",
    "High Confidence Limit",
    "Geo Location",
    "Question ID",
    "Stratification ID1",
    "Stratification Category ID1",
];

/// Features the US-CDI labels are clustered on.
pub const US_CDI_LABEL_FEATURES: [&str; 5] = [
    "Data Value",
    "Low Confidence Limit",
    "High Confidence Limit",
    "Geo_lat",
    "Geo_lon",
];

pub const DIABETES_COLUMNS: [&str; 4] = ["Date", "Time", "Code", "Value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// Drop columns under the valid-percentage threshold, then rows with nulls.
    Generic,
    UsCdi,
    UciDiabetes,
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" | "none" => Ok(Recipe::Generic),
            "us-cdi" => Ok(Recipe::UsCdi),
            "uci-diabetes" => Ok(Recipe::UciDiabetes),
            other => Err(Error::invalid(format!(
                "unknown recipe `{other}` (expected generic, us-cdi or uci-diabetes)"
            ))),
        }
    }
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Generic => "generic",
            Recipe::UsCdi => "us-cdi",
            Recipe::UciDiabetes => "uci-diabetes",
        }
    }

    /// Load options for the raw export. The diabetes files may be headerless and
    /// tab-separated; that is detected from the first line.
    pub fn load_options(self, path: &Path) -> Result<LoadOptions> {
        let mut opts = LoadOptions::default();
        match self {
            Recipe::Generic => {}
            Recipe::UsCdi => {
                // Real exports spell these both with and without spaces.
                for name in ["Data Value", "DataValue", "Low Confidence Limit", "LowConfidenceLimit",
                    "High Confidence Limit", "HighConfidenceLimit"]
                {
                    opts.kind_hints.insert(name.to_string(), ColumnKind::Real);
                }
            }
            Recipe::UciDiabetes => {
                let first = first_line(path)?;
                let field = first.split(['\t', ',']).next().unwrap_or_default();
                if parse_datetime(field, "00:00").is_some() {
                    opts.header = HeaderMode::Absent(DIABETES_COLUMNS.iter().map(|s| s.to_string()).collect());
                }
                opts.kind_hints.insert("Code".into(), ColumnKind::Integer);
                opts.kind_hints.insert("Value".into(), ColumnKind::Real);
                opts.kind_hints.insert("Date".into(), ColumnKind::Text);
                opts.kind_hints.insert("Time".into(), ColumnKind::Text);
            }
        }
        Ok(opts)
    }

    pub fn load(self, path: impl AsRef<Path>) -> Result<Table> {
        let path = path.as_ref();
        let opts = self.load_options(path)?;
        load_csv(path, &opts)
    }

    /// Runs the cleaning and preparation sequence on a loaded table.
    pub fn apply(self, table: &Table) -> Result<Table> {
        match self {
            Recipe::Generic => {
                let t = drop_sparse_columns(table, DEFAULT_MIN_VALID_PCT)?;
                drop_null_rows::<&str>(&t, None)
            }
            Recipe::UsCdi => {
                let names = US_CDI_COLUMNS
                    .iter()
                    .map(|n| table.resolve(n).map(str::to_string))
                    .collect::<Result<Vec<_>>>()?;
                let geo = table.resolve("Geo Location")?.to_string();
                let t = select_columns(table, &names)?;
                let t = drop_null_rows::<&str>(&t, None)?;
                let t = decompose_geolocation(&t, &geo)?;
                drop_null_rows::<&str>(&t, None)
            }
            Recipe::UciDiabetes => {
                let names = DIABETES_COLUMNS
                    .iter()
                    .map(|n| table.resolve(n).map(str::to_string))
                    .collect::<Result<Vec<_>>>()?;
                let t = select_columns(table, &names)?;
                let t = drop_null_rows::<&str>(&t, None)?;
                let t = super::combine_datetime(&t, &names[0], &names[1])?;
                drop_null_rows::<&str>(&t, None)
            }
        }
    }

    /// Columns the cluster labels are derived from; `None` means every feature.
    pub fn label_features(self, table: &Table) -> Result<Option<Vec<String>>> {
        match self {
            Recipe::UsCdi => US_CDI_LABEL_FEATURES
                .iter()
                .map(|n| table.resolve(n).map(str::to_string))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Recipe::Generic | Recipe::UciDiabetes => Ok(None),
        }
    }
}

fn first_line(path: &Path) -> Result<String> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(f)
        .read_line(&mut line)
        .map_err(|e| Error::io(path, e))?;
    Ok(line)
}
