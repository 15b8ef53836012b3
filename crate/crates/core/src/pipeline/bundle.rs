use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::{Classifier, ClassifierModel};
use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, LoadOptions, Recipe, Table};
use crate::pca::PcaModel;
use crate::preprocess::{labels_from_column, Encoder, FeatureMatrix, Scaler};

pub const BUNDLE_VERSION: &str = "ofsulr-bundle/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    /// RFC 3339, UTC.
    pub created_at: String,
    pub tool_version: String,
}

/// Everything needed to score new rows of a cleaned table: the encoder,
/// scaler, PCA projection and classifier, frozen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: String,
    pub recipe: Recipe,
    /// Columns of the cleaned table, in order, with their kinds.
    pub schema: Vec<SchemaColumn>,
    pub label_column: String,
    pub encoder: Encoder,
    pub scaler: Scaler,
    pub pca: PcaModel,
    pub classifier: ClassifierModel,
    pub provenance: Provenance,
}

impl ModelBundle {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("bundle serialises");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelBundle::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<ModelBundle> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptBundle(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::CorruptBundle("missing version tag".into()))?;
        if version != BUNDLE_VERSION {
            return Err(Error::BundleVersion {
                found: version.to_string(),
                expected: BUNDLE_VERSION.to_string(),
            });
        }
        serde_json::from_value(value).map_err(|e| Error::CorruptBundle(e.to_string()))
    }

    /// Load options that parse a cleaned CSV with the training-time kinds.
    pub fn load_options(&self) -> LoadOptions {
        let mut opts = LoadOptions::default();
        for c in &self.schema {
            opts.kind_hints.insert(c.name.clone(), c.kind);
        }
        opts.kind_hints.insert(self.label_column.clone(), ColumnKind::Integer);
        opts
    }

    /// Encoded, scaled and projected features for a cleaned table.
    pub fn features(&self, table: &Table) -> Result<FeatureMatrix> {
        let x = self.encoder.transform(table)?;
        let x = self.scaler.apply(&x)?;
        self.pca.transform(&x)
    }

    /// Predictions and scores for every row of `table`.
    pub fn predict_table(&self, table: &Table) -> Result<(Vec<usize>, Vec<f64>)> {
        let x = self.features(table)?;
        let pred = self.classifier.predict(&x.values)?;
        let scores = self.classifier.score(&x.values)?;
        Ok((pred, scores))
    }

    /// Labels stored in the table's label column.
    pub fn labels(&self, table: &Table) -> Result<Vec<usize>> {
        Ok(labels_from_column(table, &self.label_column)?.labels)
    }
}
