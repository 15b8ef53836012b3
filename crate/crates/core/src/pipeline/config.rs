use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::{BaselineOptions, ClassifierKind};
use crate::error::{Error, Result};
use crate::ingest::Recipe;
use crate::modelselect::{ParamGrid, SelectionMetric};
use crate::pca::Selection;
use crate::preprocess::{EncodingPolicy, ScalerKind, DEFAULT_ONEHOT_CAP};
use crate::stream::StreamOptions;

/// Whether cluster labels are derived before or after the PCA projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineOrder {
    #[default]
    LabelThenPca,
    PcaThenLabel,
}

impl fmt::Display for PipelineOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineOrder::LabelThenPca => "label-then-pca",
            PipelineOrder::PcaThenLabel => "pca-then-label",
        })
    }
}

impl FromStr for PipelineOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label-then-pca" => Ok(PipelineOrder::LabelThenPca),
            "pca-then-label" => Ok(PipelineOrder::PcaThenLabel),
            other => Err(Error::invalid(format!("unknown order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    pub recipe: Recipe,
    /// Name of the label column written next to the test rows.
    pub label_column: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            input: None,
            recipe: Recipe::Generic,
            label_column: "label".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub encoding: EncodingPolicy,
    pub onehot_cap: usize,
    pub scaler: ScalerKind,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            encoding: EncodingPolicy::Label,
            onehot_cap: DEFAULT_ONEHOT_CAP,
            scaler: ScalerKind::ZScore,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratio: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Fixed cluster count; `None` picks k with the elbow rule.
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Z-score the label features before clustering.
    pub scale: bool,
    /// Cluster the training rows only and label the rest by nearest centroid.
    pub label_train_only: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: None,
            k_min: 1,
            k_max: 10,
            restarts: 5,
            max_iter: 300,
            scale: false,
            label_train_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub variance: Option<f64>,
    pub components: Option<usize>,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            variance: Some(crate::pca::DEFAULT_VARIANCE),
            components: None,
        }
    }
}

impl PcaConfig {
    pub fn selection(&self) -> Selection {
        match self.components {
            Some(n) => Selection::Fixed(n),
            None => Selection::Variance(self.variance.unwrap_or(crate::pca::DEFAULT_VARIANCE)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub metric: SelectionMetric,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 3,
            metric: SelectionMetric::Accuracy,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub classifiers: Vec<ClassifierKind>,
    pub stream: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            classifiers: ClassifierKind::ALL.to_vec(),
            stream: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds every stochastic stage.
    pub seed: u64,
    pub order: PipelineOrder,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub cluster: ClusterConfig,
    pub pca: PcaConfig,
    pub grid: ParamGrid,
    pub cv: CvConfig,
    pub stream: StreamOptions,
    pub baselines: BaselineOptions,
    pub compare: CompareConfig,
    pub output: OutputConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad(format!("split.ratio {} must lie in (0, 1)", self.split.ratio));
        }
        let c = &self.cluster;
        if let Some(k) = c.k {
            if k != 2 {
                return bad(format!("cluster.k = {k}; labels must be binary, so k must be 2"));
            }
        } else if c.k_min < 1 || c.k_min > 2 || c.k_max <= 2 {
            return bad(format!("cluster range {}..={} must contain 2 with k_min >= 1", c.k_min, c.k_max));
        }
        if c.restarts == 0 || c.max_iter == 0 {
            return bad("cluster.restarts and cluster.max_iter must be positive".into());
        }
        match (self.pca.variance, self.pca.components) {
            (_, Some(0)) => return bad("pca.components must be positive".into()),
            (Some(v), None) if !(v > 0.0 && v <= 1.0) => return bad(format!("pca.variance {v} must lie in (0, 1]")),
            _ => {}
        }
        if self.cv.folds < 2 {
            return bad("cv.folds must be at least 2".into());
        }
        self.grid.cells().map_err(|e| Error::Config(e.to_string()))?;
        self.stream.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.compare.classifiers.is_empty() {
            return bad("compare.classifiers is empty".into());
        }
        if self.data.label_column.is_empty() {
            return bad("data.label_column is empty".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.grid.c.len(), 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(PipelineConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        assert!(PipelineConfig::from_toml("[cluster]\nkk = 2").is_err());
    }

    #[test]
    fn sections_parse() {
        let c = PipelineConfig::from_toml(
            "seed = 7\norder = \"pca-then-label\"\n[data]\nrecipe = \"uci-diabetes\"\n\
             [grid]\nsolver = [\"newton\"]\npenalty = [\"l2\"]\nC = [1.0, 10.0]\n[stream]\nbatch_size = 7\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.order, PipelineOrder::PcaThenLabel);
        assert_eq!(c.data.recipe, Recipe::UciDiabetes);
        assert_eq!(c.grid.c, vec![1.0, 10.0]);
        assert_eq!(c.stream.batch_size, 7);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig::from_toml("[split]\nratio = 1.5").is_err());
        assert!(PipelineConfig::from_toml("[cluster]\nk = 3").is_err());
        assert!(PipelineConfig::from_toml("[cv]\nfolds = 1").is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let c = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let other = PipelineConfig { seed: 1, ..c.clone() };
        assert_ne!(other.hash(), c.hash());
    }
}
