//! End-to-end orchestration: clean, encode, split, label by clustering,
//! scale, project, tune the logistic regression and evaluate.

mod bundle;
mod config;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bundle::{ModelBundle, Provenance, SchemaColumn, BUNDLE_VERSION};
pub use config::{
    ClusterConfig, CompareConfig, CvConfig, DataConfig, OutputConfig, PcaConfig, PipelineConfig, PipelineOrder,
    PreprocessConfig, SplitConfig,
};
pub use synth::generate_synthetic;

use crate::classifiers::{fit_baseline, Classifier, ClassifierKind, ClassifierModel};
use crate::cluster::{elbow_select, kmeans_fit, ClusterModel, ElbowCurve, KMeansOptions};
use crate::error::{Error, Result, StageExt};
use crate::ingest::{save_csv, Column, ColumnKind, Table, Value};
use crate::metrics::{csv_field, EvalReport};
use crate::modelselect::{grid_search, CvOptions, CvResult, GridCell};
use crate::pca::PcaModel;
use crate::preprocess::{split, Encoder, FeatureMatrix, Scaler, ScalerKind, SplitIndices};
use crate::stream::{stream_evaluate, StreamSource};

/// Seconds spent in each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub clean: f64,
    pub cluster: f64,
    pub pca: f64,
    pub tune: f64,
    pub evaluate: f64,
    pub total: f64,
}

/// Everything derived from the data before any classifier is trained.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub rows_loaded: usize,
    pub cleaned: Table,
    pub encoder: Encoder,
    /// Encoded features of every cleaned row.
    pub features: FeatureMatrix,
    /// Cluster-derived class of every cleaned row.
    pub labels: Vec<usize>,
    pub split: SplitIndices,
    pub label_features: Vec<String>,
    pub cluster: ClusterModel,
    /// Row indices handed to k-means.
    pub cluster_rows: Vec<usize>,
    pub elbow: Option<ElbowCurve>,
    pub scaler: Scaler,
    pub pca: PcaModel,
    pub x_train: FeatureMatrix,
    pub x_test: FeatureMatrix,
    pub y_train: Vec<usize>,
    pub y_test: Vec<usize>,
    pub timings: Timings,
}

impl Prepared {
    /// Cleaned test rows with the derived label appended.
    pub fn test_table(&self, label_column: &str) -> Result<Table> {
        let t = self.cleaned.select_rows(&self.split.test);
        let cells = self.y_test.iter().map(|&y| Some(Value::Int(y as i64))).collect();
        t.with_column(Column::new(label_column, ColumnKind::Integer, cells))
    }

    fn schema(&self) -> Vec<SchemaColumn> {
        self.cleaned
            .columns()
            .iter()
            .map(|c| SchemaColumn {
                name: c.name.clone(),
                kind: c.kind,
            })
            .collect()
    }

    /// Freezes the fitted preprocessing with `classifier` into a scoring bundle.
    pub fn bundle(&self, config: &PipelineConfig, classifier: ClassifierModel) -> ModelBundle {
        ModelBundle {
            version: BUNDLE_VERSION.to_string(),
            recipe: config.data.recipe,
            schema: self.schema(),
            label_column: config.data.label_column.clone(),
            encoder: self.encoder.clone(),
            scaler: self.scaler.clone(),
            pca: self.pca.clone(),
            classifier,
            provenance: Provenance {
                config_hash: config.hash(),
                seed: config.seed,
                created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }
}

/// Loads the configured input with its recipe's parsing rules.
pub fn load_input(config: &PipelineConfig) -> Result<Table> {
    let path = config
        .data
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("data.input is not set".into()))?;
    config.data.recipe.load(path).stage("load")
}

fn kmeans_options(config: &PipelineConfig, k: usize) -> KMeansOptions {
    KMeansOptions {
        restarts: config.cluster.restarts,
        max_iter: config.cluster.max_iter,
        ..KMeansOptions::new(k, config.seed)
    }
}

/// Runs every stage up to (not including) classifier training.
pub fn prepare(config: &PipelineConfig, raw: &Table) -> Result<Prepared> {
    config.validate()?;
    let t_start = Instant::now();
    let mut timings = Timings::default();
    let recipe = config.data.recipe;

    let cleaned = recipe.apply(raw).stage("clean")?;
    if cleaned.row_count() < 2 {
        return Err(Error::invalid(format!("only {} rows survive cleaning", cleaned.row_count()))).stage("clean");
    }
    let pp = &config.preprocess;
    let encoder = Encoder::fit(&cleaned, pp.encoding, pp.onehot_cap).stage("encode")?;
    let features = encoder.transform(&cleaned).stage("encode")?;
    let split = split(cleaned.row_count(), config.split.ratio, config.seed).stage("split")?;
    timings.clean = t_start.elapsed().as_secs_f64();

    let train_x = features.select_rows(&split.train);
    let fit_projection = || -> Result<(Scaler, PcaModel)> {
        let scaler = Scaler::fit(&train_x, pp.scaler)?;
        let pca = PcaModel::fit(&scaler.apply(&train_x)?, config.pca.selection())?;
        Ok((scaler, pca))
    };
    let project = |scaler: &Scaler, pca: &PcaModel, x: &FeatureMatrix| pca.transform(&scaler.apply(x)?);

    let t = Instant::now();
    let (label_features, cluster_input, projection) = match config.order {
        PipelineOrder::LabelThenPca => {
            let names = match recipe.label_features(&cleaned).stage("cluster")? {
                Some(names) => names,
                None => features.feature_names.clone(),
            };
            (names.clone(), features.select_features(&names).stage("cluster")?, None)
        }
        PipelineOrder::PcaThenLabel => {
            let (scaler, pca) = fit_projection().stage("pca")?;
            let z = project(&scaler, &pca, &features).stage("pca")?;
            (z.feature_names.clone(), z, Some((scaler, pca)))
        }
    };
    let cluster_rows: Vec<usize> = if config.cluster.label_train_only {
        split.train.clone()
    } else {
        (0..cleaned.row_count()).collect()
    };
    let mut lab = cluster_input.select_rows(&cluster_rows);
    let mut all_lab = cluster_input;
    if config.cluster.scale && config.order == PipelineOrder::LabelThenPca {
        let s = Scaler::fit(&lab, ScalerKind::ZScore).stage("cluster")?;
        lab = s.apply(&lab).stage("cluster")?;
        all_lab = s.apply(&all_lab).stage("cluster")?;
    }
    let (k, elbow) = match config.cluster.k {
        Some(k) => (k, None),
        None => {
            let curve = elbow_select(&lab, config.cluster.k_min, config.cluster.k_max, &kmeans_options(config, 2))
                .stage("cluster")?;
            (curve.chosen_k, Some(curve))
        }
    };
    if k != 2 {
        return Err(Error::ClusterCount(k)).stage("cluster");
    }
    let cluster = kmeans_fit(&lab, &kmeans_options(config, k)).stage("cluster")?;
    let mapping = cluster.class_mapping();
    let labels: Vec<usize> = if config.cluster.label_train_only {
        cluster
            .predict(&all_lab.values)
            .stage("cluster")?
            .into_iter()
            .map(|c| mapping[c])
            .collect()
    } else {
        cluster.assignments.iter().map(|&c| mapping[c]).collect()
    };
    timings.cluster = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (scaler, pca) = match projection {
        Some(p) => p,
        None => fit_projection().stage("pca")?,
    };
    let x_train = project(&scaler, &pca, &train_x).stage("pca")?;
    let x_test = project(&scaler, &pca, &features.select_rows(&split.test)).stage("pca")?;
    timings.pca = t.elapsed().as_secs_f64();

    let y_train = split.train.iter().map(|&i| labels[i]).collect();
    let y_test = split.test.iter().map(|&i| labels[i]).collect();
    timings.total = t_start.elapsed().as_secs_f64();
    Ok(Prepared {
        rows_loaded: raw.row_count(),
        cleaned,
        encoder,
        features,
        labels,
        split,
        label_features,
        cluster,
        cluster_rows,
        elbow,
        scaler,
        pca,
        x_train,
        x_test,
        y_train,
        y_test,
        timings,
    })
}

fn cv_options(config: &PipelineConfig) -> CvOptions {
    CvOptions {
        folds: config.cv.folds,
        seed: config.seed,
        metric: config.cv.metric,
        tol: config.cv.tol,
        max_iter: config.cv.max_iter,
        ..CvOptions::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub recipe: crate::ingest::Recipe,
    pub order: PipelineOrder,
    pub label_train_only: bool,
    pub rows_loaded: usize,
    pub rows_clean: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub features: Vec<String>,
    pub label_features: Vec<String>,
    pub k: usize,
    pub cluster_sizes: Vec<usize>,
    pub wcss: f64,
    pub elbow: Option<ElbowCurve>,
    pub n_components: usize,
    pub explained_ratio: Vec<f64>,
    pub best: GridCell,
    pub best_cv_score: f64,
    pub eval: EvalReport,
    pub timings: Timings,
    pub provenance: Provenance,
}

pub struct RunOutput {
    pub prepared: Prepared,
    pub bundle: ModelBundle,
    pub report: RunReport,
    pub cv: CvResult,
    pub test_table: Table,
    pub predictions: Vec<usize>,
}

/// The full OFS-ULR run on an already loaded table.
pub fn run_ofsulr(config: &PipelineConfig, raw: &Table) -> Result<RunOutput> {
    let t_start = Instant::now();
    let prepared = prepare(config, raw)?;
    let mut timings = prepared.timings;

    let t = Instant::now();
    let gs = grid_search(&prepared.x_train, &prepared.y_train, &config.grid, &cv_options(config)).stage("tune")?;
    timings.tune = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let predictions = gs.model.predict(&prepared.x_test.values).stage("evaluate")?;
    let scores = gs.model.score(&prepared.x_test.values).stage("evaluate")?;
    let predict_time = t.elapsed().as_secs_f64();
    let eval = EvalReport::evaluate(&prepared.y_test, &predictions, Some(&scores), timings.tune + predict_time)
        .stage("evaluate")?;
    timings.evaluate = predict_time;

    let bundle = prepared.bundle(config, ClassifierModel::LogReg(gs.model.clone()));
    let test_table = prepared.test_table(&config.data.label_column).stage("evaluate")?;
    timings.total = t_start.elapsed().as_secs_f64();
    let best = gs.cv.best_cell();
    let report = RunReport {
        recipe: config.data.recipe,
        order: config.order,
        label_train_only: config.cluster.label_train_only,
        rows_loaded: prepared.rows_loaded,
        rows_clean: prepared.cleaned.row_count(),
        n_train: prepared.split.train.len(),
        n_test: prepared.split.test.len(),
        features: prepared.features.feature_names.clone(),
        label_features: prepared.label_features.clone(),
        k: prepared.cluster.k,
        cluster_sizes: prepared.cluster.cluster_sizes(),
        wcss: prepared.cluster.wcss,
        elbow: prepared.elbow.clone(),
        n_components: prepared.pca.n_selected,
        explained_ratio: prepared.pca.explained_ratio.clone(),
        best: best.cell,
        best_cv_score: best.mean,
        eval,
        timings,
        provenance: bundle.provenance.clone(),
    };
    Ok(RunOutput {
        prepared,
        bundle,
        report,
        cv: gs.cv,
        test_table,
        predictions,
    })
}

/// Writes files one by one and removes all of them if any write fails.
struct OutputSet {
    written: Vec<PathBuf>,
}

impl OutputSet {
    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn rollback(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Two-column `k wcss` data file for plotting the elbow curve.
pub fn elbow_dat(curve: &ElbowCurve) -> String {
    let mut s = String::from("# k wcss\n");
    for (k, w) in curve.ks.iter().zip(&curve.wcss) {
        s.push_str(&format!("{k} {w}\n"));
    }
    s
}

impl RunOutput {
    /// Writes `bundle.model`, `report.json`, `cv.csv`, `test.csv`,
    /// `predictions.csv` and, when the elbow ran, `elbow.dat`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        ensure_dir(dir)?;
        let mut out = OutputSet { written: Vec::new() };
        let res = (|| {
            let bundle = serde_json::to_string_pretty(&self.bundle).expect("bundle serialises") + "\n";
            out.write(dir.join("bundle.model"), &bundle)?;
            let report = serde_json::to_string_pretty(&self.report).expect("report serialises") + "\n";
            out.write(dir.join("report.json"), &report)?;
            out.write(dir.join("cv.csv"), &self.cv.to_csv())?;
            let test = dir.join("test.csv");
            save_csv(&self.test_table, &test)?;
            out.written.push(test);
            let mut preds = String::from("row,prediction\n");
            for (i, p) in self.prepared.split.test.iter().zip(&self.predictions) {
                preds.push_str(&format!("{i},{p}\n"));
            }
            out.write(dir.join("predictions.csv"), &preds)?;
            if let Some(curve) = &self.prepared.elbow {
                out.write(dir.join("elbow.dat"), &elbow_dat(curve))?;
            }
            Ok(())
        })();
        match res {
            Ok(()) => Ok(out.written),
            Err(e) => {
                out.rollback();
                Err(e)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Batch,
    Stream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: EvalMode,
    pub classifier: ClassifierKind,
    /// Train plus predict wall time, seconds.
    pub wall_time: f64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_components: usize,
}

pub const COMPARISON_CSV_HEADER: &str = "Mode,Classifier,Avg. time,Ac,Fm,Pr,Re,AUC";

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(COMPARISON_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let mode = match r.mode {
                EvalMode::Batch => "batch",
                EvalMode::Stream => "stream",
            };
            let name = csv_field(r.classifier.display_name());
            match &r.report {
                Some(e) => {
                    let auc = e.auc.map(|a| format!("{a:.5}")).unwrap_or_default();
                    s.push_str(&format!(
                        "{mode},{name},{:.4},{:.5},{:.5},{:.5},{:.5},{auc}\n",
                        r.wall_time, e.accuracy, e.f1, e.precision, e.recall
                    ));
                }
                None => s.push_str(&format!("{mode},{name},{:.4},,,,,\n", r.wall_time)),
            }
        }
        s
    }

    pub fn row(&self, mode: EvalMode, kind: ClassifierKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.mode == mode && r.classifier == kind)
    }
}

fn fit_classifier(config: &PipelineConfig, p: &Prepared, kind: ClassifierKind) -> Result<ClassifierModel> {
    match kind {
        ClassifierKind::LogReg => {
            let gs = grid_search(&p.x_train, &p.y_train, &config.grid, &cv_options(config))?;
            Ok(ClassifierModel::LogReg(gs.model))
        }
        other => fit_baseline(other, &p.x_train.values, &p.y_train, &config.baselines, config.seed),
    }
}

/// Trains each configured classifier on the same prepared split and features.
pub fn run_comparison(config: &PipelineConfig, raw: &Table) -> Result<(Prepared, ComparisonReport)> {
    let prepared = prepare(config, raw)?;
    let rows = compare_prepared(config, &prepared)?;
    let report = ComparisonReport {
        rows,
        n_train: prepared.split.train.len(),
        n_test: prepared.split.test.len(),
        n_components: prepared.pca.n_selected,
    };
    Ok((prepared, report))
}

fn compare_prepared(config: &PipelineConfig, p: &Prepared) -> Result<Vec<ComparisonRow>> {
    let test_table = p.test_table(&config.data.label_column)?;
    let mut batch_rows = Vec::new();
    let mut stream_rows = Vec::new();
    for &kind in &config.compare.classifiers {
        let t = Instant::now();
        let outcome = fit_classifier(config, p, kind).and_then(|m| {
            let train_time = t.elapsed().as_secs_f64();
            let pred = m.predict(&p.x_test.values)?;
            let scores = m.score(&p.x_test.values)?;
            let wall = t.elapsed().as_secs_f64();
            let report = EvalReport::evaluate(&p.y_test, &pred, Some(&scores), wall)?;
            Ok((m, train_time, report))
        });
        match outcome {
            Ok((model, train_time, report)) => {
                batch_rows.push(ComparisonRow {
                    mode: EvalMode::Batch,
                    classifier: kind,
                    wall_time: report.wall_time,
                    report: Some(report),
                    error: None,
                });
                if config.compare.stream {
                    let bundle = p.bundle(config, model);
                    let streamed = StreamSource::from_table(test_table.clone(), config.stream.batch_size)
                        .and_then(|src| stream_evaluate(&bundle, src, config.stream.capacity, |_| {}));
                    stream_rows.push(match streamed {
                        Ok(sr) => ComparisonRow {
                            mode: EvalMode::Stream,
                            classifier: kind,
                            wall_time: train_time + sr.wall_time,
                            report: Some(sr.cumulative),
                            error: None,
                        },
                        Err(e) => failed_row(EvalMode::Stream, kind, train_time, e),
                    });
                }
            }
            Err(e) => {
                let wall = t.elapsed().as_secs_f64();
                batch_rows.push(failed_row(EvalMode::Batch, kind, wall, e));
            }
        }
    }
    batch_rows.extend(stream_rows);
    Ok(batch_rows)
}

fn failed_row(mode: EvalMode, classifier: ClassifierKind, wall_time: f64, e: Error) -> ComparisonRow {
    ComparisonRow {
        mode,
        classifier,
        wall_time,
        report: None,
        error: Some(e.to_string()),
    }
}
