use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use ofsulr_core::ingest::{profile, save_csv, Column};
use ofsulr_core::modelselect::{grid_search, CvOptions};
use ofsulr_core::pipeline::{elbow_dat, generate_synthetic, load_input, prepare, run_comparison, run_ofsulr, Prepared};
use ofsulr_core::stream::{stream_evaluate, StreamSource};
use ofsulr_core::{ColumnKind, Error, EvalReport, ModelBundle, ParamGrid, PipelineConfig, Result, Value};
use serde_json::json;

use crate::{Command, KChoice, PipelineArgs};

const LOCK_NAME: &str = ".ofsulr.lock";

/// Exclusive claim on an output directory, released on drop.
struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    fn acquire(dir: &Path) -> Result<OutputLock> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(Error::invalid(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn build_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut c = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &args.input {
        c.data.input = Some(v.clone());
    }
    if let Some(v) = args.recipe {
        c.data.recipe = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = &args.out {
        c.output.dir = v.clone();
    }
    if let Some(v) = args.order {
        c.order = v;
    }
    if args.label_train_only {
        c.cluster.label_train_only = true;
    }
    if let Some(v) = args.scale {
        c.preprocess.scaler = v;
    }
    if let Some(v) = args.encode {
        c.preprocess.encoding = v;
    }
    match args.k {
        Some(KChoice::Auto) => c.cluster.k = None,
        Some(KChoice::Fixed(k)) => c.cluster.k = Some(k),
        None => {}
    }
    if let Some((lo, hi)) = args.k_range {
        c.cluster.k_min = lo;
        c.cluster.k_max = hi;
    }
    if let Some(n) = args.components {
        c.pca.components = Some(n);
    }
    if let Some(v) = args.variance {
        c.pca.components = None;
        c.pca.variance = Some(v);
    }
    if let Some(p) = &args.grid {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        c.grid = toml::from_str::<ParamGrid>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    }
    if let Some(v) = args.folds {
        c.cv.folds = v;
    }
    if let Some(v) = args.metric {
        c.cv.metric = v;
    }
    if let Some(v) = args.ratio {
        c.split.ratio = v;
    }
    if let Some(v) = args.batch_size {
        c.stream.batch_size = v;
    }
    if let Some(v) = &args.classifiers {
        c.compare.classifiers = v.clone();
    }
    if args.no_stream {
        c.compare.stream = false;
    }
    c.validate()?;
    Ok(c)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serialisable") + "\n"))
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value).expect("serialisable") + "\n"))
}

fn prepared(args: &PipelineArgs) -> Result<(PipelineConfig, Prepared)> {
    let config = build_config(args)?;
    let raw = load_input(&config)?;
    let p = prepare(&config, &raw)?;
    Ok((config, p))
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Profile { input, recipe, json } => {
            let table = recipe.load(&input)?;
            let rows = profile(&table);
            if json {
                return print_json(&rows);
            }
            let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(6).max(6);
            let mut text = format!("{:width$}  {:>9}  {:>9}  {:<11}  {:>7}\n", "column", "null", "not null", "kind", "valid %");
            for r in &rows {
                text.push_str(&format!(
                    "{:width$}  {:>9}  {:>9}  {:<11}  {:>7.2}\n",
                    r.name,
                    r.null_count,
                    r.not_null_count,
                    r.kind.to_string(),
                    r.valid_pct
                ));
            }
            text.push_str(&format!("{} rows, {} columns\n", table.row_count(), rows.len()));
            emit(&text)
        }
        Command::Prepare { input, recipe, out } => {
            let raw = recipe.load(&input)?;
            let cleaned = recipe.apply(&raw)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            save_csv(&cleaned, &out)?;
            eprintln!("{} of {} rows kept, {} columns -> {}", cleaned.row_count(), raw.row_count(), cleaned.columns().len(), out.display());
            Ok(())
        }
        Command::Cluster(args) => {
            let (config, p) = prepared(&args)?;
            let dir = config.output.dir.clone();
            let _lock = OutputLock::acquire(&dir)?;
            let labels = p.labels.iter().map(|&y| Some(Value::Int(y as i64))).collect();
            let labelled = p.cleaned.clone().with_column(Column::new(config.data.label_column.as_str(), ColumnKind::Integer, labels))?;
            save_csv(&labelled, dir.join("labelled.csv"))?;
            let summary = json!({
                "k": p.cluster.k,
                "label_features": p.label_features,
                "cluster_sizes": p.cluster.cluster_sizes(),
                "class_mapping": p.cluster.class_mapping(),
                "wcss": p.cluster.wcss,
                "iterations": p.cluster.iterations,
                "cluster_rows": p.cluster_rows.len(),
                "elbow": p.elbow,
                "model": p.cluster,
            });
            write_json(&dir.join("cluster.json"), &summary)?;
            if let Some(curve) = &p.elbow {
                write_text(&dir.join("elbow.dat"), &elbow_dat(curve))?;
            }
            eprintln!("k = {}, cluster sizes {:?} -> {}", p.cluster.k, p.cluster.cluster_sizes(), dir.display());
            Ok(())
        }
        Command::Pca(args) => {
            let (config, p) = prepared(&args)?;
            let dir = config.output.dir.clone();
            let _lock = OutputLock::acquire(&dir)?;
            write_json(&dir.join("pca.json"), &json!({
                "features": p.features.feature_names,
                "n_selected": p.pca.n_selected,
                "explained_ratio": p.pca.explained_ratio,
                "model": p.pca,
            }))?;
            let kept: f64 = p.pca.explained_ratio[..p.pca.n_selected].iter().sum();
            eprintln!("{} of {} components keep {:.4} of the variance", p.pca.n_selected, p.pca.n_features(), kept);
            Ok(())
        }
        Command::Tune(args) => {
            let (config, p) = prepared(&args)?;
            let dir = config.output.dir.clone();
            let _lock = OutputLock::acquire(&dir)?;
            let opts = CvOptions {
                folds: config.cv.folds,
                seed: config.seed,
                metric: config.cv.metric,
                tol: config.cv.tol,
                max_iter: config.cv.max_iter,
                ..CvOptions::default()
            };
            let gs = grid_search(&p.x_train, &p.y_train, &config.grid, &opts)?;
            write_text(&dir.join("cv.csv"), &gs.cv.to_csv())?;
            let best = gs.cv.best_cell();
            eprintln!(
                "best solver={} penalty={} C={} mean {}={:.5} over {} cells ({} skipped)",
                best.cell.solver,
                best.cell.penalty,
                best.cell.c,
                gs.cv.metric,
                best.mean,
                gs.cv.cells.len(),
                gs.cv.skipped.len()
            );
            Ok(())
        }
        Command::Train(args) => {
            let config = build_config(&args)?;
            let raw = load_input(&config)?;
            let dir = config.output.dir.clone();
            let _lock = OutputLock::acquire(&dir)?;
            let out = run_ofsulr(&config, &raw)?;
            fs::write(dir.join("config.toml"), config.to_toml()).map_err(|e| Error::io(&dir, e))?;
            let files = out.write(&dir)?;
            let e = &out.report.eval;
            eprintln!(
                "k = {}, {} components, test Ac {:.5} Pr {:.5} Re {:.5} F1 {:.5}; {} files -> {}",
                out.report.k,
                out.report.n_components,
                e.accuracy,
                e.precision,
                e.recall,
                e.f1,
                files.len() + 1,
                dir.display()
            );
            Ok(())
        }
        Command::Evaluate { model, input, out } => {
            let bundle = ModelBundle::load(&model)?;
            let table = ofsulr_core::ingest::load_csv(&input, &bundle.load_options())?;
            let t = std::time::Instant::now();
            let (pred, scores) = bundle.predict_table(&table)?;
            let y = bundle.labels(&table)?;
            let report = EvalReport::evaluate(&y, &pred, Some(&scores), t.elapsed().as_secs_f64())?;
            match out {
                Some(p) => write_json(&p, &report),
                None => print_json(&report),
            }
        }
        Command::Compare(args) => {
            let config = build_config(&args)?;
            let raw = load_input(&config)?;
            let dir = config.output.dir.clone();
            let _lock = OutputLock::acquire(&dir)?;
            let (_, report) = run_comparison(&config, &raw)?;
            write_text(&dir.join("comparison.csv"), &report.to_csv())?;
            write_json(&dir.join("comparison.json"), &report)?;
            emit(&report.to_csv())?;
            for r in report.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{:?} {} failed: {}", r.mode, r.classifier, r.error.as_deref().unwrap_or_default());
            }
            Ok(())
        }
        Command::StreamEval { model, input, batch_size, interval_ms, capacity, out } => {
            let bundle = ModelBundle::load(&model)?;
            let source = StreamSource::open(&input, batch_size, Duration::from_millis(interval_ms), bundle.load_options())?;
            let report = stream_evaluate(&bundle, source, capacity, |b| {
                let r = &b.report;
                let line = json!({
                    "batch_id": b.batch_id,
                    "rows": b.rows,
                    "confusion": r.confusion,
                    "accuracy": r.accuracy,
                    "precision": r.precision,
                    "recall": r.recall,
                    "f1": r.f1,
                    "auc": r.auc,
                    "wall_time": r.wall_time,
                });
                let _ = emit(&format!("{line}\n"));
            })?;
            let c = &report.cumulative;
            eprintln!(
                "{} rows in {} batches: Ac {:.5} Pr {:.5} Re {:.5} F1 {:.5}",
                report.total_rows,
                report.batches.len(),
                c.accuracy,
                c.precision,
                c.recall,
                c.f1
            );
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            Ok(())
        }
        Command::Synth { n, d, clusters, separation, seed, out } => {
            let (table, truth) = generate_synthetic(n, d, clusters, separation, seed)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            save_csv(&table, &out)?;
            let sidecar = out.with_extension("truth.csv");
            let file = File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            let mut w = BufWriter::new(file);
            let mut body = String::from("row,cluster\n");
            for (i, c) in truth.iter().enumerate() {
                body.push_str(&format!("{i},{c}\n"));
            }
            w.write_all(body.as_bytes()).map_err(|e| Error::io(&sidecar, e))?;
            eprintln!("{n} rows x {d} features -> {} (truth in {})", out.display(), sidecar.display());
            Ok(())
        }
    }
}
