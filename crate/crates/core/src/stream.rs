//! Micro-batch replay of a cleaned CSV through a frozen model bundle.
//!
//! A producer thread reads the source in fixed-size batches and pushes them
//! through a bounded channel; the consumer scores each batch in arrival order
//! and folds it into [`RunningMetrics`]. Nothing in the bundle is refit.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{build_table, LoadOptions, Table};
use crate::metrics::{roc_auc, Confusion, EvalReport};
use crate::pipeline::ModelBundle;

pub const DEFAULT_BATCH_SIZE: usize = 1000;
pub const DEFAULT_CAPACITY: usize = 4;

#[derive(Debug, Clone)]
pub struct StreamBatch {
    pub batch_id: u64,
    pub rows: Table,
    pub arrival: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamOptions {
    pub batch_size: usize,
    pub interval_ms: u64,
    /// Bound of the producer/consumer queue.
    pub capacity: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            batch_size: DEFAULT_BATCH_SIZE,
            interval_ms: 0,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

impl StreamOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.capacity == 0 {
            return Err(Error::invalid("queue capacity must be at least 1"));
        }
        Ok(())
    }
}

enum Rows {
    Csv(Box<csv::StringRecordsIntoIter<BufReader<File>>>),
    Table { table: Table, next: usize },
}

/// Ordered batches read from a CSV file or sliced from an in-memory table.
pub struct StreamSource {
    rows: Rows,
    header: Vec<String>,
    name: String,
    opts: LoadOptions,
    batch_size: usize,
    interval: Duration,
    next_id: u64,
    line: usize,
    done: bool,
}

impl StreamSource {
    pub fn open(path: impl AsRef<Path>, batch_size: usize, interval: Duration, opts: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(opts.delimiter.unwrap_or(b','))
            .flexible(true)
            .from_reader(BufReader::new(file));
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(StreamSource {
            rows: Rows::Csv(Box::new(reader.into_records())),
            header,
            name,
            opts,
            batch_size,
            interval,
            next_id: 0,
            line: 1,
            done: false,
        })
    }

    pub fn from_table(table: Table, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(StreamSource {
            header: table.column_names().iter().map(|s| s.to_string()).collect(),
            name: table.name().to_string(),
            rows: Rows::Table { table, next: 0 },
            opts: LoadOptions::default(),
            batch_size,
            interval: Duration::ZERO,
            next_id: 0,
            line: 1,
            done: false,
        })
    }

    fn next_rows(&mut self) -> Result<Option<Table>> {
        match &mut self.rows {
            Rows::Table { table, next } => {
                if *next >= table.row_count() {
                    return Ok(None);
                }
                let end = (*next + self.batch_size).min(table.row_count());
                let idx: Vec<usize> = (*next..end).collect();
                *next = end;
                Ok(Some(table.select_rows(&idx)))
            }
            Rows::Csv(records) => {
                let mut raw = Vec::with_capacity(self.batch_size);
                for rec in records.by_ref() {
                    let rec = rec?;
                    self.line += 1;
                    if rec.len() != self.header.len() {
                        return Err(Error::RaggedRow {
                            row: self.line,
                            expected: self.header.len(),
                            found: rec.len(),
                        });
                    }
                    raw.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
                    if raw.len() == self.batch_size {
                        break;
                    }
                }
                if raw.is_empty() {
                    return Ok(None);
                }
                build_table(&self.name, &self.header, &raw, &self.opts).map(Some)
            }
        }
    }
}

impl Iterator for StreamSource {
    type Item = Result<StreamBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.next_id > 0 && !self.interval.is_zero() {
            thread::sleep(self.interval);
        }
        match self.next_rows() {
            Ok(Some(rows)) => {
                let batch = StreamBatch {
                    batch_id: self.next_id,
                    rows,
                    arrival: Instant::now(),
                };
                self.next_id += 1;
                Some(Ok(batch))
            }
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub batch_id: u64,
    pub rows: usize,
    pub report: EvalReport,
}

/// Mean of the per-batch metrics, each batch weighted equally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchAverage {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMetrics {
    pub cumulative: Confusion,
    pub batches: Vec<BatchResult>,
    #[serde(skip)]
    scores: Vec<f64>,
    #[serde(skip)]
    labels: Vec<usize>,
}

impl RunningMetrics {
    pub fn push(&mut self, batch_id: u64, y: &[usize], pred: &[usize], scores: &[f64], wall_time: f64) -> Result<&BatchResult> {
        let report = EvalReport::evaluate(y, pred, Some(scores), wall_time)?;
        self.cumulative += report.confusion;
        self.scores.extend_from_slice(scores);
        self.labels.extend_from_slice(y);
        self.batches.push(BatchResult {
            batch_id,
            rows: y.len(),
            report,
        });
        Ok(self.batches.last().expect("just pushed"))
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    /// Metrics over every row seen so far, with the AUC of the pooled scores.
    pub fn cumulative_report(&self) -> EvalReport {
        let mut r = EvalReport::from_confusion(self.cumulative);
        if let Ok((points, auc)) = roc_auc(&self.scores, &self.labels) {
            r.roc_points = points;
            r.auc = Some(auc);
        }
        r.wall_time = self.batches.iter().map(|b| b.report.wall_time).sum();
        r
    }

    pub fn batch_average(&self) -> BatchAverage {
        let k = self.batches.len();
        if k == 0 {
            return BatchAverage::default();
        }
        let mut a = BatchAverage::default();
        for b in &self.batches {
            a.accuracy += b.report.accuracy;
            a.precision += b.report.precision;
            a.recall += b.report.recall;
            a.f1 += b.report.f1;
        }
        let k = k as f64;
        BatchAverage {
            accuracy: a.accuracy / k,
            precision: a.precision / k,
            recall: a.recall / k,
            f1: a.f1 / k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub batches: Vec<BatchResult>,
    pub cumulative: EvalReport,
    pub batch_average: BatchAverage,
    pub total_rows: usize,
    pub wall_time: f64,
}

/// Scores every batch from `source` with `bundle`, calling `on_batch` after each.
pub fn stream_evaluate<I, F>(bundle: &ModelBundle, source: I, capacity: usize, mut on_batch: F) -> Result<StreamReport>
where
    I: Iterator<Item = Result<StreamBatch>> + Send,
    F: FnMut(&BatchResult),
{
    let start = Instant::now();
    let (tx, rx) = sync_channel::<Result<StreamBatch>>(capacity.max(1));
    let metrics = thread::scope(|s| {
        s.spawn(move || {
            for item in source {
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        });
        let mut metrics = RunningMetrics::default();
        for item in rx {
            let batch = item?;
            let t0 = Instant::now();
            let (pred, scores) = bundle.predict_table(&batch.rows)?;
            let y = bundle.labels(&batch.rows)?;
            let elapsed = t0.elapsed().as_secs_f64();
            on_batch(metrics.push(batch.batch_id, &y, &pred, &scores, elapsed)?);
        }
        Ok::<_, Error>(metrics)
    })?;
    Ok(StreamReport {
        cumulative: metrics.cumulative_report(),
        batch_average: metrics.batch_average(),
        total_rows: metrics.rows(),
        batches: metrics.batches,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::read_csv;

    fn table(n: usize) -> Table {
        let mut csv = String::from("x,label\n");
        for i in 0..n {
            csv.push_str(&format!("{i},{}\n", i % 2));
        }
        read_csv(csv.as_bytes(), "t", &LoadOptions::default()).unwrap()
    }

    fn sizes(src: StreamSource) -> Vec<usize> {
        src.map(|b| b.unwrap().rows.row_count()).collect()
    }

    #[test]
    fn batches_of_four() {
        assert_eq!(sizes(StreamSource::from_table(table(10), 4).unwrap()), vec![4, 4, 2]);
        assert_eq!(sizes(StreamSource::from_table(table(10), 50).unwrap()), vec![10]);
    }

    #[test]
    fn file_source_preserves_order_and_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        crate::ingest::save_csv(&table(10), &p).unwrap();
        let batches: Vec<StreamBatch> = StreamSource::open(&p, 3, Duration::ZERO, LoadOptions::default())
            .unwrap()
            .map(Result::unwrap)
            .collect();
        assert_eq!(batches.iter().map(|b| b.batch_id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let xs: Vec<String> = batches
            .iter()
            .flat_map(|b| b.rows.column("x").unwrap().cells.iter().map(|c| c.as_ref().unwrap().to_string()).collect::<Vec<_>>())
            .collect();
        assert_eq!(xs, (0..10).map(|i| i.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(StreamSource::from_table(table(3), 0).is_err());
    }

    #[test]
    fn running_metrics_sum_confusions() {
        let mut m = RunningMetrics::default();
        m.push(0, &[1, 0], &[1, 1], &[0.9, 0.6], 0.0).unwrap();
        m.push(1, &[0, 1], &[0, 0], &[0.1, 0.4], 0.0).unwrap();
        let sum = m.batches.iter().fold(Confusion::default(), |a, b| a + b.report.confusion);
        assert_eq!(m.cumulative, sum);
        assert_eq!(m.cumulative.total(), 4);
        assert_eq!(m.cumulative_report().auc, Some(0.75));
    }
}
