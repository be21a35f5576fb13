use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::models::Networks;

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Unweighted loss terms averaged over the epoch's steps.
    pub losses: LossBreakdown,
    /// Reversal coefficient at the last step of the epoch.
    pub lambda_eff: f64,
    pub source_accuracy: f64,
    pub target_accuracy: f64,
    pub target_per_class_accuracy: Vec<Option<f64>>,
    pub pseudo_label_acceptance_rate: f64,
    pub proxy_a_distance: f64,
}

#[derive(Serialize)]
struct Header {
    header: &'static str,
    version: u32,
}

/// JSON-lines metrics writer. The first line identifies the format; each
/// record is flushed as soon as it is written so a crashed run keeps every
/// finished epoch.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = MetricsWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.line(&Header {
            header: "idal-metrics",
            version: 1,
        })?;
        Ok(w)
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        self.line(record)
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    /// Reads back every record, skipping the header line.
    pub fn read(path: &Path) -> Result<Vec<MetricsRecord>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

/// Writes extractor features for both domains as CSV with columns
/// `f0..f{d-1},eval_label,domain`.
pub fn write_embeddings(path: &Path, nets: &Networks, source: &Dataset, target: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let d = nets.extractor.feature_dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    header.push("eval_label".into());
    header.push("domain".into());
    let mut text = header.join(",");
    text.push('\n');
    for ds in [source, target] {
        if ds.is_empty() {
            continue;
        }
        let features = nets.extractor.extract(&ds.feature_tensor()?)?;
        let labels = ds.eval_labels();
        for (i, row) in features.data().chunks(d).enumerate() {
            for v in row {
                text.push_str(&format!("{v},"));
            }
            let label = labels.map_or(-1, |l| l[i]);
            text.push_str(&format!("{label},{}\n", ds.domain().as_str()));
        }
    }
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize) -> MetricsRecord {
        MetricsRecord {
            epoch,
            losses: LossBreakdown::default(),
            lambda_eff: 0.5,
            source_accuracy: 1.0,
            target_accuracy: 0.75,
            target_per_class_accuracy: vec![Some(1.0), None],
            pseudo_label_acceptance_rate: 0.25,
            proxy_a_distance: 0.1,
        }
    }

    #[test]
    fn round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.append(&record(0)).unwrap();
        w.append(&record(1)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"header":"idal-metrics","version":1}"#));
        assert_eq!(MetricsWriter::read(&path).unwrap(), vec![record(0), record(1)]);
    }
}
