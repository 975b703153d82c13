use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

/// Weight statistics for the source instances of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub name: String,
    pub count: usize,
    pub active: usize,
    pub pruned: usize,
    /// Mean expected weight over every instance of the domain, pruned ones
    /// included with their frozen parameters.
    pub mean_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    pub meta_loss: Option<f64>,
    pub test_loss: f64,
    pub test_accuracy: Option<f64>,
    pub active: usize,
    /// Instances pruned so far, this epoch's pruning included.
    pub pruned: usize,
    pub mean_weight: Option<f64>,
    pub domains: Vec<DomainStats>,
}

/// Final per-instance weight state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub id: usize,
    pub domain: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub weight: Option<f64>,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub task: String,
    pub target: String,
    pub epochs: Vec<EpochRecord>,
    pub final_weights: Vec<WeightRow>,
    /// Training-loop wall clock per epoch. Kept out of the JSON lines so
    /// that equal seeds give byte-identical records.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl MetricsReport {
    pub fn final_test_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_loss)
    }

    pub fn total_seconds(&self) -> f64 {
        self.epoch_seconds.iter().sum()
    }

    pub fn final_domain(&self, name: &str) -> Option<&DomainStats> {
        self.epochs.last()?.domains.iter().find(|d| d.name == name)
    }
}

pub const JSONL_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `metrics.jsonl` (one record per epoch), `summary.csv` (one row
/// per epoch, with timings) and `weights.csv` into `dir`.
pub fn export_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut jsonl = BufWriter::new(File::create(dir.join(JSONL_FILE))?);
    for rec in &report.epochs {
        serde_json::to_writer(&mut jsonl, rec)?;
        jsonl.write_all(b"\n")?;
    }
    jsonl.flush()?;

    let domain_names: Vec<String> = report
        .epochs
        .first()
        .map(|e| e.domains.iter().map(|d| d.name.clone()).collect())
        .unwrap_or_default();
    let mut csv = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    let mut header: Vec<String> = [
        "method", "task", "target", "epoch", "batches", "seconds", "meta_loss", "test_loss", "test_accuracy",
        "active", "pruned", "mean_weight",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for d in &domain_names {
        header.push(format!("weight_{d}"));
        header.push(format!("active_{d}"));
    }
    csv.write_record(&header)?;
    for (i, rec) in report.epochs.iter().enumerate() {
        let mut row = vec![
            report.method.clone(),
            report.task.clone(),
            report.target.clone(),
            rec.epoch.to_string(),
            rec.batches.to_string(),
            report.epoch_seconds.get(i).map(|s| format!("{s:.3}")).unwrap_or_default(),
            opt(rec.meta_loss),
            rec.test_loss.to_string(),
            opt(rec.test_accuracy),
            rec.active.to_string(),
            rec.pruned.to_string(),
            opt(rec.mean_weight),
        ];
        for d in &rec.domains {
            row.push(opt(d.mean_weight));
            row.push(d.active.to_string());
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;

    let mut w = csv::Writer::from_path(dir.join(WEIGHTS_FILE))?;
    w.write_record(["id", "domain", "a", "b", "weight", "active"])?;
    for r in &report.final_weights {
        w.write_record([
            r.id.to_string(),
            r.domain.clone().unwrap_or_default(),
            opt(r.a),
            opt(r.b),
            opt(r.weight),
            u8::from(r.active).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the per-epoch records back from a `metrics.jsonl` file.
pub fn read_jsonl(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
