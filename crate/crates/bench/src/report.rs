use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::runner::Metrics;

/// One CSV row; field order fixes the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub workload: String,
    pub dataset: String,
    pub run: usize,
    pub throughput_mops: f64,
    pub index_bytes: usize,
    pub p50_us: f64,
    pub p99_us: f64,
}

pub const REPORT_HEADER: &str = "workload,dataset,run,throughput_mops,index_bytes,p50_us,p99_us";

impl From<&Metrics> for ReportRow {
    fn from(m: &Metrics) -> Self {
        Self {
            workload: m.workload.clone(),
            dataset: m.dataset.clone(),
            run: m.run,
            throughput_mops: m.throughput / 1e6,
            index_bytes: m.index_bytes,
            p50_us: m.p50_us,
            p99_us: m.p99_us,
        }
    }
}

pub fn emit_report(metrics: &[Metrics], path: impl AsRef<Path>) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(REPORT_HEADER.split(','))?;
    for m in metrics {
        w.serialize(ReportRow::from(m))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
