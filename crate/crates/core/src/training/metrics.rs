use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One training step. Fields are `None` when the step did not run that
/// update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub td_loss: Option<f64>,
    pub cql_penalty: Option<f64>,
    pub actor_objective: Option<f64>,
    pub mean_q: Option<f64>,
}

/// Writes one JSON object per line.
pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
