use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{ObservedLow, ObservedState};
use crate::encoders::DeviceFeatures;
use crate::error::{Error, Result};

pub const LOG_SCHEMA: &str = "mcchrl.session_log";
pub const LOG_VERSION: u32 = 1;

/// One offline-training line: the high-level state, the exposed list
/// (`e_k = action[k]`), click labels and reward, the device records `m_k`,
/// and the next state and action when the user has another session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogRecord {
    pub state: ObservedState,
    pub action: Vec<i64>,
    pub clicks: Vec<u8>,
    pub reward: f64,
    pub device: Vec<DeviceFeatures>,
    pub next_state: Option<ObservedState>,
    pub next_action: Option<Vec<i64>>,
}

impl SessionLogRecord {
    pub fn session_len(&self) -> usize {
        self.action.len()
    }

    /// Low-level observation at step `k`: device records `m_0..m_k`.
    pub fn low_at(&self, k: usize) -> ObservedLow {
        ObservedLow {
            user: self.state.user,
            outra: self.state.outra,
            device: self.device[..=k.min(self.device.len().saturating_sub(1))].to_vec(),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let n = self.action.len();
        if n != k || self.clicks.len() != k || self.device.len() != k {
            return Err(Error::Parse(format!(
                "session with {n} items, {} clicks, {} device records; expected {k}",
                self.clicks.len(),
                self.device.len()
            )));
        }
        if self.clicks.iter().any(|&c| c > 1) {
            return Err(Error::Parse("click labels must be 0 or 1".into()));
        }
        let ctr = self.clicks.iter().map(|&c| c as f64).sum::<f64>() / k as f64;
        if (ctr - self.reward).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "reward {} differs from click rate {ctr}",
                self.reward
            )));
        }
        if self.next_state.is_some() != self.next_action.is_some() {
            return Err(Error::Parse(
                "next state and next action must come together".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LogHeader {
    schema: String,
    version: u32,
}

pub fn write_log(path: &Path, records: &[SessionLogRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(
        &mut w,
        &LogHeader {
            schema: LOG_SCHEMA.into(),
            version: LOG_VERSION,
        },
    )?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Records read back from a log plus the number of lines that failed to
/// parse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogRead {
    pub records: Vec<SessionLogRecord>,
    pub skipped: usize,
}

pub fn read_log(path: &Path) -> Result<LogRead> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = LogRead::default();
    let mut header_seen = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            let h: LogHeader = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("log header: {e}")))?;
            if h.schema != LOG_SCHEMA {
                return Err(Error::Parse(format!(
                    "unexpected log schema `{}`",
                    h.schema
                )));
            }
            if h.version != LOG_VERSION {
                return Err(Error::Schema {
                    expected: LOG_VERSION,
                    found: h.version,
                });
            }
            continue;
        }
        match serde_json::from_str::<SessionLogRecord>(&line) {
            Ok(r) => out.records.push(r),
            Err(_) => out.skipped += 1,
        }
    }
    Ok(out)
}
