//! Append-only newline-delimited checkpoint of completed units.
//!
//! A record is durable once its line, including the trailing newline, has
//! been written and synced. Readers keep the longest prefix of complete,
//! parseable lines; anything after it (a torn tail from a crash) is
//! discarded and truncated away before new records are appended.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{AttemptRecord, UnitResult};
use crate::spec_model::{FailReason, UnitVerdict, VerdictKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordVerdict {
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_reason: Option<FailReason>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub digest: String,
    pub unit_id: String,
    pub verdict: RecordVerdict,
    pub attempts: u32,
    pub exec_ms: u64,
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    #[serde(default)]
    pub queued_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_trace_digest: Option<String>,
    #[serde(default)]
    pub worker_attempts: Vec<AttemptRecord>,
}

impl CheckpointRecord {
    pub fn from_result(r: &UnitResult) -> Self {
        CheckpointRecord {
            digest: r.digest.clone(),
            unit_id: r.unit_id.clone(),
            verdict: RecordVerdict {
                kind: r.verdict.kind,
                fail_reason: r.verdict.fail_reason,
            },
            attempts: r.verdict.attempts,
            exec_ms: r.timing.exec_ms,
            ts: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
            queued_ms: r.timing.queued_ms,
            judge_trace_digest: r.judge_trace_digest.clone(),
            worker_attempts: r.worker_attempts.clone(),
        }
    }

    pub fn to_result(&self) -> UnitResult {
        UnitResult {
            unit_id: self.unit_id.clone(),
            digest: self.digest.clone(),
            verdict: UnitVerdict {
                kind: self.verdict.kind,
                fail_reason: self.verdict.fail_reason,
                attempts: self.attempts,
                duration_ms: self.exec_ms,
            },
            judge_trace_digest: self.judge_trace_digest.clone(),
            timing: super::Timing {
                queued_ms: self.queued_ms,
                exec_ms: self.exec_ms,
            },
            worker_attempts: self.worker_attempts.clone(),
            evidence: None,
            trace: Vec::new(),
        }
    }
}

/// Records of the valid prefix and its length in bytes.
pub fn read_valid_prefix(bytes: &[u8]) -> (Vec<CheckpointRecord>, usize) {
    let mut records = Vec::new();
    let mut offset = 0;
    while let Some(end) = bytes[offset..].iter().position(|b| *b == b'\n') {
        let line = &bytes[offset..offset + end];
        match serde_json::from_slice::<CheckpointRecord>(line) {
            Ok(record) => records.push(record),
            Err(_) => break,
        }
        offset += end + 1;
    }
    (records, offset)
}

/// Reads the valid prefix of a checkpoint file; a missing file is empty.
pub fn read_checkpoint(path: &Path) -> io::Result<(Vec<CheckpointRecord>, usize)> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(read_valid_prefix(&bytes)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok((Vec::new(), 0)),
        Err(e) => Err(e),
    }
}

/// Single writer; every append is synced before it returns.
pub struct CheckpointWriter {
    file: File,
}

impl CheckpointWriter {
    /// Starts an empty checkpoint, replacing any existing file.
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = File::create(path)?;
        Ok(CheckpointWriter { file })
    }

    /// Opens an existing checkpoint for appending after `valid_len` bytes,
    /// dropping anything beyond them.
    pub fn resume(path: &Path, valid_len: usize) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        file.set_len(valid_len as u64)?;
        file.sync_all()?;
        Ok(CheckpointWriter { file })
    }

    pub fn append(&mut self, record: &CheckpointRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> CheckpointRecord {
        CheckpointRecord {
            digest: format!("{id:0>16}"),
            unit_id: id.into(),
            verdict: RecordVerdict {
                kind: VerdictKind::Fail,
                fail_reason: Some(FailReason::OutcomeMismatch),
            },
            attempts: 1,
            exec_ms: 3,
            ts: 0,
            queued_ms: 0,
            judge_trace_digest: None,
            worker_attempts: Vec::new(),
        }
    }

    #[test]
    fn torn_tail_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.ndjson");
        let mut w = CheckpointWriter::create(&path).unwrap();
        w.append(&record("a")).unwrap();
        w.append(&record("b")).unwrap();
        drop(w);
        let full = std::fs::read(&path).unwrap();
        let torn = &full[..full.len() - 5];
        std::fs::write(&path, torn).unwrap();

        let (records, len) = read_checkpoint(&path).unwrap();
        assert_eq!(records, [record("a")]);
        let mut w = CheckpointWriter::resume(&path, len).unwrap();
        w.append(&record("c")).unwrap();
        let (records, _) = read_checkpoint(&path).unwrap();
        assert_eq!(records, [record("a"), record("c")]);
    }

    #[test]
    fn unterminated_but_parseable_line_is_torn() {
        let line = serde_json::to_string(&record("a")).unwrap();
        assert_eq!(read_valid_prefix(line.as_bytes()).0, []);
    }
}
