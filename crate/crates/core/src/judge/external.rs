//! Pluggable judges for expectations that are not programmatic assertions.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::injection::Evidence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalVerdict {
    Pass,
    Fail,
    Unverified,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: ExternalVerdict,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
}

/// A judge consulted for units marked `judge: external`.
///
/// Implementations must be stateless per call; the orchestrator rate-limits
/// calls and retries [`JudgeError::Unavailable`].
pub trait ExternalJudge: Send + Sync {
    fn judge(&self, evidence: &Evidence, expectation: &str) -> Result<Judgment, JudgeError>;
}

/// Returns the same verdict for everything.
#[derive(Clone, Copy, Debug)]
pub struct ConstantJudge(pub ExternalVerdict);

impl ExternalJudge for ConstantJudge {
    fn judge(&self, _: &Evidence, _: &str) -> Result<Judgment, JudgeError> {
        Ok(Judgment {
            verdict: self.0,
            rationale: "constant".into(),
        })
    }
}

/// Stands in for an endpoint that is down.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnavailableJudge;

impl ExternalJudge for UnavailableJudge {
    fn judge(&self, _: &Evidence, _: &str) -> Result<Judgment, JudgeError> {
        Err(JudgeError::Unavailable("no endpoint configured".into()))
    }
}

#[derive(Deserialize)]
struct RecordedEntry {
    expectation: String,
    #[serde(flatten)]
    judgment: Judgment,
}

/// Replays canned verdicts keyed by expectation text.
#[derive(Clone, Debug, Default)]
pub struct RecordedJudge {
    verdicts: BTreeMap<String, Judgment>,
}

impl RecordedJudge {
    /// Parses `[{expectation, verdict, rationale}]`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<RecordedEntry> = serde_json::from_str(text)?;
        Ok(RecordedJudge {
            verdicts: entries
                .into_iter()
                .map(|e| (e.expectation, e.judgment))
                .collect(),
        })
    }
}

impl ExternalJudge for RecordedJudge {
    fn judge(&self, _: &Evidence, expectation: &str) -> Result<Judgment, JudgeError> {
        Ok(self.verdicts.get(expectation).cloned().unwrap_or(Judgment {
            verdict: ExternalVerdict::Unverified,
            rationale: "no recorded verdict".into(),
        }))
    }
}

/// Runs a command per call, writing `{"evidence", "expectation"}` to its
/// stdin and reading a [`Judgment`] from its stdout.
#[derive(Clone, Debug)]
pub struct CommandJudge {
    argv: Vec<String>,
}

impl CommandJudge {
    pub fn new(argv: Vec<String>) -> Result<Self, String> {
        if argv.is_empty() {
            return Err("empty judge command".into());
        }
        Ok(CommandJudge { argv })
    }
}

impl ExternalJudge for CommandJudge {
    fn judge(&self, evidence: &Evidence, expectation: &str) -> Result<Judgment, JudgeError> {
        let unavailable = |e: String| JudgeError::Unavailable(e);
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| unavailable(format!("cannot spawn `{}`: {e}", self.argv[0])))?;
        let request = serde_json::json!({ "evidence": evidence, "expectation": expectation });
        if let Some(mut stdin) = child.stdin.take() {
            let _ = writeln!(stdin, "{request}");
        }
        let output = child
            .wait_with_output()
            .map_err(|e| unavailable(e.to_string()))?;
        if !output.status.success() {
            return Err(unavailable(format!("judge exited with {}", output.status)));
        }
        serde_json::from_slice(&output.stdout).map_err(|e| unavailable(format!("bad judgment: {e}")))
    }
}
