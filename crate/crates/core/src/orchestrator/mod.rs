//! Bounded-concurrency execution of verification units.
//!
//! The scheduler thread owns all mutable run state: it hands immutable unit
//! descriptions to at most `max_concurrency` worker threads, receives
//! results over a channel, persists each one to the checkpoint before
//! counting it, and finally aggregates verdicts through [`crate::scoring`].
//! Every attempt of every unit runs in a fresh runtime session.

pub mod checkpoint;
mod execute;
mod limits;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::injection::{Evidence, RuntimeFactory, RuntimeSchema};
use crate::judge::{ExternalJudge, TraceEntry};
use crate::scoring::{keypoint_verdict, propagate, ElementLabel, KeypointVerdict, Label};
use crate::spec_model::{canonical_hash, validate_suite, Budget, Diagnostic, Suite, VerificationUnit};
use checkpoint::{read_checkpoint, CheckpointRecord, CheckpointWriter};

pub use execute::{derive_seed, execute_unit, ExecContext};
pub use limits::{GaugeGuard, SessionGauge, TokenBucket};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Reference passed to the runtime's `launch`.
    pub game: String,
    pub max_concurrency: usize,
    pub unit_timeout_ms: u64,
    pub retry_budget: u32,
    /// External-judge permits per second.
    pub judge_rate: f64,
    pub judge_burst: u32,
    pub run_seed: u64,
    pub checkpoint_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(game: impl Into<String>) -> Self {
        RunConfig {
            game: game.into(),
            max_concurrency: std::thread::available_parallelism().map_or(1, |n| n.get()),
            unit_timeout_ms: 60_000,
            retry_budget: 2,
            judge_rate: 5.0,
            judge_burst: 10,
            run_seed: 0,
            checkpoint_path: None,
        }
    }

    fn check(&self) -> Result<(), RunError> {
        if self.max_concurrency == 0 {
            return Err(RunError::Config("max_concurrency must be positive".into()));
        }
        if self.unit_timeout_ms == 0 {
            return Err(RunError::Config("unit timeout must be positive".into()));
        }
        if !(self.judge_rate > 0.0) || self.judge_burst == 0 {
            return Err(RunError::Config("judge rate limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub outcome: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub queued_ms: u64,
    pub exec_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitResult {
    pub unit_id: String,
    pub digest: String,
    pub verdict: crate::spec_model::UnitVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_trace_digest: Option<String>,
    pub timing: Timing,
    pub worker_attempts: Vec<AttemptRecord>,
    /// Evidence of the final attempt; not persisted.
    #[serde(skip)]
    pub evidence: Option<Evidence>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint I/O error: {0}")]
    Checkpoint(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RejectedUnit {
    pub unit_id: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeypointSummary {
    pub keypoint_id: String,
    pub element_id: String,
    pub verdict: KeypointVerdict,
    pub units: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coverage {
    pub covered_elements: usize,
    pub total_elements: usize,
    pub ratio: Option<f64>,
    pub uncovered_keypoints: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub executed: usize,
    pub skipped: usize,
    pub superseded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub game_id: String,
    pub build_id: String,
    pub config: RunConfig,
    pub unit_results: Vec<UnitResult>,
    pub rejected_units: Vec<RejectedUnit>,
    pub keypoint_verdicts: Vec<KeypointSummary>,
    pub element_labels: Vec<ElementLabel>,
    pub coverage: Coverage,
    pub counts: Counts,
    /// Parallel wall clock of the whole run.
    pub wall_clock_ms: u64,
    /// Sum of per-unit execution time.
    pub worker_time_ms: u64,
    pub peak_sessions: usize,
}

impl RunReport {
    pub fn any_element_failed(&self) -> bool {
        self.element_labels.iter().any(|l| l.label == Label::Fail)
    }

    pub fn unit(&self, id: &str) -> Option<&UnitResult> {
        self.unit_results.iter().find(|r| r.unit_id == id)
    }

    /// Verdict-bearing content only: unit verdict kinds and reasons,
    /// keypoint verdicts and element labels. Equal for an interrupted and
    /// resumed run and an uninterrupted one.
    pub fn verdict_view(&self) -> serde_json::Value {
        let units: BTreeMap<&str, String> = self
            .unit_results
            .iter()
            .map(|r| (r.unit_id.as_str(), r.verdict.to_string()))
            .collect();
        serde_json::json!({
            "units": units,
            "keypoints": self.keypoint_verdicts,
            "elements": self.element_labels,
        })
    }
}

/// Handshake with a throwaway session for the build id and schema.
fn probe(factory: &dyn RuntimeFactory, config: &RunConfig) -> Option<(String, RuntimeSchema)> {
    let deadline = Instant::now() + Duration::from_millis(config.unit_timeout_ms);
    (0..=config.retry_budget).find_map(|_| {
        let mut session = factory.launch(&config.game, config.run_seed, Some(deadline)).ok()?;
        let found = (session.build_id().to_string(), session.schema().clone());
        session.shutdown();
        Some(found)
    })
}

fn summarize(
    suite: &Suite,
    results: &BTreeMap<String, UnitResult>,
) -> (Vec<KeypointSummary>, Vec<ElementLabel>, Coverage) {
    let mut keypoints = Vec::new();
    let mut seeds: BTreeMap<String, Label> = BTreeMap::new();
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    let mut uncovered = Vec::new();
    for kp in &suite.keypoints {
        let units: Vec<&UnitResult> = suite
            .units
            .iter()
            .filter(|u| u.keypoint_id == kp.id)
            .filter_map(|u| results.get(&u.id))
            .collect();
        let verdict = keypoint_verdict(units.iter().map(|r| &r.verdict));
        match verdict {
            KeypointVerdict::Fail => {
                seeds.insert(kp.element_id.clone(), Label::Fail);
                covered.insert(&kp.element_id);
            }
            KeypointVerdict::Pass => {
                seeds.entry(kp.element_id.clone()).or_insert(Label::Pass);
                covered.insert(&kp.element_id);
            }
            KeypointVerdict::Uncovered => uncovered.push(kp.id.clone()),
        }
        keypoints.push(KeypointSummary {
            keypoint_id: kp.id.clone(),
            element_id: kp.element_id.clone(),
            verdict,
            units: units.iter().map(|r| r.unit_id.clone()).collect(),
        });
    }
    let labels = propagate(&suite.spec, &seeds);
    let ordered = suite
        .spec
        .elements
        .iter()
        .map(|e| labels[&e.id].clone())
        .collect();
    let total = suite.spec.elements.len();
    let covered_elements = covered.iter().filter(|id| suite.spec.element(id).is_some()).count();
    let coverage = Coverage {
        covered_elements,
        total_elements: total,
        ratio: (total > 0).then(|| {
            let r = Ratio::new(covered_elements as u64, total as u64);
            *r.numer() as f64 / *r.denom() as f64
        }),
        uncovered_keypoints: uncovered,
    };
    (keypoints, ordered, coverage)
}

/// Runs every unit that passes lint and aggregates the verdicts. The
/// checkpoint, if configured, is started afresh.
pub fn run(
    suite: &Suite,
    factory: &dyn RuntimeFactory,
    external: Option<&dyn ExternalJudge>,
    config: &RunConfig,
) -> Result<RunReport, RunError> {
    drive(suite, factory, external, config, false)
}

/// Like [`run`], but units with a matching record in the checkpoint are not
/// executed again. A torn trailing record is discarded; a record whose
/// digest no longer matches its unit is superseded by a fresh execution.
pub fn resume(
    suite: &Suite,
    factory: &dyn RuntimeFactory,
    external: Option<&dyn ExternalJudge>,
    config: &RunConfig,
) -> Result<RunReport, RunError> {
    drive(suite, factory, external, config, true)
}

fn drive(
    suite: &Suite,
    factory: &dyn RuntimeFactory,
    external: Option<&dyn ExternalJudge>,
    config: &RunConfig,
    resuming: bool,
) -> Result<RunReport, RunError> {
    config.check()?;
    let started = Instant::now();
    let (build_id, schema) = match probe(factory, config) {
        Some((id, schema)) => (id, Some(schema)),
        None => (config.game.clone(), None),
    };

    let diagnostics = validate_suite(suite, schema.as_ref(), &Budget::default());
    let mut by_unit: BTreeMap<&str, Vec<Diagnostic>> = BTreeMap::new();
    for d in diagnostics.into_iter().filter(Diagnostic::is_error) {
        by_unit.entry(suite_unit_id(suite, &d.location.id)).or_default().push(d);
    }
    let rejected: Vec<RejectedUnit> = by_unit
        .into_iter()
        .filter(|(id, _)| !id.is_empty())
        .map(|(id, diagnostics)| RejectedUnit {
            unit_id: id.to_string(),
            diagnostics,
        })
        .collect();
    let rejected_ids: BTreeSet<&str> = rejected.iter().map(|r| r.unit_id.as_str()).collect();
    let runnable: Vec<(&VerificationUnit, String)> = suite
        .units
        .iter()
        .filter(|u| !rejected_ids.contains(u.id.as_str()))
        .map(|u| (u, canonical_hash(u, &build_id)))
        .collect();

    let mut results: BTreeMap<String, UnitResult> = BTreeMap::new();
    let mut counts = Counts::default();
    let mut writer = None;
    if let Some(path) = &config.checkpoint_path {
        if resuming {
            let (records, valid) = read_checkpoint(path)?;
            let latest: HashMap<&str, &CheckpointRecord> =
                records.iter().map(|r| (r.unit_id.as_str(), r)).collect();
            for (unit, digest) in &runnable {
                match latest.get(unit.id.as_str()) {
                    Some(r) if &r.digest == digest => {
                        results.insert(unit.id.clone(), r.to_result());
                        counts.skipped += 1;
                    }
                    Some(_) => counts.superseded += 1,
                    None => {}
                }
            }
            writer = Some(CheckpointWriter::resume(path, valid)?);
        } else {
            writer = Some(CheckpointWriter::create(path)?);
        }
    }

    let pending: Vec<&(&VerificationUnit, String)> =
        runnable.iter().filter(|(u, _)| !results.contains_key(&u.id)).collect();
    let gauge = SessionGauge::default();
    let bucket = TokenBucket::new(config.judge_rate, config.judge_burst);
    let ctx = ExecContext {
        game: &config.game,
        build_id: &build_id,
        run_seed: config.run_seed,
        retry_budget: config.retry_budget,
        unit_timeout_ms: config.unit_timeout_ms,
        factory,
        external,
        rate_limit: &bucket,
        gauge: &gauge,
    };
    let abort = AtomicBool::new(false);
    let mut failure: Option<std::io::Error> = None;
    let workers = config.max_concurrency.min(pending.len().max(1));

    std::thread::scope(|scope| {
        let (job_tx, job_rx) = crossbeam_channel::unbounded::<&(&VerificationUnit, String)>();
        let (done_tx, done_rx) = crossbeam_channel::unbounded::<UnitResult>();
        for job in &pending {
            job_tx.send(job).expect("queue open");
        }
        drop(job_tx);
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let done_tx = done_tx.clone();
            let (ctx, abort) = (&ctx, &abort);
            scope.spawn(move || {
                for (unit, digest) in job_rx.iter() {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let queued = started.elapsed();
                    let result = execute_unit(unit, digest, ctx, queued);
                    if done_tx.send(result).is_err() {
                        break;
                    }
                }
            });
        }
        drop(done_tx);
        for result in done_rx.iter() {
            if failure.is_some() {
                continue;
            }
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.append(&CheckpointRecord::from_result(&result)) {
                    abort.store(true, Ordering::SeqCst);
                    failure = Some(e);
                    continue;
                }
            }
            counts.executed += 1;
            results.insert(result.unit_id.clone(), result);
        }
    });
    if let Some(e) = failure {
        return Err(RunError::Checkpoint(e));
    }

    let (keypoint_verdicts, element_labels, coverage) = summarize(suite, &results);
    let unit_results: Vec<UnitResult> = runnable
        .iter()
        .filter_map(|(u, _)| results.remove(&u.id))
        .collect();
    let worker_time_ms = unit_results.iter().map(|r| r.timing.exec_ms).sum();
    Ok(RunReport {
        game_id: suite.spec.game_id.clone(),
        build_id,
        config: config.clone(),
        unit_results,
        rejected_units: rejected,
        keypoint_verdicts,
        element_labels,
        coverage,
        counts,
        wall_clock_ms: started.elapsed().as_millis() as u64,
        worker_time_ms,
        peak_sessions: gauge.peak(),
    })
}

/// Diagnostics about a unit carry its id; keypoint-level ones map to "".
fn suite_unit_id<'a>(suite: &'a Suite, id: &str) -> &'a str {
    suite
        .units
        .iter()
        .find(|u| u.id == id)
        .map_or("", |u| u.id.as_str())
}
