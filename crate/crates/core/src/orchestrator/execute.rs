//! The four-step unit pipeline: launch, inject, interact, judge.

use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use super::limits::{SessionGauge, TokenBucket};
use super::{AttemptRecord, Timing, UnitResult};
use crate::injection::state::unrealized_effects;
use crate::injection::{Evidence, EvidenceStatus, RuntimeFactory, RuntimeSession, SessionError};
use crate::judge::{evaluate, parse_assertion, ExternalJudge, ExternalVerdict, JudgeError, TraceEntry};
use crate::spec_model::{FailReason, JudgeKind, UnitVerdict, VerificationUnit};

/// Stable per-attempt seed: decorrelated across units and attempts, equal
/// across runs with the same run seed.
pub fn derive_seed(run_seed: u64, unit_id: &str, attempt: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update((unit_id.len() as u64).to_le_bytes());
    h.update(unit_id.as_bytes());
    h.update(attempt.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Shared, read-only context for executing units.
pub struct ExecContext<'a> {
    pub game: &'a str,
    pub build_id: &'a str,
    pub run_seed: u64,
    pub retry_budget: u32,
    pub unit_timeout_ms: u64,
    pub factory: &'a dyn RuntimeFactory,
    pub external: Option<&'a dyn ExternalJudge>,
    pub rate_limit: &'a TokenBucket,
    pub gauge: &'a SessionGauge,
}

enum Attempt {
    Final {
        verdict: Verdict,
        evidence: Option<Evidence>,
        trace: Vec<TraceEntry>,
    },
    Retry(Verdict, String),
}

#[derive(Clone, Copy)]
enum Verdict {
    Pass,
    Fail(FailReason),
    Unverified,
}

/// Shuts the session down however the attempt ends.
struct Live(Box<dyn RuntimeSession>);

impl Drop for Live {
    fn drop(&mut self) {
        self.0.shutdown();
    }
}

fn describe(e: &SessionError) -> String {
    e.to_string()
}

fn attempt(unit: &VerificationUnit, ctx: &ExecContext<'_>, seed: u64, deadline: Instant) -> Attempt {
    let _open = ctx.gauge.enter();
    let mut session = match ctx.factory.launch(ctx.game, seed, Some(deadline)) {
        Ok(s) => Live(s),
        Err(e) => return Attempt::Retry(Verdict::Fail(FailReason::BuildLaunchFailure), describe(&e)),
    };
    let s = &mut session.0;
    s.set_deadline(Some(deadline));
    let injection = |detail: String| Attempt::Retry(Verdict::Fail(FailReason::InjectionFailure), detail);

    let pre = if unit.patch.is_empty() {
        match s.snapshot() {
            Ok(snap) => snap,
            Err(e) => return injection(describe(&e)),
        }
    } else {
        let report = match s.apply_patch(&unit.patch) {
            Ok(r) => r,
            Err(e) => return injection(describe(&e)),
        };
        if let Some((index, failed)) = report.failure() {
            return injection(format!(
                "op {index}: {} {}",
                failed.code.as_deref().unwrap_or("error"),
                failed.message.as_deref().unwrap_or("")
            ));
        }
        let unrealized = unrealized_effects(&unit.patch, s.schema(), &report.realized.state);
        if !unrealized.is_empty() {
            return injection(format!("patch not realized: {}", unrealized.join("; ")));
        }
        report.realized
    };

    let started = Instant::now();
    let broken = |status: EvidenceStatus, detail: String| {
        let evidence = Evidence {
            pre: pre.clone(),
            post: pre.clone(),
            events: Vec::new(),
            action_trace: Vec::new(),
            logs: vec![detail],
            status,
            duration_ms: started.elapsed().as_millis() as u64,
        };
        let trace = evaluate(&crate::judge::Expr::All(Vec::new()), &evidence).trace;
        Attempt::Final {
            verdict: Verdict::Fail(FailReason::InteractionFailure),
            evidence: Some(evidence),
            trace,
        }
    };
    let status_of = |e: &SessionError| match e {
        SessionError::Timeout => EvidenceStatus::Timeout,
        _ => EvidenceStatus::RuntimeCrash,
    };
    let outcome = match s.execute(&unit.interaction) {
        Ok(o) => o,
        Err(e) => return broken(status_of(&e), describe(&e)),
    };
    let post = match s.snapshot() {
        Ok(p) => p,
        Err(e) => return broken(status_of(&e), describe(&e)),
    };
    let evidence = Evidence {
        pre,
        post,
        events: outcome.events,
        action_trace: outcome.trace,
        logs: outcome.logs,
        status: EvidenceStatus::Completed,
        duration_ms: started.elapsed().as_millis() as u64,
    };
    drop(session);

    match unit.judge {
        JudgeKind::Programmatic => {
            let (holds, trace) = match parse_assertion(&unit.expectation) {
                Ok(expr) => {
                    let out = evaluate(&expr, &evidence);
                    (out.holds, out.trace)
                }
                Err(e) => (
                    false,
                    vec![TraceEntry {
                        expr: unit.expectation.clone(),
                        value: serde_json::Value::Bool(false),
                        note: Some(e.to_string()),
                    }],
                ),
            };
            Attempt::Final {
                verdict: if holds { Verdict::Pass } else { Verdict::Fail(FailReason::OutcomeMismatch) },
                evidence: Some(evidence),
                trace,
            }
        }
        JudgeKind::External => {
            let Some(judge) = ctx.external else {
                return Attempt::Retry(Verdict::Unverified, "no external judge configured".into());
            };
            ctx.rate_limit.acquire();
            match judge.judge(&evidence, &unit.expectation) {
                Ok(j) => Attempt::Final {
                    verdict: match j.verdict {
                        ExternalVerdict::Pass => Verdict::Pass,
                        ExternalVerdict::Fail => Verdict::Fail(FailReason::OutcomeMismatch),
                        ExternalVerdict::Unverified => Verdict::Unverified,
                    },
                    evidence: Some(evidence),
                    trace: vec![TraceEntry {
                        expr: unit.expectation.clone(),
                        value: serde_json::to_value(j.verdict).expect("verdict serializes"),
                        note: Some(j.rationale),
                    }],
                },
                Err(JudgeError::Unavailable(why)) => Attempt::Retry(Verdict::Unverified, why),
            }
        }
    }
}

fn verdict_name(v: Verdict) -> String {
    match v {
        Verdict::Pass => "pass".into(),
        Verdict::Fail(r) => format!("fail({r})"),
        Verdict::Unverified => "unverified".into(),
    }
}

fn trace_digest(trace: &[TraceEntry]) -> Option<String> {
    if trace.is_empty() {
        return None;
    }
    let bytes = serde_json::to_vec(trace).expect("trace serializes");
    Some(Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs one unit to a verdict. Each attempt gets a fresh session; launch,
/// injection and judge-availability problems are retried, interaction
/// failures and outcome mismatches are final.
pub fn execute_unit(unit: &VerificationUnit, digest: &str, ctx: &ExecContext<'_>, queued: Duration) -> UnitResult {
    let started = Instant::now();
    let bound = Duration::from_millis(ctx.unit_timeout_ms.min(unit.budget.timeout_ms).max(1));
    let mut attempts = Vec::new();
    let mut last = Verdict::Fail(FailReason::BuildLaunchFailure);
    let mut final_evidence = None;
    let mut final_trace = Vec::new();
    for n in 0..=ctx.retry_budget {
        let seed = derive_seed(ctx.run_seed, &unit.id, n);
        match attempt(unit, ctx, seed, Instant::now() + bound) {
            Attempt::Final { verdict, evidence, trace } => {
                attempts.push(AttemptRecord {
                    attempt: n,
                    outcome: verdict_name(verdict),
                });
                last = verdict;
                final_evidence = evidence;
                final_trace = trace;
                break;
            }
            Attempt::Retry(verdict, detail) => {
                attempts.push(AttemptRecord {
                    attempt: n,
                    outcome: format!("{}: {detail}", verdict_name(verdict)),
                });
                last = verdict;
            }
        }
    }
    let count = attempts.len() as u32;
    let exec_ms = started.elapsed().as_millis() as u64;
    let verdict = match last {
        Verdict::Pass => UnitVerdict::pass(count, exec_ms),
        Verdict::Fail(reason) => UnitVerdict::fail(reason, count, exec_ms),
        Verdict::Unverified => UnitVerdict::unverified(count, exec_ms),
    };
    UnitResult {
        unit_id: unit.id.clone(),
        digest: digest.to_string(),
        verdict,
        judge_trace_digest: trace_digest(&final_trace),
        timing: Timing {
            queued_ms: queued.as_millis() as u64,
            exec_ms,
        },
        worker_attempts: attempts,
        evidence: final_evidence,
        trace: final_trace,
    }
}
