use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::parse::{CmpOp, Expr, Term};
use crate::injection::state::{lookup, number, values_equal};
use crate::injection::{Evidence, EvidenceStatus};

/// One evaluated sub-expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub expr: String,
    pub value: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub holds: bool,
    pub trace: Vec<TraceEntry>,
}

enum Resolved {
    Value(Value),
    Missing,
}

fn resolve(term: &Term, evidence: &Evidence) -> Resolved {
    let get = |root: &Value, path: &str| match lookup(root, path) {
        Some(v) => Resolved::Value(v.clone()),
        None => Resolved::Missing,
    };
    match term {
        Term::Lit(v) => Resolved::Value(v.clone()),
        Term::Pre(p) => get(&evidence.pre.state, p),
        Term::Post(p) => get(&evidence.post.state, p),
        Term::Delta(p) => {
            let pre = lookup(&evidence.pre.state, p).and_then(Value::as_f64);
            let post = lookup(&evidence.post.state, p).and_then(Value::as_f64);
            match (pre, post) {
                (Some(a), Some(b)) => Resolved::Value(number(b - a)),
                _ => Resolved::Missing,
            }
        }
    }
}

struct Eval<'a> {
    evidence: &'a Evidence,
    trace: Vec<TraceEntry>,
}

impl Eval<'_> {
    fn record(&mut self, expr: &Expr, holds: bool, note: Option<String>) -> bool {
        self.trace.push(TraceEntry {
            expr: expr.to_string(),
            value: Value::Bool(holds),
            note,
        });
        holds
    }

    fn compare(&mut self, expr: &Expr, op: CmpOp, lhs: &Term, rhs: &Term) -> bool {
        let (a, b) = match (resolve(lhs, self.evidence), resolve(rhs, self.evidence)) {
            (Resolved::Value(a), Resolved::Value(b)) => (a, b),
            (l, r) => {
                let missing: Vec<String> = [(lhs, l), (rhs, r)]
                    .into_iter()
                    .filter(|(_, v)| matches!(v, Resolved::Missing))
                    .map(|(t, _)| t.to_string())
                    .collect();
                let note = format!("missing-path: {}", missing.join(", "));
                return self.record(expr, false, Some(note));
            }
        };
        let note = Some(format!("{a} vs {b}"));
        let holds = match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => op.holds(x, y),
            _ => match op {
                CmpOp::Eq => values_equal(&a, &b),
                CmpOp::Ne => !values_equal(&a, &b),
                _ => {
                    let note = Some(format!("type-mismatch: {a} vs {b}"));
                    return self.record(expr, false, note);
                }
            },
        };
        self.record(expr, holds, note)
    }

    fn eval(&mut self, expr: &Expr) -> bool {
        let ev = self.evidence;
        match expr {
            Expr::Cmp { op, lhs, rhs } => self.compare(expr, *op, lhs, rhs),
            Expr::Exists(p) => {
                let found = lookup(&ev.post.state, p).is_some();
                let note = (!found).then(|| "missing-path".to_string());
                self.record(expr, found, note)
            }
            Expr::Event(kind) => {
                let seen = ev.events.iter().any(|e| &e.kind == kind);
                self.record(expr, seen, None)
            }
            Expr::EventCount { kind, op, n } => {
                let count = ev.events.iter().filter(|e| &e.kind == kind).count();
                let holds = op.holds(count as f64, *n);
                self.record(expr, holds, Some(format!("count {count}")))
            }
            Expr::LogContains(s) => {
                let found = ev.logs.iter().any(|l| l.contains(s.as_str()));
                self.record(expr, found, None)
            }
            Expr::All(xs) => {
                let values: Vec<bool> = xs.iter().map(|x| self.eval(x)).collect();
                self.record(expr, values.iter().all(|v| *v), None)
            }
            Expr::Any(xs) => {
                let values: Vec<bool> = xs.iter().map(|x| self.eval(x)).collect();
                self.record(expr, values.iter().any(|v| *v), None)
            }
            Expr::Not(x) => {
                let inner = self.eval(x);
                self.record(expr, !inner, None)
            }
        }
    }
}

/// Evaluates `expr` against collected evidence.
///
/// Total: a missing path makes its comparison false, incomparable values
/// make an ordering false, and evidence from an interaction that did not
/// complete makes the whole assertion false without inspecting it.
/// Connectives evaluate every child so the trace covers every leaf.
pub fn evaluate(expr: &Expr, evidence: &Evidence) -> JudgeOutcome {
    if evidence.status != EvidenceStatus::Completed {
        return JudgeOutcome {
            holds: false,
            trace: vec![TraceEntry {
                expr: "status".into(),
                value: Value::String(evidence.status.to_string()),
                note: Some("status short-circuit".into()),
            }],
        };
    }
    let mut eval = Eval {
        evidence,
        trace: Vec::new(),
    };
    let holds = eval.eval(expr);
    JudgeOutcome {
        holds,
        trace: eval.trace,
    }
}
