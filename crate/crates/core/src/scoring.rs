//! Verdict aggregation and verifier-alignment metrics.
//!
//! Scoring is falsification-oriented: a failed keypoint falsifies its element
//! and every element that transitively depends on it; elements nothing has
//! falsified pass by default. Metrics treat `pass` as the positive class and
//! keep `unverified` predictions in the denominators instead of dropping
//! them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::spec_model::{Specification, UnitVerdict, VerdictKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Pass,
    Fail,
    Unverified,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Label::Pass => "pass",
            Label::Fail => "fail",
            Label::Unverified => "unverified",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DirectFalsification,
    Propagated,
    DefaultPass,
    ExternalInput,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementLabel {
    pub element_id: String,
    pub label: Label,
    #[serde(default = "external")]
    pub provenance: Provenance,
}

fn external() -> Provenance {
    Provenance::ExternalInput
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointVerdict {
    Pass,
    Fail,
    Uncovered,
}

/// Fail if any unit failed; pass if at least one unit passed and none
/// failed; uncovered otherwise. Unverified units neither pass nor fail.
pub fn keypoint_verdict<'a>(results: impl IntoIterator<Item = &'a UnitVerdict>) -> KeypointVerdict {
    let mut passed = false;
    for v in results {
        match v.kind {
            VerdictKind::Fail => return KeypointVerdict::Fail,
            VerdictKind::Pass => passed = true,
            VerdictKind::Unverified => {}
        }
    }
    if passed {
        KeypointVerdict::Pass
    } else {
        KeypointVerdict::Uncovered
    }
}

/// Labels every element of `spec`. Only `Fail` seeds matter: an element
/// fails if it is seeded as failed or depends, transitively, on an element
/// that is.
pub fn propagate(spec: &Specification, seeds: &BTreeMap<String, Label>) -> BTreeMap<String, ElementLabel> {
    let mut failed: BTreeSet<&str> = BTreeSet::new();
    let mut out = BTreeMap::new();
    for id in spec.topological_order() {
        let element = spec.element(id).expect("ordered ids exist");
        let direct = seeds.get(id) == Some(&Label::Fail);
        let inherited = element.depends_on.iter().any(|d| failed.contains(d.as_str()));
        let (label, provenance) = match (direct, inherited) {
            (true, _) => (Label::Fail, Provenance::DirectFalsification),
            (false, true) => (Label::Fail, Provenance::Propagated),
            (false, false) => (Label::Pass, Provenance::DefaultPass),
        };
        if label == Label::Fail {
            failed.insert(id);
        }
        out.insert(
            id.to_string(),
            ElementLabel {
                element_id: id.to_string(),
                label,
                provenance,
            },
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("label sets differ: {0}")]
    KeyMismatch(String),
    #[error("reference label for `{0}` must be pass or fail")]
    UnverifiedReference(String),
    #[error("binary metrics require no unverified predictions (found {0})")]
    ModeViolation(u64),
    #[error("nothing to aggregate")]
    Empty,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub u_plus: u64,
    pub u_minus: u64,
}

impl ConfusionCounts {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn + self.u_plus + self.u_minus
    }

    fn add(&self, o: &ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
            u_plus: self.u_plus + o.u_plus,
            u_minus: self.u_minus + o.u_minus,
        }
    }
}

fn key_mismatch(a: &BTreeMap<String, Label>, b: &BTreeMap<String, Label>) -> Option<ScoreError> {
    let only_a: Vec<&str> = a.keys().filter(|k| !b.contains_key(*k)).map(String::as_str).collect();
    let only_b: Vec<&str> = b.keys().filter(|k| !a.contains_key(*k)).map(String::as_str).collect();
    if only_a.is_empty() && only_b.is_empty() {
        return None;
    }
    Some(ScoreError::KeyMismatch(format!(
        "only in first: [{}]; only in second: [{}]",
        only_a.join(", "),
        only_b.join(", ")
    )))
}

/// Extended confusion counts of predictions against reference labels.
pub fn confusion(
    pred: &BTreeMap<String, Label>,
    reference: &BTreeMap<String, Label>,
) -> Result<ConfusionCounts, ScoreError> {
    if let Some(e) = key_mismatch(pred, reference) {
        return Err(e);
    }
    let mut c = ConfusionCounts::default();
    for (id, p) in pred {
        let cell = match (p, reference[id]) {
            (_, Label::Unverified) => return Err(ScoreError::UnverifiedReference(id.clone())),
            (Label::Pass, Label::Pass) => &mut c.tp,
            (Label::Pass, Label::Fail) => &mut c.fp,
            (Label::Fail, Label::Pass) => &mut c.fn_,
            (Label::Fail, Label::Fail) => &mut c.tn,
            (Label::Unverified, Label::Pass) => &mut c.u_plus,
            (Label::Unverified, Label::Fail) => &mut c.u_minus,
        };
        *cell += 1;
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Binary,
    Extended,
}

/// An exact metric value, or the reason it is undefined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Metric(pub Result<Ratio<u64>, &'static str>);

impl Metric {
    fn ratio(num: u64, den: u64, reason: &'static str) -> Metric {
        Metric(if den == 0 { Err(reason) } else { Ok(Ratio::new(num, den)) })
    }

    pub fn exact(&self) -> Option<Ratio<u64>> {
        self.0.ok()
    }

    pub fn value(&self) -> Option<f64> {
        self.0.ok().map(|r| *r.numer() as f64 / *r.denom() as f64)
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Metric", 3)?;
        match self.0 {
            Ok(r) => {
                st.serialize_field("value", &self.value())?;
                st.serialize_field("exact", &format!("{}/{}", r.numer(), r.denom()))?;
            }
            Err(reason) => {
                st.serialize_field("value", &None::<f64>)?;
                st.serialize_field("reason", reason)?;
            }
        }
        st.end()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => f.pad(&format!("{v:.4}")),
            None => f.pad("n/a"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub counts: ConfusionCounts,
    pub acc: Metric,
    pub prec: Metric,
    pub rec: Metric,
    pub f1: Metric,
}

/// Accuracy, precision, recall and F1 with `pass` as the positive class.
///
/// Extended mode counts unverified predictions as non-agreements for
/// accuracy and unverified-on-pass as missed positives for recall.
pub fn metrics(c: &ConfusionCounts, mode: Mode) -> Result<MetricsReport, ScoreError> {
    let (acc_den, rec_den) = match mode {
        Mode::Binary => {
            let u = c.u_plus + c.u_minus;
            if u > 0 {
                return Err(ScoreError::ModeViolation(u));
            }
            (c.tp + c.fp + c.fn_ + c.tn, c.tp + c.fn_)
        }
        Mode::Extended => (c.n(), c.tp + c.fn_ + c.u_plus),
    };
    let acc = Metric::ratio(c.tp + c.tn, acc_den, "no scored elements");
    let prec = Metric::ratio(c.tp, c.tp + c.fp, "no positive predictions");
    let rec = Metric::ratio(c.tp, rec_den, "no positive references");
    let f1 = Metric(match (prec.0, rec.0) {
        (Ok(p), Ok(r)) if p + r > Ratio::from_integer(0) => Ok(Ratio::from_integer(2) * p * r / (p + r)),
        (Ok(_), Ok(_)) => Err("precision and recall are both zero"),
        _ => Err("precision or recall undefined"),
    });
    Ok(MetricsReport {
        mode,
        counts: *c,
        acc,
        prec,
        rec,
        f1,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Vote {
    pub labels: BTreeMap<String, Label>,
    /// Elements whose vote was an exact tie, broken to fail.
    pub ties: Vec<String>,
}

/// Per-element modal label across labelings; exact ties break to fail.
pub fn majority_vote(labelings: &[BTreeMap<String, Label>]) -> Result<Vote, ScoreError> {
    let first = labelings.first().ok_or(ScoreError::Empty)?;
    for other in &labelings[1..] {
        if let Some(e) = key_mismatch(first, other) {
            return Err(e);
        }
    }
    let mut vote = Vote {
        labels: BTreeMap::new(),
        ties: Vec::new(),
    };
    for id in first.keys() {
        let mut pass = 0usize;
        let mut fail = 0usize;
        for labeling in labelings {
            match labeling[id] {
                Label::Pass => pass += 1,
                Label::Fail => fail += 1,
                Label::Unverified => return Err(ScoreError::UnverifiedReference(id.clone())),
            }
        }
        if pass == fail {
            vote.ties.push(id.clone());
        }
        let label = if pass > fail { Label::Pass } else { Label::Fail };
        vote.labels.insert(id.clone(), label);
    }
    Ok(vote)
}

/// One metric across k runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtK {
    /// Mean of the per-run values over runs where the metric is defined.
    pub macro_mean: Metric,
    /// Runs that contributed to `macro_mean`.
    pub macro_runs: usize,
    /// The metric over counts summed across runs.
    pub micro: Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateReport {
    pub k: usize,
    pub mode: Mode,
    pub acc: AtK,
    pub prec: AtK,
    pub rec: AtK,
    pub f1: AtK,
}

/// Averages per-run reports, both macro (mean of run values) and micro
/// (metrics of pooled counts).
pub fn aggregate(runs: &[MetricsReport], mode: Mode) -> Result<AggregateReport, ScoreError> {
    if runs.is_empty() {
        return Err(ScoreError::Empty);
    }
    let pooled = runs
        .iter()
        .fold(ConfusionCounts::default(), |acc, r| acc.add(&r.counts));
    let micro = metrics(&pooled, mode)?;
    let at_k = |pick: fn(&MetricsReport) -> Metric, micro: Metric| {
        let defined: Vec<Ratio<u64>> = runs.iter().filter_map(|r| pick(r).exact()).collect();
        let macro_mean = Metric(if defined.is_empty() {
            Err("undefined in every run")
        } else {
            let sum = defined.iter().fold(Ratio::from_integer(0), |a, b| a + b);
            Ok(sum / Ratio::from_integer(defined.len() as u64))
        });
        AtK {
            macro_mean,
            macro_runs: defined.len(),
            micro,
        }
    };
    Ok(AggregateReport {
        k: runs.len(),
        mode,
        acc: at_k(|r| r.acc, micro.acc),
        prec: at_k(|r| r.prec, micro.prec),
        rec: at_k(|r| r.rec, micro.rec),
        f1: at_k(|r| r.f1, micro.f1),
    })
}
