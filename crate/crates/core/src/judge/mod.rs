//! Expected outcomes as machine-checkable assertions over evidence.
//!
//! ```text
//! expr := pred | comp | all(expr, ...) | any(expr, ...) | not(expr)
//! comp := op(term, term)        op := eq | ne | lt | le | gt | ge
//! term := pre.<path> | post.<path> | delta(<path>) | number | string | bool
//! pred := exists(post.<path>) | event("t") | event_count("t") op n
//!       | log_contains("s")
//! ```

mod eval;
pub mod external;
mod parse;

pub use eval::{evaluate, JudgeOutcome, TraceEntry};
pub use external::{
    CommandJudge, ConstantJudge, ExternalJudge, ExternalVerdict, JudgeError, Judgment,
    RecordedJudge, UnavailableJudge,
};
pub use parse::{parse_assertion, parse_with_schema, CmpOp, Expr, ParseError, Term};
