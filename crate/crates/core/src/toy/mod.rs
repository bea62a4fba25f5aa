//! Deterministic toy game runtime with seedable faults.
//!
//! Three templates each exercise one failure family: `collider` (collision
//! handling and game over), `ledger` (reward settlement and level
//! thresholds) and `quest` (phase-gated progression). Faults are named
//! flags that change one rule, so a harness verdict on any build can be
//! checked against an analytically known answer.
//!
//! [`Engine`] is the runtime proper and is what [`serve`] exposes over
//! stdio. [`oracle_simulate`] re-implements the same rules on a flat path
//! map and is kept free of any engine code.

mod collider;
mod engine;
mod ledger;
mod local;
pub mod oracle;
mod quest;
mod server;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{template_schema, Engine};
pub use local::{LocalRuntime, LocalSession};
pub use oracle::{oracle_simulate, OracleError, OracleRun};
pub use server::{serve, HangPoint, ServeExit, ServeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Collider,
    Ledger,
    Quest,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Collider, Template::Ledger, Template::Quest];

    pub fn name(self) -> &'static str {
        match self {
            Template::Collider => "collider",
            Template::Ledger => "ledger",
            Template::Quest => "quest",
        }
    }

    pub fn faults(self) -> &'static [Fault] {
        match self {
            Template::Collider => &[Fault::NoHpDecrement, Fault::WeakDecrement, Fault::NoGameOver],
            Template::Ledger => &[Fault::StrictThreshold, Fault::DoubleAdd, Fault::NoItemRemoval],
            Template::Quest => &[Fault::GateIgnored, Fault::FlagNotSet],
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| BuildError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    NoHpDecrement,
    WeakDecrement,
    NoGameOver,
    StrictThreshold,
    DoubleAdd,
    NoItemRemoval,
    GateIgnored,
    FlagNotSet,
}

impl Fault {
    pub const ALL: [Fault; 8] = [
        Fault::NoHpDecrement,
        Fault::WeakDecrement,
        Fault::NoGameOver,
        Fault::StrictThreshold,
        Fault::DoubleAdd,
        Fault::NoItemRemoval,
        Fault::GateIgnored,
        Fault::FlagNotSet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::NoHpDecrement => "no_hp_decrement",
            Fault::WeakDecrement => "weak_decrement",
            Fault::NoGameOver => "no_game_over",
            Fault::StrictThreshold => "strict_threshold",
            Fault::DoubleAdd => "double_add",
            Fault::NoItemRemoval => "no_item_removal",
            Fault::GateIgnored => "gate_ignored",
            Fault::FlagNotSet => "flag_not_set",
        }
    }

    pub fn template(self) -> Template {
        Template::ALL
            .into_iter()
            .find(|t| t.faults().contains(&self))
            .expect("every fault belongs to a template")
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fault {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fault::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| BuildError::UnknownFault(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown fault `{0}`")]
    UnknownFault(String),
    #[error("fault `{fault}` does not apply to template `{template}`")]
    ForeignFault { fault: Fault, template: Template },
}

/// A template plus the faults compiled into it.
///
/// The build id is `template` for the correct build and
/// `template+fault_a+fault_b` (faults sorted) otherwise.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BuildSpec {
    pub template: Template,
    pub faults: BTreeSet<Fault>,
}

impl BuildSpec {
    pub fn correct(template: Template) -> Self {
        BuildSpec {
            template,
            faults: BTreeSet::new(),
        }
    }

    pub fn new(template: Template, faults: impl IntoIterator<Item = Fault>) -> Result<Self, BuildError> {
        let faults: BTreeSet<Fault> = faults.into_iter().collect();
        if let Some(fault) = faults.iter().find(|f| f.template() != template) {
            return Err(BuildError::ForeignFault {
                fault: *fault,
                template,
            });
        }
        Ok(BuildSpec { template, faults })
    }

    pub fn has(&self, fault: Fault) -> bool {
        self.faults.contains(&fault)
    }

    pub fn id(&self) -> String {
        let mut id = self.template.name().to_string();
        for fault in &self.faults {
            id.push('+');
            id.push_str(fault.name());
        }
        id
    }

    /// Adds more faults to this build.
    pub fn with_faults(&self, extra: &BTreeSet<Fault>) -> Result<Self, BuildError> {
        BuildSpec::new(self.template, self.faults.iter().chain(extra).copied())
    }
}

impl fmt::Display for BuildSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for BuildSpec {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('+');
        let template: Template = parts.next().unwrap_or("").parse()?;
        let faults = parts.map(str::parse).collect::<Result<Vec<Fault>, _>>()?;
        BuildSpec::new(template, faults)
    }
}

/// Parses a comma-separated fault list; empty input yields no faults.
pub fn parse_fault_list(list: &str) -> Result<BTreeSet<Fault>, BuildError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}
