//! The mutation corpus: authored specifications, keypoints and units for
//! each toy template, plus the analytically known verdicts for every build.
//!
//! Each unit lists the faults it detects. Expected element labels per fault
//! are authored separately, so a harness run can be compared against both.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::injection::{ActionStep, StatePatchOp};
use crate::scoring::{KeypointVerdict, Label};
use crate::spec_model::{
    Budget, Category, JudgeKind, Keypoint, SpecElement, Specification, Suite, VerdictKind,
    VerificationUnit,
};
use crate::toy::{BuildSpec, Fault, Template};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLabel {
    pub element_id: String,
    pub label: Label,
}

/// Expected verdicts for one build.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub build: String,
    pub template: Template,
    pub faults: Vec<Fault>,
    pub units: BTreeMap<String, VerdictKind>,
    pub keypoints: BTreeMap<String, KeypointVerdict>,
    pub elements: Vec<TruthLabel>,
}

/// How to start a build of the toy runtime.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub build_id: String,
    pub template: Template,
    pub faults: Vec<Fault>,
    /// Reference passed to `launch`.
    pub game: String,
    pub runtime_cmd: String,
}

impl BuildConfig {
    pub fn of(build: &BuildSpec) -> Self {
        let faults: Vec<Fault> = build.faults.iter().copied().collect();
        let mut cmd = format!("ggv toy-runtime --template {}", build.template);
        if !faults.is_empty() {
            let names: Vec<&str> = faults.iter().map(|f| f.name()).collect();
            cmd.push_str(&format!(" --faults {}", names.join(",")));
        }
        cmd.push_str(" --seed {seed}");
        BuildConfig {
            build_id: build.id(),
            template: build.template,
            faults,
            game: build.id(),
            runtime_cmd: cmd,
        }
    }
}

pub struct TemplateCorpus {
    pub template: Template,
    pub spec: Specification,
    pub keypoints: Vec<Keypoint>,
    pub units: Vec<VerificationUnit>,
    detects: BTreeMap<String, BTreeSet<Fault>>,
    failing_elements: BTreeMap<Fault, BTreeSet<String>>,
}

impl TemplateCorpus {
    pub fn suite(&self) -> Suite {
        Suite {
            spec: self.spec.clone(),
            keypoints: self.keypoints.clone(),
            units: self.units.clone(),
        }
    }

    /// Faults under which the unit is expected to fail.
    pub fn detects(&self, unit_id: &str) -> &BTreeSet<Fault> {
        &self.detects[unit_id]
    }

    /// The correct build, one build per fault and, where the template has
    /// room for it, one build combining every fault.
    pub fn builds(&self) -> Vec<BuildSpec> {
        let mut out = vec![BuildSpec::correct(self.template)];
        for &f in self.template.faults() {
            out.push(BuildSpec::new(self.template, [f]).expect("own fault"));
        }
        if self.template == Template::Quest {
            out.push(BuildSpec::new(self.template, self.template.faults().iter().copied()).expect("own faults"));
        }
        out
    }

    pub fn truth(&self, build: &BuildSpec) -> Truth {
        let units: BTreeMap<String, VerdictKind> = self
            .units
            .iter()
            .map(|u| {
                let caught = self.detects[&u.id].iter().any(|f| build.has(*f));
                (u.id.clone(), if caught { VerdictKind::Fail } else { VerdictKind::Pass })
            })
            .collect();
        let keypoints = self
            .keypoints
            .iter()
            .map(|kp| {
                let mine: Vec<VerdictKind> = self
                    .units
                    .iter()
                    .filter(|u| u.keypoint_id == kp.id)
                    .map(|u| units[&u.id])
                    .collect();
                let verdict = if mine.contains(&VerdictKind::Fail) {
                    KeypointVerdict::Fail
                } else if mine.is_empty() {
                    KeypointVerdict::Uncovered
                } else {
                    KeypointVerdict::Pass
                };
                (kp.id.clone(), verdict)
            })
            .collect();
        let failing: BTreeSet<&String> = build
            .faults
            .iter()
            .flat_map(|f| &self.failing_elements[f])
            .collect();
        let elements = self
            .spec
            .elements
            .iter()
            .map(|e| TruthLabel {
                element_id: e.id.clone(),
                label: if failing.contains(&e.id) { Label::Fail } else { Label::Pass },
            })
            .collect();
        Truth {
            build: build.id(),
            template: self.template,
            faults: build.faults.iter().copied().collect(),
            units,
            keypoints,
            elements,
        }
    }
}

pub fn corpus(template: Template) -> TemplateCorpus {
    match template {
        Template::Collider => collider(),
        Template::Ledger => ledger(),
        Template::Quest => quest(),
    }
}

fn element(id: &str, category: Category, text: &str, deps: &[&str]) -> SpecElement {
    SpecElement {
        id: id.into(),
        text: text.into(),
        category,
        depends_on: deps.iter().map(|d| d.to_string()).collect(),
    }
}

fn keypoint(id: &str, element_id: &str, p: &str, a: &str, q: &str) -> Keypoint {
    Keypoint {
        id: id.into(),
        element_id: element_id.into(),
        precondition: p.into(),
        interaction: a.into(),
        postcondition: q.into(),
    }
}

fn unit(id: &str, kp: &str, patch: Vec<StatePatchOp>, steps: Vec<ActionStep>, expectation: &str) -> VerificationUnit {
    VerificationUnit {
        id: id.into(),
        keypoint_id: kp.into(),
        initial_state: false,
        patch,
        interaction: steps,
        expectation: expectation.into(),
        budget: Budget::default(),
        judge: JudgeKind::Programmatic,
    }
}

struct Authoring {
    units: Vec<VerificationUnit>,
    detects: BTreeMap<String, BTreeSet<Fault>>,
}

impl Authoring {
    fn new() -> Self {
        Authoring {
            units: Vec::new(),
            detects: BTreeMap::new(),
        }
    }

    fn add(&mut self, u: VerificationUnit, detects: &[Fault]) {
        self.detects.insert(u.id.clone(), detects.iter().copied().collect());
        self.units.push(u);
    }
}

fn failing(table: &[(Fault, &[&str])]) -> BTreeMap<Fault, BTreeSet<String>> {
    table
        .iter()
        .map(|(f, ids)| (*f, ids.iter().map(|s| s.to_string()).collect()))
        .collect()
}

fn mv(dir: &str) -> ActionStep {
    ActionStep::new("move").param("dir", dir)
}

fn obstacle(id: &str, x: i64, y: i64) -> StatePatchOp {
    StatePatchOp::spawn("obstacle", id, [("pos", json!([x, y]))])
}

fn collider() -> TemplateCorpus {
    use Category::*;
    use Fault::*;
    let spec = Specification::new(
        "collider",
        vec![
            element("E1", Controls, "Arrow keys move the player one cell; the grid edge blocks movement.", &[]),
            element("E2", Physics, "Walking into an obstacle costs the player 25 HP.", &["E1"]),
            element("E3", FailureCondition, "When HP reaches 0 the game is over.", &["E2"]),
            element("E4", Scoring, "Walking onto a coin adds its value to the score and removes the coin.", &["E1"]),
            element("E5", StateTransition, "Once the game is over the player can no longer move.", &["E3"]),
            element("E6", Ui, "The HUD shows current HP and a GAME OVER banner after the game ends.", &["E3"]),
        ],
    )
    .expect("collider spec is valid");
    let keypoints = vec![
        keypoint("K1", "E1", "Player stands on an open cell", "press right", "Player is one cell to the right, or unchanged at the edge"),
        keypoint("K2", "E2", "An obstacle is right of the player", "press right", "HP dropped by exactly 25 and a collision was reported"),
        keypoint("K3", "E3", "HP is low and an obstacle is right of the player", "press right", "HP is 0 and the phase is game_over"),
        keypoint("K4", "E4", "A coin is right of the player", "press right", "Score rose by the coin value and the coin is gone"),
        keypoint("K5", "E5", "The game is over", "press right", "The player did not move"),
        keypoint("K6", "E6", "Player has some HP", "press right", "HUD text matches the HP and phase"),
        keypoint("K7", "E6", "The game is over", "look at the screen", "GAME OVER banner is centered"),
    ];

    let mut a = Authoring::new();
    a.add(
        unit("u-move-right", "K1", vec![StatePatchOp::set("player.pos", json!([0, 0]))], vec![mv("right")],
            "all(eq(post.player.pos.0, 1), eq(post.player.pos.1, 0))"),
        &[],
    );
    a.add(
        unit("u-move-wall", "K1", vec![StatePatchOp::set("player.pos", json!([9, 4]))], vec![mv("right")],
            "all(eq(post.player.pos.0, 9), log_contains(\"rejected\"))"),
        &[],
    );
    a.add(
        unit("u-collide-damage", "K2", vec![obstacle("rock", 1, 0)], vec![mv("right")],
            "all(event(\"collision\"), eq(delta(player.hp), -25))"),
        &[NoHpDecrement, WeakDecrement],
    );
    a.add(
        unit("u-gameover", "K3", vec![StatePatchOp::set("player.hp", 25), obstacle("rock", 1, 0)], vec![mv("right")],
            "all(eq(post.player.hp, 0), eq(post.phase, \"game_over\"), event(\"game_over\"))"),
        &[NoHpDecrement, WeakDecrement, NoGameOver],
    );
    a.add(
        unit("u-gameover-phase", "K3", vec![StatePatchOp::set("player.hp", 10), obstacle("rock", 1, 0)], vec![mv("right")],
            "eq(post.phase, \"game_over\")"),
        &[NoHpDecrement, NoGameOver],
    );
    a.add(
        unit("u-coin", "K4",
            vec![StatePatchOp::spawn("coin", "gold", [("pos", json!([1, 0])), ("value", json!(10))])],
            vec![mv("right")],
            "all(eq(delta(score), 10), not(exists(post.entities.gold)), event_count(\"coin\") eq 1)"),
        &[],
    );
    a.add(
        unit("u-frozen", "K5", vec![StatePatchOp::set("phase", "game_over")], vec![mv("right")],
            "all(eq(post.player.pos.0, 0), log_contains(\"rejected\"))"),
        &[],
    );
    a.add(
        unit("u-frozen-after-death", "K5", vec![StatePatchOp::set("player.hp", 25), obstacle("rock", 1, 0)],
            vec![mv("right"), mv("right")],
            "eq(post.player.pos.0, 1)"),
        &[NoHpDecrement, WeakDecrement, NoGameOver],
    );
    a.add(
        unit("u-hud-hp", "K6", vec![StatePatchOp::set("player.hp", 60)], vec![mv("right")],
            "all(eq(post.hud.hp_text, \"HP 60\"), eq(post.hud.banner, \"\"))"),
        &[],
    );
    a.add(
        unit("u-hud-banner", "K6", vec![StatePatchOp::set("phase", "game_over")], vec![mv("down")],
            "eq(post.hud.banner, \"GAME OVER\")"),
        &[],
    );
    TemplateCorpus {
        template: Template::Collider,
        spec,
        keypoints,
        units: a.units,
        detects: a.detects,
        failing_elements: failing(&[
            (NoHpDecrement, &["E2", "E3", "E5", "E6"]),
            (WeakDecrement, &["E2", "E3", "E5", "E6"]),
            (NoGameOver, &["E3", "E5", "E6"]),
        ]),
    }
}

fn collect(id: &str) -> ActionStep {
    ActionStep::new("collect").param("id", id)
}

fn item(id: &str, value: i64) -> StatePatchOp {
    StatePatchOp::spawn("item", id, [("value", json!(value))])
}

fn ledger() -> TemplateCorpus {
    use Category::*;
    use Fault::*;
    let spec = Specification::new(
        "ledger",
        vec![
            element("L1", Controls, "Collecting picks up a named item; unknown items are ignored.", &[]),
            element("L2", Scoring, "Collecting an item adds its value to the score exactly once.", &["L1"]),
            element("L3", Rules, "A collected item disappears from the world.", &["L1"]),
            element("L4", Progression, "Reaching level x 100 points advances to the next level.", &["L2"]),
            element("L5", Ui, "The HUD shows the current score and level.", &["L4"]),
        ],
    )
    .expect("ledger spec is valid");
    let keypoints = vec![
        keypoint("KL1", "L1", "No item with the requested id exists", "collect the id", "Nothing changes"),
        keypoint("KL2", "L2", "An item of known value exists", "collect it", "Score rose by exactly its value"),
        keypoint("KL3", "L3", "An item exists", "collect it", "The item no longer exists"),
        keypoint("KL4", "L4", "Score is just below the level threshold", "collect an item that crosses it", "Level advanced by one"),
        keypoint("KL5", "L5", "Score and level are known", "collect an item", "HUD text shows the new score and level"),
    ];

    let mut a = Authoring::new();
    a.add(
        unit("u-collect-unknown", "KL1", vec![StatePatchOp::set("score", 0)], vec![collect("ghost")],
            "all(eq(delta(score), 0), log_contains(\"rejected\"), not(event(\"collect\")))"),
        &[],
    );
    a.add(
        unit("u-score-add", "KL2", vec![StatePatchOp::set("score", 0), item("coin", 10)], vec![collect("coin")],
            "eq(delta(score), 10)"),
        &[DoubleAdd],
    );
    a.add(
        unit("u-score-gem", "KL2", vec![StatePatchOp::set("score", 0)], vec![collect("gem")],
            "all(eq(post.score, 50), event(\"collect\"))"),
        &[DoubleAdd],
    );
    a.add(
        unit("u-recollect", "KL2", vec![StatePatchOp::set("score", 0), item("coin", 10)],
            vec![collect("coin"), collect("coin")],
            "eq(post.score, 10)"),
        &[DoubleAdd, NoItemRemoval],
    );
    a.add(
        unit("u-remove", "KL3", vec![item("coin", 10)], vec![collect("coin")],
            "not(exists(post.entities.coin))"),
        &[NoItemRemoval],
    );
    a.add(
        unit("u-level-exact", "KL4", vec![StatePatchOp::set("score", 90), StatePatchOp::set("level", 1), item("coin", 10)],
            vec![collect("coin")],
            "all(eq(post.level, 2), event(\"level_up\"))"),
        &[StrictThreshold],
    );
    a.add(
        unit("u-level-above", "KL4", vec![StatePatchOp::set("score", 90), StatePatchOp::set("level", 1), item("coin", 30)],
            vec![collect("coin")],
            "all(eq(delta(level), 1), event_count(\"level_up\") eq 1)"),
        &[],
    );
    a.add(
        unit("u-hud", "KL5", vec![StatePatchOp::set("score", 0), item("coin", 10)], vec![collect("coin")],
            "eq(post.hud.score_text, \"Score 10 | Lv 1\")"),
        &[DoubleAdd],
    );
    a.add(
        unit("u-hud-level", "KL5", vec![StatePatchOp::set("score", 90), StatePatchOp::set("level", 1), item("coin", 10)],
            vec![collect("coin")],
            "eq(post.hud.score_text, \"Score 100 | Lv 2\")"),
        &[StrictThreshold, DoubleAdd],
    );
    TemplateCorpus {
        template: Template::Ledger,
        spec,
        keypoints,
        units: a.units,
        detects: a.detects,
        failing_elements: failing(&[
            (StrictThreshold, &["L4", "L5"]),
            (DoubleAdd, &["L2", "L4", "L5"]),
            (NoItemRemoval, &["L2", "L3", "L4", "L5"]),
        ]),
    }
}

fn defeat(target: &str) -> ActionStep {
    ActionStep::new("defeat").param("target", target)
}

fn quest() -> TemplateCorpus {
    use Category::*;
    use Fault::*;
    let spec = Specification::new(
        "quest",
        vec![
            element("Q1", Controls, "Attacking names a target; unknown targets are ignored.", &[]),
            element("Q2", Rules, "The boss cannot be damaged before the boss phase begins.", &["Q1"]),
            element("Q3", Progression, "Defeating a boss completes the quest.", &["Q2"]),
            element("Q4", Ui, "The quest log reflects current progress.", &["Q3"]),
        ],
    )
    .expect("quest spec is valid");
    let keypoints = vec![
        keypoint("KQ1", "Q1", "Boss phase active, no such target", "attack the missing target", "No hit is reported"),
        keypoint("KQ2", "Q2", "Boss alive, phase flag set or unset", "attack the boss", "Damage only lands during the boss phase"),
        keypoint("KQ3", "Q3", "Boss phase active, boss nearly dead", "attack the boss", "The quest is complete"),
        keypoint("KQ4", "Q4", "Boss phase active", "attack", "Quest log text matches progress"),
    ];
    let phase = |on: bool| StatePatchOp::set("flags.boss_phase", on);

    let mut a = Authoring::new();
    a.add(
        unit("u-target-unknown", "KQ1", vec![phase(true)], vec![defeat("ghost")],
            "all(not(event(\"hit\")), log_contains(\"rejected\"))"),
        &[],
    );
    a.add(
        unit("u-gate-closed", "KQ2", vec![phase(false)], vec![defeat("boss")],
            "all(eq(delta(entities.boss.hp), 0), not(event(\"hit\")))"),
        &[GateIgnored],
    );
    a.add(
        unit("u-gate-open", "KQ2", vec![phase(true)], vec![defeat("boss")],
            "eq(delta(entities.boss.hp), -25)"),
        &[],
    );
    a.add(
        unit("u-complete", "KQ3", vec![phase(true), StatePatchOp::set("entities.boss.hp", 25)], vec![defeat("boss")],
            "all(eq(post.flags.quest_complete, true), event(\"quest_complete\"))"),
        &[FlagNotSet],
    );
    a.add(
        unit("u-complete-spawned", "KQ3",
            vec![phase(true), StatePatchOp::spawn("boss", "warden", [("hp", json!(10))])],
            vec![defeat("warden")],
            "eq(post.flags.quest_complete, true)"),
        &[FlagNotSet],
    );
    a.add(
        unit("u-log-phase", "KQ4", vec![phase(true)], vec![defeat("ghost")],
            "eq(post.hud.quest_text, \"Defeat the boss\")"),
        &[],
    );
    a.add(
        unit("u-log-complete", "KQ4", vec![phase(true), StatePatchOp::set("entities.boss.hp", 25)], vec![defeat("boss")],
            "eq(post.hud.quest_text, \"Quest complete\")"),
        &[FlagNotSet],
    );
    TemplateCorpus {
        template: Template::Quest,
        spec,
        keypoints,
        units: a.units,
        detects: a.detects,
        failing_elements: failing(&[(GateIgnored, &["Q2", "Q3", "Q4"]), (FlagNotSet, &["Q3", "Q4"])]),
    }
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("fixture serializes");
    out.push(b'\n');
    out
}

/// Every corpus file as (relative path, contents), in a fixed order.
pub fn corpus_files(templates: &[Template]) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    for &t in templates {
        let c = corpus(t);
        let spec = json!({"game_id": c.spec.game_id, "elements": c.spec.elements});
        files.push((PathBuf::from(format!("{t}.spec.json")), pretty(&spec)));
        files.push((PathBuf::from(format!("{t}.keypoints.json")), pretty(&c.keypoints)));
        files.push((PathBuf::from(format!("{t}.units.json")), pretty(&c.units)));
        for build in c.builds() {
            let id = build.id();
            files.push((PathBuf::from(format!("builds/{id}.build.json")), pretty(&BuildConfig::of(&build))));
            files.push((PathBuf::from(format!("truth/{id}.truth.json")), pretty(&c.truth(&build))));
        }
    }
    files
}

/// Writes the corpus under `out`, creating directories as needed.
pub fn write_corpus(out: &Path, templates: &[Template]) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (rel, bytes) in corpus_files(templates) {
        let path = out.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a truth file.
pub fn load_truth(text: &str) -> Result<Truth, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::injection::{Evidence, EvidenceStatus};
    use crate::judge::{evaluate, parse_assertion};
    use crate::scoring::propagate;
    use crate::spec_model::{validate_suite, Diagnostic};
    use crate::toy::{oracle_simulate, template_schema};

    /// Runs a unit through the flat-map oracle and the assertion judge.
    fn oracle_passes(u: &VerificationUnit, build: &BuildSpec) -> bool {
        let pre = oracle_simulate(build, &u.patch, &[]).expect("patch applies").snapshot;
        let run = oracle_simulate(build, &u.patch, &u.interaction).expect("steps run");
        let evidence = Evidence {
            pre,
            post: run.snapshot,
            events: run.events,
            action_trace: Vec::new(),
            logs: run
                .accepted
                .iter()
                .zip(&u.interaction)
                .filter(|(ok, _)| !**ok)
                .map(|(_, s)| format!("{} rejected", s.action))
                .collect(),
            status: EvidenceStatus::Completed,
            duration_ms: 0,
        };
        evaluate(&parse_assertion(&u.expectation).unwrap(), &evidence).holds
    }

    #[test]
    fn corpus_lints_clean() {
        for t in Template::ALL {
            let c = corpus(t);
            let errors: Vec<Diagnostic> = validate_suite(&c.suite(), Some(&template_schema(t)), &Budget::default())
                .into_iter()
                .filter(Diagnostic::is_error)
                .collect();
            assert!(errors.is_empty(), "{t}: {errors:?}");
        }
    }

    #[test]
    fn detects_match_oracle() {
        for t in Template::ALL {
            let c = corpus(t);
            for build in c.builds() {
                let truth = c.truth(&build);
                for u in &c.units {
                    let expected = truth.units[&u.id] == VerdictKind::Pass;
                    assert_eq!(oracle_passes(u, &build), expected, "{build} {}", u.id);
                }
            }
        }
    }

    #[test]
    fn twelve_builds() {
        let n: usize = Template::ALL.iter().map(|t| corpus(*t).builds().len()).sum();
        assert_eq!(n, 12);
        let truths = corpus_files(&Template::ALL)
            .iter()
            .filter(|(p, _)| p.starts_with("truth"))
            .count();
        assert_eq!(truths, 12);
    }

    #[test]
    fn authored_element_failures_agree_with_propagation() {
        for t in Template::ALL {
            let c = corpus(t);
            for build in c.builds() {
                let truth = c.truth(&build);
                let seeds: BTreeMap<String, Label> = c
                    .keypoints
                    .iter()
                    .filter_map(|kp| match truth.keypoints[&kp.id] {
                        KeypointVerdict::Fail => Some((kp.element_id.clone(), Label::Fail)),
                        _ => None,
                    })
                    .collect();
                let labels = propagate(&c.spec, &seeds);
                for e in &truth.elements {
                    assert_eq!(labels[&e.element_id].label, e.label, "{build} {}", e.element_id);
                }
            }
        }
    }
}
