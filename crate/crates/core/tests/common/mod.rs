#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ggv::injection::{CommandRuntime, Event, RuntimeCommand, RuntimeFactory, Snapshot};
use ggv::spec_model::Suite;
use ggv::toy::{oracle_simulate, serve, BuildSpec, OracleError, ServeOptions};
use serde_json::{json, Value};

pub fn ggv_bin() -> &'static str {
    env!("CARGO_BIN_EXE_ggv")
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn suite_args(template: &str) -> Vec<String> {
    let dir = fixtures_dir();
    ["spec", "keypoints", "units"]
        .iter()
        .flat_map(|kind| {
            [
                format!("--{kind}"),
                dir.join(format!("{template}.{kind}.json")).display().to_string(),
            ]
        })
        .collect()
}

pub fn ggv(args: &[&str]) -> Output {
    Command::new(ggv_bin()).args(args).output().expect("ggv runs")
}

pub fn ggv_env(args: &[String], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(ggv_bin());
    cmd.args(args).env_remove("GGV_RUNTIME_CMD");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("ggv runs")
}

/// Command template for the toy runtime served by the built binary.
pub fn toy_cmd(extra: &str) -> String {
    format!("{} toy-runtime --seed {{seed}} {extra}", ggv_bin())
}

pub fn toy_factory(extra: &str) -> CommandRuntime {
    CommandRuntime::new(RuntimeCommand::parse(&toy_cmd(extra)).unwrap())
}

/// Pids of live processes whose environment carries `tag`.
pub fn tagged_processes(tag: &str) -> Vec<u32> {
    let needle = format!("GGV_AUDIT_TAG={tag}");
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    entries
        .filter_map(Result::ok)
        .filter_map(|e| e.file_name().to_str()?.parse::<u32>().ok())
        .filter(|pid| {
            let Ok(env) = std::fs::read(format!("/proc/{pid}/environ")) else {
                return false;
            };
            let is_zombie = std::fs::read_to_string(format!("/proc/{pid}/stat"))
                .map(|s| s.rsplit(')').next().unwrap_or("").trim_start().starts_with('Z'))
                .unwrap_or(false);
            !is_zombie && env.split(|b| *b == 0).any(|kv| kv == needle.as_bytes())
        })
        .collect()
}

pub mod exprs;
pub mod gen;

/// What a runtime reported for one scenario, in oracle terms.
#[derive(Debug, PartialEq)]
pub enum Observed {
    Ran { snapshot: Snapshot, events: Vec<Event>, accepted: Vec<bool> },
    PatchRejected { index: usize, code: String },
    InvalidStep,
}

pub fn oracle_observed(
    build: &BuildSpec,
    patch: &[ggv::injection::StatePatchOp],
    steps: &[ggv::injection::ActionStep],
) -> Observed {
    // The runtime sees the patch before the steps, so patch errors win.
    if let Err(OracleError::Patch { index, kind }) = oracle_simulate(build, patch, &[]) {
        return Observed::PatchRejected {
            index,
            code: serde_json::to_value(kind).unwrap().as_str().unwrap().to_string(),
        };
    }
    match oracle_simulate(build, patch, steps) {
        Ok(run) => Observed::Ran {
            snapshot: run.snapshot,
            events: run.events,
            accepted: run.accepted,
        },
        Err(OracleError::ZeroTicks { .. }) => Observed::InvalidStep,
        Err(e) => panic!("unexpected {e}"),
    }
}

/// Drives `serve` in-process with a scripted request stream.
pub fn served_observed(
    build: &BuildSpec,
    patch: &[ggv::injection::StatePatchOp],
    steps: &[ggv::injection::ActionStep],
    seed: u64,
) -> Observed {
    let mut requests = vec![json!({"op": "launch", "game": build.id(), "seed": seed})];
    if !patch.is_empty() {
        requests.push(json!({"op": "patch", "ops": patch}));
    }
    if !steps.is_empty() {
        requests.push(json!({"op": "act", "steps": steps}));
    }
    requests.push(json!({"op": "snapshot"}));
    requests.push(json!({"op": "shutdown"}));
    let input: String = requests.iter().map(|r| format!("{r}\n")).collect();
    let mut output = Vec::new();
    serve(input.as_bytes(), &mut output, &ServeOptions::default()).unwrap();
    let responses: Vec<Value> = output
        .split(|b| *b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect();
    assert_eq!(responses.len(), requests.len());
    assert_eq!(responses[0]["ok"], true);
    let mut at = 1;
    if !patch.is_empty() {
        let r = &responses[at];
        if r["ok"] == false {
            return Observed::PatchRejected {
                index: r["error"]["op_index"].as_u64().unwrap() as usize,
                code: r["error"]["code"].as_str().unwrap().to_string(),
            };
        }
        at += 1;
    }
    let mut events = Vec::new();
    let mut accepted = Vec::new();
    if !steps.is_empty() {
        let r = &responses[at];
        if r["ok"] == false {
            assert_eq!(r["error"]["code"], "invalid-step");
            return Observed::InvalidStep;
        }
        events = serde_json::from_value(r["events"].clone()).unwrap();
        accepted = r["trace"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["accepted"].as_bool().unwrap())
            .collect();
        at += 1;
    }
    let snapshot = serde_json::from_value(responses[at]["snapshot"].clone()).unwrap();
    Observed::Ran { snapshot, events, accepted }
}

/// Same scenario through a real runtime process.
pub fn session_observed(
    factory: &dyn RuntimeFactory,
    build: &BuildSpec,
    patch: &[ggv::injection::StatePatchOp],
    steps: &[ggv::injection::ActionStep],
    seed: u64,
) -> Observed {
    use ggv::injection::SessionError;
    let mut s = factory.launch(&build.id(), seed, None).unwrap();
    if !patch.is_empty() {
        let report = s.apply_patch(patch).unwrap();
        if let Some((index, failed)) = report.failure() {
            let code = failed.code.clone().unwrap();
            s.shutdown();
            return Observed::PatchRejected { index, code };
        }
    }
    let mut events = Vec::new();
    let mut accepted = Vec::new();
    if !steps.is_empty() {
        match s.execute(steps) {
            Ok(o) => {
                events = o.events;
                accepted = o.trace.iter().map(|t| t.accepted).collect();
            }
            Err(SessionError::Remote { code, .. }) if code == "invalid-step" => {
                s.shutdown();
                return Observed::InvalidStep;
            }
            Err(e) => panic!("{e}"),
        }
    }
    let snapshot = s.snapshot().unwrap();
    s.shutdown();
    Observed::Ran { snapshot, events, accepted }
}

/// `copies` renamed copies of every unit in a template's corpus.
pub fn replicated_suite(template: ggv::toy::Template, copies: usize) -> Suite {
    let mut suite = ggv::fixtures::corpus(template).suite();
    let units = std::mem::take(&mut suite.units);
    for i in 0..copies {
        for u in &units {
            let mut u = u.clone();
            u.id = format!("{}-{i}", u.id);
            suite.units.push(u);
        }
    }
    suite
}

/// Writes the suite as the three CLI input files and returns the flags.
pub fn write_suite(dir: &Path, suite: &Suite) -> Vec<String> {
    let spec = json!({"game_id": suite.spec.game_id, "elements": suite.spec.elements});
    let files = [
        ("spec", spec),
        ("keypoints", serde_json::to_value(&suite.keypoints).unwrap()),
        ("units", serde_json::to_value(&suite.units).unwrap()),
    ];
    let mut args = Vec::new();
    for (kind, value) in files {
        let path = dir.join(format!("suite.{kind}.json"));
        std::fs::write(&path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
        args.push(format!("--{kind}"));
        args.push(path.display().to_string());
    }
    args
}

/// Verdict-bearing parts of a serialized run report.
pub fn report_view(report: &Value) -> Value {
    let units: BTreeMap<&str, &Value> = report["unit_results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["unit_id"].as_str().unwrap(), &r["verdict"]))
        .map(|(id, v)| (id, v.get("fail_reason").unwrap_or(&v["kind"])))
        .collect();
    json!({
        "units": units,
        "keypoints": report["keypoint_verdicts"],
        "elements": report["element_labels"],
    })
}
