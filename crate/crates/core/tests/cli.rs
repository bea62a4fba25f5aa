mod common;

use std::path::Path;

use common::{fixtures_dir, ggv, ggv_env, suite_args, tagged_processes, toy_cmd};
use serde_json::{json, Value};

fn stdout_json(out: &std::process::Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn args(parts: &[&str], suite: &str) -> Vec<String> {
    let mut v: Vec<String> = parts.iter().map(|s| s.to_string()).collect();
    v.extend(suite_args(suite));
    v
}

fn build_file(id: &str) -> String {
    fixtures_dir().join("builds").join(format!("{id}.build.json")).display().to_string()
}

#[test]
fn validate_exit_codes() {
    let ok = ggv_env(&args(&["validate"], "collider"), &[]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let dir = tempfile::tempdir().unwrap();
    let units = std::fs::read_to_string(fixtures_dir().join("collider.units.json")).unwrap();
    let mut parsed: Value = serde_json::from_str(&units).unwrap();
    parsed[0]["interaction"][0]["action"] = json!("fly");
    let bad = dir.path().join("bad.units.json");
    std::fs::write(&bad, parsed.to_string()).unwrap();
    let mut a = args(&["validate", "--format", "json"], "collider");
    let at = a.iter().position(|s| s == "--units").unwrap();
    a[at + 1] = bad.display().to_string();
    let out = ggv_env(&a, &[]);
    assert_eq!(out.status.code(), Some(2));
    let report = stdout_json(&out);
    assert_eq!(report["errors"], 1);
    let errors: Vec<&Value> = report["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|d| d["severity"] == "error")
        .collect();
    assert_eq!(errors[0]["code"], "unknown-action");

    a[at + 1] = dir.path().join("missing.json").display().to_string();
    let out = ggv_env(&a, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["diagnostics"][0]["code"], "io-not-found");
}

#[test]
fn run_exit_codes_follow_element_labels() {
    let correct = ggv_env(&args(&["run", "--build", &build_file("collider"), "--format", "json"], "collider"), &[]);
    assert_eq!(correct.status.code(), Some(0), "{}", String::from_utf8_lossy(&correct.stderr));
    let report = stdout_json(&correct);
    assert!(report["element_labels"].as_array().unwrap().iter().all(|l| l["label"] == "pass"));

    let faulty = ggv_env(
        &args(&["run", "--build", &build_file("collider+no_game_over"), "--format", "json"], "collider"),
        &[],
    );
    assert_eq!(faulty.status.code(), Some(1));
    let report = stdout_json(&faulty);
    let label = |id: &str| {
        report["element_labels"]
            .as_array()
            .unwrap()
            .iter()
            .find(|l| l["element_id"] == id)
            .cloned()
            .unwrap()
    };
    assert_eq!(label("E3")["label"], "fail");
    assert_eq!(label("E3")["provenance"], "direct_falsification");
    assert_eq!(label("E6")["label"], "fail");
    assert_eq!(label("E6")["provenance"], "propagated");
}

#[test]
fn resume_of_complete_checkpoint_executes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck.ndjson").display().to_string();
    let build = build_file("ledger+double_add");
    let first = ggv_env(&args(&["run", "--build", &build, "--checkpoint", &ck, "--format", "json"], "ledger"), &[]);
    let second = ggv_env(&args(&["resume", "--build", &build, "--checkpoint", &ck, "--format", "json"], "ledger"), &[]);
    assert_eq!(first.status.code(), Some(1));
    assert_eq!(second.status.code(), first.status.code());
    let (a, b) = (stdout_json(&first), stdout_json(&second));
    assert_eq!(b["counts"]["executed"], 0);
    assert_eq!(b["counts"]["skipped"], a["counts"]["executed"]);
    assert_eq!(a["element_labels"], b["element_labels"]);
}

#[test]
fn infrastructure_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("no/such/dir/ck.ndjson").display().to_string();
    let out = ggv_env(&args(&["run", "--checkpoint", &ck], "quest"), &[]);
    assert_eq!(out.status.code(), Some(3));
    let out = ggv_env(&args(&["run", "--runtime-cmd", "/nonexistent/runtime"], "quest"), &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn runtime_command_from_environment() {
    let out = ggv_env(
        &args(&["run", "--format", "json"], "collider"),
        &[("GGV_RUNTIME_CMD", &toy_cmd("--template collider --faults weak_decrement"))],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["build_id"], "collider+weak_decrement");
}

#[test]
fn fixtures_are_deterministic_and_filterable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let r = ggv(&["fixtures", "--out", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(0));
    }
    let list = |root: &Path| {
        let mut files = Vec::new();
        for sub in ["", "builds", "truth"] {
            for e in std::fs::read_dir(root.join(sub)).unwrap() {
                let p = e.unwrap().path();
                if p.is_file() {
                    files.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    };
    let (fa, fb) = (list(&a), list(&b));
    assert_eq!(fa, fb);
    assert_eq!(fa.iter().filter(|(p, _)| p.starts_with("builds")).count(), 12);
    assert_eq!(fa.iter().filter(|(p, _)| p.starts_with("truth")).count(), 12);

    let r = ggv(&["fixtures", "--out", c.to_str().unwrap(), "--template", "collider", "--format", "json"]);
    assert_eq!(stdout_json(&r)["builds"], 4);
    assert_eq!(std::fs::read_dir(c.join("builds")).unwrap().count(), 4);

    let blocked = dir.path().join("file");
    std::fs::write(&blocked, "").unwrap();
    let r = ggv(&["fixtures", "--out", blocked.join("sub").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

fn labels(dir: &Path, name: &str, pairs: &[(&str, &str)]) -> String {
    let list: Vec<Value> = pairs.iter().map(|(e, l)| json!({"element_id": e, "label": l})).collect();
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&list).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn score_votes_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r1 = labels(d, "r1.json", &[("A", "pass"), ("B", "pass"), ("C", "fail"), ("D", "fail")]);
    let r2 = labels(d, "r2.json", &[("A", "pass"), ("B", "fail"), ("C", "fail"), ("D", "pass")]);
    let r3 = labels(d, "r3.json", &[("A", "fail"), ("B", "pass"), ("C", "pass"), ("D", "fail")]);
    let pred = labels(d, "p.json", &[("A", "pass"), ("B", "fail"), ("C", "fail"), ("D", "pass")]);

    let same = ggv(&["score", "--pred", &r1, "--ref", &r1, "--format", "json"]);
    assert_eq!(same.status.code(), Some(0));
    assert_eq!(stdout_json(&same)["runs"][0]["metrics"]["acc"]["exact"], "1/1");

    // Votes: A pass, B pass, C fail, D fail. Against p: tp A, fn B, tn C, fp D.
    let voted = ggv(&["score", "--pred", &pred, "--ref", &r1, &r2, &r3, "--mode", "binary", "--format", "json"]);
    let v = stdout_json(&voted);
    assert_eq!(v["reference"]["labels"], json!({"A": "pass", "B": "pass", "C": "fail", "D": "fail"}));
    let m = &v["runs"][0]["metrics"];
    assert_eq!(m["counts"], json!({"tp": 1, "fp": 1, "fn": 1, "tn": 1, "u_plus": 0, "u_minus": 0}));
    for k in ["acc", "prec", "rec", "f1"] {
        assert_eq!(m[k]["exact"], "1/2", "{k}");
    }

    let unsure = labels(d, "u.json", &[("A", "unverified"), ("B", "pass"), ("C", "fail"), ("D", "fail")]);
    let bin = ggv(&["score", "--pred", &unsure, "--ref", &r1, "--mode", "binary"]);
    assert_eq!(bin.status.code(), Some(2));
    let ext = ggv(&["score", "--pred", &unsure, "--ref", &r1, "--format", "json"]);
    assert_eq!(ext.status.code(), Some(0));
    assert_eq!(stdout_json(&ext)["runs"][0]["metrics"]["acc"]["exact"], "3/4");

    let short = labels(d, "s.json", &[("A", "pass")]);
    assert_eq!(ggv(&["score", "--pred", &short, "--ref", &r1]).status.code(), Some(2));
}

#[test]
fn score_reads_truth_files_and_run_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = ggv_env(
        &args(
            &["run", "--build", &build_file("quest+gate_ignored"), "--report", report.to_str().unwrap()],
            "quest",
        ),
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let truth = fixtures_dir().join("truth/quest+gate_ignored.truth.json");
    let scored = ggv(&[
        "score",
        "--pred",
        report.to_str().unwrap(),
        "--ref",
        truth.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let v = stdout_json(&scored);
    assert_eq!(v["runs"][0]["metrics"]["acc"]["exact"], "1/1");
    assert!(v["mean_wall_clock_ms"].is_number());
}

/// Replaces volatile values so JSON output can be compared to golden files.
fn redact(v: &mut Value) {
    const VOLATILE: [&str; 8] = [
        "wall_clock_ms",
        "worker_time_ms",
        "exec_ms",
        "queued_ms",
        "duration_ms",
        "peak_sessions",
        "mean_wall_clock_ms",
        "max_concurrency",
    ];
    match v {
        Value::Object(map) => {
            for (k, x) in map.iter_mut() {
                if VOLATILE.contains(&k.as_str()) {
                    *x = json!("<redacted>");
                } else if k == "source" || k == "checkpoint_path" || k == "message" {
                    if let Some(s) = x.as_str() {
                        *x = json!(Path::new(s).file_name().map(|f| f.to_string_lossy().into_owned()));
                    }
                } else {
                    redact(x);
                }
            }
        }
        Value::Array(xs) => xs.iter_mut().for_each(redact),
        _ => {}
    }
}

fn golden(name: &str, out: &std::process::Output) {
    let mut v = stdout_json(out);
    redact(&mut v);
    v["exit"] = json!(out.status.code());
    let text = serde_json::to_string_pretty(&v).unwrap() + "\n";
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("GGV_BLESS").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, expected, "golden {name} changed; rerun with GGV_BLESS=1 if intended");
}

#[test]
fn json_output_is_schema_stable() {
    golden("validate", &ggv_env(&args(&["validate", "--format", "json"], "quest"), &[]));
    golden(
        "validate_missing",
        &ggv_env(
            &["validate", "--format", "json", "--spec", "/nonexistent/x.spec.json", "--keypoints", "k", "--units", "u"]
                .map(String::from),
            &[],
        ),
    );
    golden(
        "run",
        &ggv_env(
            &args(&["run", "--build", &build_file("collider+no_game_over"), "--format", "json", "--max-concurrency", "2"], "collider"),
            &[],
        ),
    );
    let dir = tempfile::tempdir().unwrap();
    golden(
        "fixtures",
        &ggv(&["fixtures", "--out", dir.path().to_str().unwrap(), "--template", "quest", "--format", "json"]),
    );
    let truth = |id: &str| fixtures_dir().join(format!("truth/{id}.truth.json")).display().to_string();
    golden(
        "score",
        &ggv(&["score", "--pred", &truth("ledger+double_add"), &truth("ledger"), "--ref", &truth("ledger"), "--format", "json"]),
    );
}

#[test]
fn no_orphan_runtimes_after_commands() {
    let tag = format!("cli-{}", std::process::id());
    let dir = tempfile::tempdir().unwrap();
    let hung = toy_cmd("--template collider --hang-on act");
    let crashing = toy_cmd("--template ledger --crash-on patch");
    let runs: Vec<Vec<String>> = vec![
        args(&["validate", "--runtime-cmd", &toy_cmd("")], "quest"),
        args(&["run", "--runtime-cmd", &toy_cmd(""), "--max-concurrency", "4"], "quest"),
        args(&["run", "--runtime-cmd", &hung, "--timeout-ms", "300", "--max-concurrency", "8"], "collider"),
        args(&["run", "--runtime-cmd", &crashing, "--retries", "1"], "ledger"),
        args(
            &["run", "--runtime-cmd", &toy_cmd(""), "--checkpoint", dir.path().join("ck").to_str().unwrap()],
            "ledger",
        ),
    ];
    for a in &runs {
        let out = ggv_env(a, &[("GGV_AUDIT_TAG", &tag)]);
        assert!(out.status.code().is_some(), "{a:?}");
        let left = tagged_processes(&tag);
        assert!(left.is_empty(), "orphans {left:?} after {a:?}");
    }
}
