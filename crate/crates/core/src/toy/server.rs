//! Stdio front end for the toy engine.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::local::{resolve_launch, validate_steps};
use super::{BuildSpec, Engine};
use crate::injection::wire::{
    encode_err, encode_ok, EventsPayload, LaunchPayload, PatchPayload, Request, SnapshotPayload,
    WireError,
};

/// Request kinds at which a misbehaving runtime can be told to stall or die.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum HangPoint {
    Launch,
    Patch,
    Act,
}

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    /// Build this process serves; `None` accepts any build reference.
    pub build: Option<BuildSpec>,
    /// Seed used when a launch request omits one.
    pub default_seed: u64,
    /// Added to every `act` request.
    pub latency: Option<Duration>,
    /// Never answer requests of this kind.
    pub hang_on: Option<HangPoint>,
    /// Exit without answering requests of this kind.
    pub crash_on: Option<HangPoint>,
    /// Adversarial variant: a marker file in this directory, keyed by
    /// template, is written after every `act`; any session launched while
    /// the marker exists starts from leaked state.
    pub ambient_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServeExit {
    /// A `shutdown` request was answered.
    Shutdown,
    /// The transport closed first.
    Eof,
    /// Simulated crash requested through [`ServeOptions::crash_on`].
    Crash,
}

fn hang_forever() -> ! {
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}

fn ambient_marker(options: &ServeOptions, engine: &Engine) -> Option<PathBuf> {
    let dir = options.ambient_dir.as_ref()?;
    Some(dir.join(format!("ggv-ambient-{}.txt", engine.build().template)))
}

fn op_name(value: &Value) -> Option<&str> {
    value.get("op").and_then(Value::as_str)
}

/// Serves the wire protocol until `shutdown` or end of input.
///
/// Malformed or out-of-order requests are answered with `{"ok":false}`;
/// only I/O errors on the transport end the loop early.
pub fn serve<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    options: &ServeOptions,
) -> io::Result<ServeExit> {
    let mut engine: Option<Engine> = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Result<Value, _> = serde_json::from_str(&line);
        let request = match raw.as_ref().map(|v| (op_name(v), Request::deserialize(v))) {
            Ok((_, Ok(request))) => request,
            Ok((Some(op), Err(_)))
                if !["launch", "patch", "act", "snapshot", "events", "shutdown"].contains(&op) =>
            {
                respond(&mut writer, encode_err(&WireError::new("unknown-op", format!("unknown op `{op}`")), None))?;
                continue;
            }
            Ok((_, Err(e))) => {
                respond(&mut writer, encode_err(&WireError::new("bad-request", e.to_string()), None))?;
                continue;
            }
            Err(e) => {
                respond(&mut writer, encode_err(&WireError::new("bad-request", e.to_string()), None))?;
                continue;
            }
        };
        let point = match &request {
            Request::Launch { .. } => Some(HangPoint::Launch),
            Request::Patch { .. } => Some(HangPoint::Patch),
            Request::Act { .. } => Some(HangPoint::Act),
            _ => None,
        };
        if point.is_some() && point == options.hang_on {
            hang_forever();
        }
        if point.is_some() && point == options.crash_on {
            return Ok(ServeExit::Crash);
        }
        let response = match request {
            Request::Shutdown => {
                respond(&mut writer, encode_ok(&json!({})))?;
                return Ok(ServeExit::Shutdown);
            }
            Request::Launch { game, seed } => {
                if engine.is_some() {
                    encode_err(&WireError::new("already-launched", "session already launched"), None)
                } else {
                    match resolve_launch(options.build.as_ref(), &game) {
                        Err(message) => encode_err(&WireError::new("launch-failed", message), None),
                        Ok(build) => {
                            let mut fresh = Engine::launch(build, seed.unwrap_or(options.default_seed));
                            if ambient_marker(options, &fresh).is_some_and(|m| m.exists()) {
                                fresh.contaminate();
                            }
                            let payload = LaunchPayload {
                                build: fresh.build().id(),
                                schema: fresh.schema().clone(),
                                snapshot: fresh.snapshot(),
                            };
                            engine = Some(fresh);
                            encode_ok(&payload)
                        }
                    }
                }
            }
            request => match engine.as_mut() {
                None => encode_err(&WireError::new("not-launched", "launch first"), None),
                Some(engine) => handle(engine, request, options),
            },
        };
        respond(&mut writer, response)?;
    }
    Ok(ServeExit::Eof)
}

fn handle(engine: &mut Engine, request: Request, options: &ServeOptions) -> String {
    match request {
        Request::Patch { ops } => {
            let report = engine.apply_patch(&ops);
            match report.failure() {
                None => encode_ok(&PatchPayload {
                    results: report.results,
                    snapshot: report.realized,
                }),
                Some((index, failed)) => {
                    let error = WireError {
                        code: failed.code.clone().unwrap_or_default(),
                        message: failed.message.clone().unwrap_or_default(),
                        op_index: Some(index),
                    };
                    encode_err(&error, Some(json!({ "results": report.results })))
                }
            }
        }
        Request::Act { steps } => {
            if let Err(message) = validate_steps(&steps) {
                return encode_err(&WireError::new("invalid-step", message), None);
            }
            if let Some(latency) = options.latency {
                std::thread::sleep(latency);
            }
            let outcome = engine.act(&steps);
            if let Some(marker) = ambient_marker(options, engine) {
                let _ = std::fs::write(marker, format!("{}\n", engine.tick()));
            }
            encode_ok(&outcome)
        }
        Request::Snapshot => encode_ok(&SnapshotPayload {
            snapshot: engine.snapshot(),
        }),
        Request::Events { since } => encode_ok(&EventsPayload {
            events: engine.events_since(since),
        }),
        Request::Launch { .. } | Request::Shutdown => unreachable!("handled by serve"),
    }
}

fn respond<W: Write>(writer: &mut W, line: String) -> io::Result<()> {
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()
}
