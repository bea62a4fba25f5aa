//! Newline-delimited JSON request/response protocol between the harness and
//! a runtime subprocess.
//!
//! Every request line gets exactly one response line, in order. Successful
//! responses are `{"ok":true, ...payload}`; failures are
//! `{"ok":false,"error":{"code":..,"message":..}}`, optionally with extra
//! payload fields (a failed patch also carries its per-op `results`).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::state::normalize;
use super::{ActionStep, Event, OpResult, RuntimeSchema, Snapshot, StatePatchOp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Launch {
        game: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Patch {
        ops: Vec<StatePatchOp>,
    },
    Act {
        steps: Vec<ActionStep>,
    },
    Snapshot,
    Events {
        #[serde(default)]
        since: u64,
    },
    Shutdown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_index: Option<usize>,
}

impl WireError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        WireError {
            code: code.to_string(),
            message: message.into(),
            op_index: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaunchPayload {
    pub build: String,
    pub schema: RuntimeSchema,
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchPayload {
    pub results: Vec<OpResult>,
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPayload {
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventsPayload {
    pub events: Vec<Event>,
}

fn with_ok(payload: Value, ok: bool) -> Value {
    let mut object = match payload {
        Value::Object(map) => map,
        Value::Null => Map::new(),
        other => {
            let mut map = Map::new();
            map.insert("payload".into(), other);
            map
        }
    };
    object.insert("ok".into(), Value::Bool(ok));
    normalize(&Value::Object(object))
}

/// Serializes a success response as one line (no trailing newline).
pub fn encode_ok<T: Serialize>(payload: &T) -> String {
    let value = serde_json::to_value(payload).expect("payload serializes");
    with_ok(value, true).to_string()
}

/// Serializes a failure response, merging `extra` fields alongside `error`.
pub fn encode_err(error: &WireError, extra: Option<Value>) -> String {
    let mut payload = match extra {
        Some(Value::Object(map)) => map,
        _ => Map::new(),
    };
    payload.insert(
        "error".into(),
        serde_json::to_value(error).expect("error serializes"),
    );
    with_ok(Value::Object(payload), false).to_string()
}

/// A decoded response line.
#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Ok(Value),
    Err { error: WireError, payload: Value },
}

impl Response {
    pub fn parse(line: &str) -> Result<Response, String> {
        let value: Value =
            serde_json::from_str(line).map_err(|e| format!("malformed response: {e}"))?;
        let ok = value
            .get("ok")
            .and_then(Value::as_bool)
            .ok_or_else(|| "response lacks boolean `ok`".to_string())?;
        if ok {
            return Ok(Response::Ok(value));
        }
        let error = value
            .get("error")
            .cloned()
            .ok_or_else(|| "failure response lacks `error`".to_string())
            .and_then(|e| {
                serde_json::from_value::<WireError>(e).map_err(|e| format!("bad error body: {e}"))
            })?;
        Ok(Response::Err {
            error,
            payload: value,
        })
    }

    /// Decodes a success payload into `T`.
    pub fn into_payload<T: DeserializeOwned>(self) -> Result<T, Result<WireError, String>> {
        match self {
            Response::Ok(value) => serde_json::from_value(value).map_err(|e| Err(e.to_string())),
            Response::Err { error, .. } => Err(Ok(error)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn request_shapes() {
        let r: Request = serde_json::from_str(r#"{"op":"launch","game":"collider","seed":7}"#).unwrap();
        assert_eq!(
            r,
            Request::Launch {
                game: "collider".into(),
                seed: Some(7)
            }
        );
        let r: Request = serde_json::from_str(r#"{"op":"snapshot"}"#).unwrap();
        assert_eq!(r, Request::Snapshot);
        let r: Request = serde_json::from_str(
            r#"{"op":"patch","ops":[{"op":"set","path":"player.hp","value":10}]}"#,
        )
        .unwrap();
        assert_eq!(
            r,
            Request::Patch {
                ops: vec![StatePatchOp::set("player.hp", 10)]
            }
        );
        let r: Request = serde_json::from_str(r#"{"op":"act","steps":[{"action":"move","params":{"dir":"right"}}]}"#).unwrap();
        let Request::Act { steps } = r else { panic!() };
        assert_eq!(steps[0].ticks, 1);
    }

    #[test]
    fn responses_carry_ok_and_integral_numbers() {
        let line = encode_ok(&json!({"tick": 3.0}));
        assert_eq!(line, r#"{"ok":true,"tick":3}"#);
        let err = encode_err(&WireError::new("unknown-op", "nope"), None);
        assert_eq!(err, r#"{"error":{"code":"unknown-op","message":"nope"},"ok":false}"#);
        match Response::parse(&err).unwrap() {
            Response::Err { error, .. } => assert_eq!(error.code, "unknown-op"),
            other => panic!("{other:?}"),
        }
        assert!(Response::parse("{}").is_err());
    }
}
