//! Wire messages. Every message is a single-line JSON object with a `type`
//! tag and a `protocol_version`. See `PROTOCOL.md` for the frozen reference.

use intervene_core::env::EnvKind;
use intervene_core::harness::Metrics;
use intervene_core::mdp::ActionId;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Every `type` tag the protocol defines, in either direction.
pub const MESSAGE_TYPES: [&str; 6] = ["create", "state", "action", "step_result", "summary", "error"];

/// Client-to-server messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Create {
        protocol_version: u32,
        env: EnvKind,
        checkpoint: String,
        seed: u64,
        /// Overrides a budget copilot's initial budget.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<u32>,
    },
    Action {
        protocol_version: u32,
        session: String,
        action: ActionId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, or fields missing or mistyped.
    BadRequest,
    UnsupportedVersion,
    UnknownType,
    /// A known type that only the server sends.
    WrongDirection,
    UnknownCheckpoint,
    EnvMismatch,
    UnknownSession,
    InvalidAction,
    /// The session is not awaiting an action (its episode has ended).
    OutOfTurn,
    Internal,
}

/// Live counters shown alongside every observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hud {
    pub step: usize,
    pub budget_remaining: Option<u32>,
    pub lambda: Option<f64>,
    pub interventions: usize,
    pub intervention_rate: f64,
    pub cumulative_return: f64,
}

/// Server-to-client messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    State {
        protocol_version: u32,
        session: String,
        env: EnvKind,
        method: String,
        action_names: Vec<String>,
        /// ASCII layout for gridworld sessions.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map: Option<String>,
        observation: Vec<f64>,
        hud: Hud,
    },
    StepResult {
        protocol_version: u32,
        session: String,
        human_action: ActionId,
        executed_action: ActionId,
        intervened: bool,
        reward: f64,
        budget_remaining: Option<u32>,
        lambda: Option<f64>,
        done: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success: Option<bool>,
        observation: Vec<f64>,
        hud: Hud,
    },
    Summary {
        protocol_version: u32,
        session: String,
        metrics: Metrics,
        success: bool,
    },
    Error {
        protocol_version: u32,
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>, session: Option<String>) -> Self {
        ServerMessage::Error {
            protocol_version: PROTOCOL_VERSION,
            code,
            message: message.into(),
            session,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// Decodes one client message, mapping every failure to the error reply
/// the server sends back.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, ServerMessage> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ServerMessage::error(ErrorCode::BadRequest, format!("invalid JSON: {e}"), None))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ServerMessage::error(ErrorCode::BadRequest, "message must be a JSON object", None))?;
    let session = obj.get("session").and_then(Value::as_str).map(str::to_string);
    let kind = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| ServerMessage::error(ErrorCode::BadRequest, "missing string field `type`", session.clone()))?;
    if !MESSAGE_TYPES.contains(&kind) {
        return Err(ServerMessage::error(
            ErrorCode::UnknownType,
            format!("unknown message type `{kind}`"),
            session,
        ));
    }
    if !matches!(kind, "create" | "action") {
        return Err(ServerMessage::error(
            ErrorCode::WrongDirection,
            format!("`{kind}` is sent by the server, not the client"),
            session,
        ));
    }
    match obj.get("protocol_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(ServerMessage::error(
                ErrorCode::UnsupportedVersion,
                format!("protocol version {v} is not supported (expected {PROTOCOL_VERSION})"),
                session,
            ))
        }
        None => {
            return Err(ServerMessage::error(
                ErrorCode::BadRequest,
                "missing integer field `protocol_version`",
                session,
            ))
        }
    }
    serde_json::from_value(value).map_err(|e| ServerMessage::error(ErrorCode::BadRequest, e.to_string(), session))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(text: &str) -> ErrorCode {
        match parse_client_message(text) {
            Err(ServerMessage::Error { code, .. }) => code,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_client_messages() {
        let m = parse_client_message(
            r#"{"type":"create","protocol_version":1,"env":"gridworld","checkpoint":"a.ckpt","seed":3}"#,
        )
        .unwrap();
        assert_eq!(
            m,
            ClientMessage::Create {
                protocol_version: 1,
                env: EnvKind::Gridworld,
                checkpoint: "a.ckpt".into(),
                seed: 3,
                budget: None
            }
        );
        let a = parse_client_message(r#"{"type":"action","protocol_version":1,"session":"s1","action":2}"#).unwrap();
        assert!(matches!(a, ClientMessage::Action { action: 2, .. }));
    }

    #[test]
    fn classifies_bad_messages() {
        assert_eq!(code("nope"), ErrorCode::BadRequest);
        assert_eq!(code("[1]"), ErrorCode::BadRequest);
        assert_eq!(code(r#"{"type":"teleport","protocol_version":1}"#), ErrorCode::UnknownType);
        assert_eq!(code(r#"{"type":"summary","protocol_version":1}"#), ErrorCode::WrongDirection);
        assert_eq!(code(r#"{"type":"action","protocol_version":9,"session":"s","action":0}"#), ErrorCode::UnsupportedVersion);
        assert_eq!(code(r#"{"type":"action","session":"s","action":0}"#), ErrorCode::BadRequest);
        assert_eq!(code(r#"{"type":"action","protocol_version":1,"session":"s","action":-1}"#), ErrorCode::BadRequest);
        assert_eq!(
            code(r#"{"type":"action","protocol_version":1,"session":"s","action":0,"extra":1}"#),
            ErrorCode::BadRequest
        );
    }

    #[test]
    fn server_messages_are_single_lines_with_tags() {
        let e = ServerMessage::error(ErrorCode::EnvMismatch, "multi\nline", None).to_line();
        assert!(!e.contains('\n'));
        let v: Value = serde_json::from_str(&e).unwrap();
        assert_eq!(v["type"], "error");
        assert_eq!(v["code"], "env_mismatch");
        assert_eq!(v["protocol_version"], 1);
    }
}
