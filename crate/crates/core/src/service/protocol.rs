//! Wire protocol: JSON envelopes `{"v","type","seq","t","body"}`.
//!
//! The same envelope shape is used on sockets and in recorded logs.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{ClientView, CommMode, GameStatus, ObjectView, RobotView};
use crate::command::{CommandBody, Rejection, TeamSelection};
use crate::sim::{OperatorId, RobotId};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub seq: u64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub body: Value,
}

impl Envelope {
    pub fn new<T: Serialize>(kind: MessageType, seq: u64, t: f64, body: &T) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            kind: kind.as_str().to_owned(),
            seq,
            t,
            body: serde_json::to_value(body).expect("protocol bodies serialize"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }

    pub fn message_type(&self) -> Result<MessageType, ProtocolError> {
        self.kind.parse()
    }

    pub fn body_as<T: DeserializeOwned>(&self) -> Result<T, ProtocolError> {
        serde_json::from_value(self.body.clone()).map_err(|e| ProtocolError::Body {
            kind: self.kind.clone(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Join,
    Joined,
    Command,
    CommandRejected,
    StateDelta,
    StateKeyframe,
    Event,
    GameStatus,
    Fault,
    Bye,
    /// Recording header; never sent on the wire.
    Session,
}

impl MessageType {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Join => "join",
            MessageType::Joined => "joined",
            MessageType::Command => "command",
            MessageType::CommandRejected => "command_rejected",
            MessageType::StateDelta => "state_delta",
            MessageType::StateKeyframe => "state_keyframe",
            MessageType::Event => "event",
            MessageType::GameStatus => "game_status",
            MessageType::Fault => "fault",
            MessageType::Bye => "bye",
            MessageType::Session => "session",
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageType {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "join" => MessageType::Join,
            "joined" => MessageType::Joined,
            "command" => MessageType::Command,
            "command_rejected" => MessageType::CommandRejected,
            "state_delta" => MessageType::StateDelta,
            "state_keyframe" => MessageType::StateKeyframe,
            "event" => MessageType::Event,
            "game_status" => MessageType::GameStatus,
            "fault" => MessageType::Fault,
            "bye" => MessageType::Bye,
            "session" => MessageType::Session,
            _ => return Err(ProtocolError::UnknownType(s.to_owned())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Json(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("bad {kind} body: {reason}")]
    Body { kind: String, reason: String },
    #[error("{0} is not accepted from clients")]
    NotFromClient(String),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Json(_) => "malformed",
            ProtocolError::Version(_) => "bad_version",
            ProtocolError::UnknownType(_) => "unknown_type",
            ProtocolError::Body { .. } => "bad_body",
            ProtocolError::NotFromClient(_) => "not_from_client",
        }
    }
}

pub fn parse_envelope(text: &str) -> Result<Envelope, ProtocolError> {
    let env: Envelope =
        serde_json::from_str(text).map_err(|e| ProtocolError::Json(e.to_string()))?;
    if env.v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(env.v));
    }
    Ok(env)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinBody {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedBody {
    pub operator: OperatorId,
    pub name: String,
    pub mode: CommMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultBody {
    pub robot_id: RobotId,
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRejectedBody {
    pub code: String,
    pub reason: String,
    /// Client seq of the offending message.
    pub seq: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lock_owner: Option<OperatorId>,
}

impl CommandRejectedBody {
    pub fn from_rejection(r: &Rejection, seq: Option<u64>) -> Self {
        let lock_owner = match r {
            Rejection::LockDenied { owner, .. } => Some(*owner),
            Rejection::NotLockOwner { owner, .. } => *owner,
            _ => None,
        };
        Self {
            code: r.code().to_owned(),
            reason: r.to_string(),
            seq,
            lock_owner,
        }
    }

    pub fn from_protocol(e: &ProtocolError, seq: Option<u64>) -> Self {
        Self {
            code: e.code().to_owned(),
            reason: e.to_string(),
            seq,
            lock_owner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByeBody {
    #[serde(default)]
    pub reason: String,
}

/// Changes since the previous view sent to the same client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    pub robots: Vec<RobotView>,
    pub objects: Vec<ObjectView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teams: Option<Vec<TeamSelection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<Vec<String>>,
    pub status: GameStatus,
}

impl StateDelta {
    pub fn between(prev: &ClientView, next: &ClientView) -> Self {
        Self {
            robots: next
                .robots
                .iter()
                .filter(|r| !prev.robots.contains(r))
                .cloned()
                .collect(),
            objects: next
                .objects
                .iter()
                .filter(|o| !prev.objects.contains(o))
                .cloned()
                .collect(),
            teams: (prev.teams != next.teams).then(|| next.teams.clone()),
            log: (prev.log != next.log).then(|| next.log.clone()),
            status: next.status.clone(),
        }
    }

    /// Applies the delta to a keyframe-derived view.
    pub fn apply(&self, view: &mut ClientView) {
        for r in &self.robots {
            match view.robots.iter_mut().find(|x| x.id == r.id) {
                Some(x) => *x = r.clone(),
                None => view.robots.push(r.clone()),
            }
        }
        for o in &self.objects {
            match view.objects.iter_mut().find(|x| x.id == o.id) {
                Some(x) => *x = o.clone(),
                None => view.objects.push(o.clone()),
            }
        }
        if let Some(t) = &self.teams {
            view.teams = t.clone();
        }
        if let Some(l) = &self.log {
            view.log = l.clone();
        }
        view.status = self.status.clone();
    }
}

/// Messages a client may send.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Join(JoinBody),
    Command(CommandBody),
    Fault(FaultBody),
    Bye,
}

pub fn parse_client_message(env: &Envelope) -> Result<ClientMessage, ProtocolError> {
    match env.message_type()? {
        MessageType::Join => Ok(ClientMessage::Join(env.body_as()?)),
        MessageType::Command => Ok(ClientMessage::Command(env.body_as()?)),
        MessageType::Fault => Ok(ClientMessage::Fault(env.body_as()?)),
        MessageType::Bye => Ok(ClientMessage::Bye),
        other => Err(ProtocolError::NotFromClient(other.as_str().to_owned())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_ignored() {
        let text = r#"{"v":1,"type":"command","seq":4,"t":0.0,"extra":true,
            "body":{"kind":"move_robot","robot_id":3,"goal":{"x":0.5,"y":0.25},"note":"hi"}}"#;
        let env = parse_envelope(text).unwrap();
        let msg = parse_client_message(&env).unwrap();
        assert_eq!(
            msg,
            ClientMessage::Command(CommandBody::MoveRobot {
                robot_id: RobotId(3),
                goal: crate::sim::Vec2::new(0.5, 0.25),
            })
        );
    }

    #[test]
    fn unknown_type_is_an_error() {
        let env = parse_envelope(r#"{"v":1,"type":"teleport","seq":0,"t":0,"body":{}}"#).unwrap();
        let err = parse_client_message(&env).unwrap_err();
        assert_eq!(err.code(), "unknown_type");
    }

    #[test]
    fn version_is_checked() {
        assert_eq!(
            parse_envelope(r#"{"v":2,"type":"bye"}"#).unwrap_err(),
            ProtocolError::Version(2)
        );
    }

    #[test]
    fn envelope_round_trip() {
        let env = Envelope::new(MessageType::Join, 1, 0.0, &JoinBody { name: "A".into() });
        let back = parse_envelope(&env.to_json()).unwrap();
        assert_eq!(back, env);
    }
}
