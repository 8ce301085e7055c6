//! Awareness events: broadcastable records of operator and robot actions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sim::{ObjectId, OperatorId, Pose, RobotId, TeamId, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Operator(OperatorId),
    Robot(RobotId),
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ObjectMoved,
    ObjectRotated,
    RobotMoved,
    TeamCreated,
    TeamMoved,
    LockChanged,
    RobotStateChanged,
    Fault,
    Delivery,
    Score,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::ObjectMoved,
        EventKind::ObjectRotated,
        EventKind::RobotMoved,
        EventKind::TeamCreated,
        EventKind::TeamMoved,
        EventKind::LockChanged,
        EventKind::RobotStateChanged,
        EventKind::Fault,
        EventKind::Delivery,
        EventKind::Score,
    ];

    /// Visibility class of each kind. Operator actions are inter-operator
    /// communication and only travel in indirect modes; robot and world facts
    /// are always shown.
    pub fn visibility(self) -> Visibility {
        match self {
            EventKind::ObjectMoved
            | EventKind::ObjectRotated
            | EventKind::RobotMoved
            | EventKind::TeamCreated
            | EventKind::TeamMoved
            | EventKind::LockChanged => Visibility::IndirectOnly,
            EventKind::RobotStateChanged
            | EventKind::Fault
            | EventKind::Delivery
            | EventKind::Score => Visibility::Always,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    IndirectOnly,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    ObjectMoved {
        object: ObjectId,
        goal: Pose,
    },
    ObjectRotated {
        object: ObjectId,
        goal_theta: f64,
    },
    RobotMoved {
        robot: RobotId,
        goal: Vec2,
    },
    TeamCreated {
        team: TeamId,
        members: Vec<RobotId>,
        marker: Vec2,
    },
    TeamMoved {
        team: TeamId,
        goal: Vec2,
    },
    LockChanged {
        object: ObjectId,
        owner: Option<OperatorId>,
        /// Lock the operator gave up by taking this one.
        released: Option<ObjectId>,
    },
    RobotStateChanged {
        robot: RobotId,
        status: String,
        idle: bool,
    },
    Fault {
        robot: RobotId,
        on: bool,
    },
    Delivery {
        object: ObjectId,
        points: u32,
    },
    Score {
        points: u32,
        max_points: u32,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::ObjectMoved { .. } => EventKind::ObjectMoved,
            EventPayload::ObjectRotated { .. } => EventKind::ObjectRotated,
            EventPayload::RobotMoved { .. } => EventKind::RobotMoved,
            EventPayload::TeamCreated { .. } => EventKind::TeamCreated,
            EventPayload::TeamMoved { .. } => EventKind::TeamMoved,
            EventPayload::LockChanged { .. } => EventKind::LockChanged,
            EventPayload::RobotStateChanged { .. } => EventKind::RobotStateChanged,
            EventPayload::Fault { .. } => EventKind::Fault,
            EventPayload::Delivery { .. } => EventKind::Delivery,
            EventPayload::Score { .. } => EventKind::Score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwarenessEvent {
    pub seq: u64,
    pub sim_time: f64,
    pub actor: Actor,
    pub visibility: Visibility,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl AwarenessEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn issuer(&self) -> Option<OperatorId> {
        match self.actor {
            Actor::Operator(op) => Some(op),
            _ => None,
        }
    }

    /// One-line text for the operator log.
    pub fn render(&self, names: &BTreeMap<OperatorId, String>) -> String {
        let who = match self.actor {
            Actor::Operator(op) => names.get(&op).cloned().unwrap_or_else(|| op.to_string()),
            Actor::Robot(r) => r.to_string(),
            Actor::System => "system".to_owned(),
        };
        format!("{who} {}", Described(&self.payload))
    }
}

struct Described<'a>(&'a EventPayload);

impl fmt::Display for Described<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            EventPayload::ObjectMoved { object, goal } => {
                write!(f, "moved {object} to ({:.2}, {:.2})", goal.x, goal.y)
            }
            EventPayload::ObjectRotated { object, goal_theta } => {
                write!(f, "rotated {object} to {:.0} deg", goal_theta.to_degrees())
            }
            EventPayload::RobotMoved { robot, goal } => {
                write!(f, "moved {robot} to ({:.2}, {:.2})", goal.x, goal.y)
            }
            EventPayload::TeamCreated { team, members, .. } => {
                write!(f, "created {team} with {} robots", members.len())
            }
            EventPayload::TeamMoved { team, goal } => {
                write!(f, "moved {team} to ({:.2}, {:.2})", goal.x, goal.y)
            }
            EventPayload::LockChanged { object, owner, .. } => match owner {
                Some(_) => write!(f, "locked {object}"),
                None => write!(f, "unlocked {object}"),
            },
            EventPayload::RobotStateChanged { robot, status, .. } => write!(f, "{robot}: {status}"),
            EventPayload::Fault { robot, on } => {
                write!(f, "{robot} {}", if *on { "faulted" } else { "recovered" })
            }
            EventPayload::Delivery { object, points } => {
                write!(f, "delivered {object} (+{points})")
            }
            EventPayload::Score { points, max_points } => write!(f, "score {points}/{max_points}"),
        }
    }
}

/// Stamps events with a session-wide sequence number and the current time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSink {
    pub next_seq: u64,
    pub sim_time: f64,
    pub events: Vec<AwarenessEvent>,
}

impl EventSink {
    pub fn emit(&mut self, actor: Actor, payload: EventPayload) {
        let ev = AwarenessEvent {
            seq: self.next_seq,
            sim_time: self.sim_time,
            actor,
            visibility: payload.kind().visibility(),
            payload,
        };
        self.next_seq += 1;
        self.events.push(ev);
    }

    pub fn drain(&mut self) -> Vec<AwarenessEvent> {
        std::mem::take(&mut self.events)
    }
}
