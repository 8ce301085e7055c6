use std::fmt;

use serde::{Deserialize, Serialize};

/// Per-robot collective-transport state.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TransportState {
    #[default]
    Idle,
    ReachObject,
    ApproachObject,
    PushObject,
    RotateObject,
    Paused,
}

impl TransportState {
    pub const ALL: [TransportState; 6] = [
        TransportState::Idle,
        TransportState::ReachObject,
        TransportState::ApproachObject,
        TransportState::PushObject,
        TransportState::RotateObject,
        TransportState::Paused,
    ];

    pub fn is_active(self) -> bool {
        !matches!(self, TransportState::Idle)
    }

    pub fn is_moving_object(self) -> bool {
        matches!(
            self,
            TransportState::PushObject | TransportState::RotateObject
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            TransportState::Idle => "idle",
            TransportState::ReachObject => "reaching object",
            TransportState::ApproachObject => "approaching object",
            TransportState::PushObject => "pushing object",
            TransportState::RotateObject => "rotating object",
            TransportState::Paused => "paused",
        }
    }
}

impl fmt::Display for TransportState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Edge set of the transport machine plus the bookkeeping edges the command
/// layer may take (cancel to Idle, pause/resume, re-plan to ReachObject).
pub fn is_valid_transition(from: TransportState, to: TransportState) -> bool {
    use TransportState::*;
    if from == to || to == Idle {
        return true;
    }
    matches!(
        (from, to),
        (Idle, ReachObject)
            | (ReachObject, ApproachObject)
            | (ApproachObject, PushObject)
            | (ApproachObject, RotateObject)
            | (PushObject, ApproachObject)
            | (RotateObject, ApproachObject)
            | (
                ReachObject | ApproachObject | PushObject | RotateObject,
                Paused
            )
            | (Paused, ReachObject | ApproachObject)
            | (ApproachObject | PushObject | RotateObject, ReachObject)
    )
}
