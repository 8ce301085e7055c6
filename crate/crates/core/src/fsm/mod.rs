//! Per-robot collective-transport controller: Reach Object, Approach
//! Object, then Push Object or Rotate Object, falling back to Approach
//! whenever the formation breaks.

mod control;
mod plan;
mod state;

use thiserror::Error;

use crate::sim::{ObjectId, RobotId};

pub use control::*;
pub use plan::*;
pub use state::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmError {
    #[error("formation needs at least one robot")]
    EmptyTeam,
    #[error("formation object {0} is not in the world")]
    MissingObject(ObjectId),
    #[error("robot {0} is not part of the formation")]
    NotInPlan(RobotId),
}
