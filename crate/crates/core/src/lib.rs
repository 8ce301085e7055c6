//! Multi-operator, multi-robot collective transport.
//!
//! The crate is layered bottom-up:
//!
//! * [`sim`] is the deterministic world model (kinematics, contact, goals).
//! * [`fsm`] is the per-robot transport controller and formation planner.
//! * [`command`] gives operator commands their meaning: modalities, teams,
//!   locks and last-received-wins conflict resolution.
//! * [`service`] is the authoritative session: tick loop, event routing by
//!   communication mode, wire protocol, recording.
//! * [`harness`] loads scenarios, runs scripted operators headlessly and
//!   replays recordings.
//! * [`stats`] holds the Friedman test, Borda aggregation and log metrics.

pub mod command;
pub mod event;
pub mod fsm;
pub mod harness;
pub mod service;
pub mod sim;
pub mod stats;
