//! Deterministic discrete-time world model: unicycle robots, rectangular
//! objects, contact and goal checks.

pub mod geometry;
mod types;
mod world;

pub use geometry::{angle_diff, normalize_angle, Rect, Vec2};
pub use types::*;
pub use world::*;
