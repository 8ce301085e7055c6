//! Scenario files, scripted operators, headless games and replay.

mod headless;
mod operator;
mod scenario;

pub use headless::*;
pub use operator::*;
pub use scenario::*;
