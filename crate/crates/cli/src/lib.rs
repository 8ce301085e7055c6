//! Network server and command implementations behind the `cotransport`
//! binary.

pub mod commands;
pub mod server;
