//! Command-line front end: stage-by-stage pipeline commands, a terminal chat
//! and the HTTP survey service.

pub mod args;
pub mod chat;
pub mod commands;
pub mod server;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const STAGE_ERROR: i32 = 1;
    pub const CONFIG_ERROR: i32 = 2;
}
