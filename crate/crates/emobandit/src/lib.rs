//! Persistence, replay, HTTP service and CLI on top of `emobandit-core`.

pub mod log;
pub mod session;
pub mod runner;
pub mod simlog;
pub mod store;
pub mod api;
pub mod report;
pub mod cli;
