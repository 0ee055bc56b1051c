//! HTTP and event-stream gateway over a running engine, plus the `vsa`
//! command-line tool.
//!
//! The engine runs on its own thread ([`session::Session`]) and publishes
//! snapshots into a [`hub::Hub`]. HTTP handlers read those snapshots and
//! forward remedy submissions to the engine through a channel-backed
//! escalation handler.

pub mod api;
pub mod cli;
pub mod handler;
pub mod hub;
pub mod session;

pub use api::{router, serve, ApiError};
pub use hub::Hub;
pub use session::Session;
