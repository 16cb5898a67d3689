//! HTTP service, operator CLI and remote evaluation target for the
//! schemamem engine.

pub mod api;
pub mod cli;
pub mod remote;

pub use api::{router, serve, spawn, ServerHandle, ROUTES};
pub use remote::HttpTarget;
