//! HTTP API and command-line driver for the `refine` retrieval engine.
//!
//! [`api`] exposes sessions, feedback, group memory and exports over HTTP;
//! [`cli`] implements the `refine` binary.

pub mod api;
pub mod cli;

pub use api::{router, serve, AppState, ServerConfig, StartupError};
