//! Library half of the command-line front end: option parsing, command
//! implementations, and the deterministic table formatter. The binary in
//! `main.rs` is a thin wrapper so integration tests can drive everything
//! through this crate as well as through the executable.

pub mod fmt;
pub mod opts;
pub mod run;

pub use run::{dispatch, exit_code};
