//! Library side of the `weakmeas` command-line tool: run configuration,
//! on-disk formats, and the built-in validation suite. The binary in
//! `main.rs` is a thin dispatcher over these.

pub mod checks;
pub mod config;
pub mod io;
