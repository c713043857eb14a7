//! Command-line front end: scenario files, CSV artifacts and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
