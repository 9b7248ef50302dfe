//! HTTP API and command-line front end over the audit store.

pub mod api;
pub mod cli;
pub mod config;
pub mod ops;
