//! Command-line entry points and the HTTP session service.

pub mod commands;
pub mod report;
pub mod service;
