//! Shared pieces of the command-line front end.

pub mod report;
