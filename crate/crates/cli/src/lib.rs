//! Command line front end: config file handling, subcommand logic, and the
//! metrics writers shared by the binary and its integration tests.

pub mod commands;
pub mod output;
