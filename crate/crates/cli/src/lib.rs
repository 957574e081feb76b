//! Batch front-end for the dotlab library: configuration, subcommands and the
//! check suite.

pub mod check;
pub mod commands;
pub mod config;
