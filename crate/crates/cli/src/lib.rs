//! Command-line front end for `sasaki-core`: configuration, runs and artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dump;
pub mod run;
