//! Files, run directories and the `hcl` command line on top of [`hcl_core`].

pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod format;
pub mod run;
pub mod table;

pub use hcl_core;
