//! Configuration, orchestration and output writing behind the `twig` binary.

pub mod analyze;
pub mod config;
pub mod output;
pub mod svg;
pub mod validate;
