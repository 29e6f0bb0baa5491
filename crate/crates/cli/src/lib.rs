//! Library side of the `backflip` CLI: configuration parsing, scenario
//! validation and the run/optimize/compare pipelines. Kept as a library so
//! the integration and acceptance suites can drive the same code paths the
//! binary uses.

pub mod config;
pub mod pipeline;
pub mod scenario;
