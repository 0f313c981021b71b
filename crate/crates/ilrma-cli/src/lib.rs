//! Internals of the `ilrma` binary: configuration model, results CSV
//! schema, and the trial runner. A library target so the binary, the tests,
//! and the fuzz targets share the same parsers.

pub mod config;
pub mod results;
pub mod runner;
