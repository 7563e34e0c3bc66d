//! File formats and the command-line driver for `tiepref-core`.

pub mod checkpoint;
pub mod cli;
pub mod meta;
pub mod records;
pub mod report;
