//! Temporal referential consistency toolkit: paired-query benchmark
//! construction, prompting, scoring and reporting.

pub mod io;
pub mod kb;
pub mod metrics;
pub mod prompt;
pub mod query;
pub mod relation;
pub mod similarity;
pub mod translation;
pub mod client;
pub mod report;
pub mod synthetic;
