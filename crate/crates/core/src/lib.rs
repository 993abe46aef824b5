pub mod cli;
pub mod client;
pub mod dataset;
pub mod metrics;
pub mod pipelines;
