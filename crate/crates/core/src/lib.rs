pub mod cli;
pub mod config;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod seal;
pub mod sparse;
pub mod split;
pub mod synth;
pub mod train;
pub mod vgae;
