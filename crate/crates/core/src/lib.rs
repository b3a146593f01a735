pub mod chain;
pub mod edges;
pub mod error;
pub mod graph;
pub mod params;
pub mod sampling;
pub mod spectral;
pub mod bpre;
pub mod checks;
pub mod experiment;
