//! Hierarchical community-level risk assessment over an attributed
//! heterogeneous network of administrative areas.

pub mod checkpoint;
pub mod gae;
pub mod geo;
pub mod ingest;

pub use geo::{DistanceMetric, GeoId, Level};
pub mod graph;
pub mod nn;
pub mod perception;
pub mod pipeline;
pub mod risk;
pub mod synth;
