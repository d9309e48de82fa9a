//! The attributed heterogeneous area network.

mod ahin;
pub mod export;
mod features;
mod knn;
mod metapath;

use thiserror::Error;

pub use ahin::{
    build_ahin, Ahin, AhinCounts, AhinInputs, BuildConfig, GeoNode, NodeId, PerceptionRecord,
    RelationType,
};
pub use features::{
    DiseaseFallback, FeatureVector, Features, DENSITY_DIM, FEATURE_DIM, FEATURE_NAMES,
    MOBILITY_DIM, PERCEPTION_DIM,
};
pub use knn::{knn_geospatial, KnnPoint};
pub use metapath::{meta_path_neighbors, MetaPath, MetaPathNeighbors, NetworkSchema};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no demographic records")]
    EmptyDemographics,
    #[error("duplicate geo_id `{0}`")]
    DuplicateGeoId(String),
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("unknown area: {0}")]
    UnknownArea(String),
    #[error("invalid feature: {0}")]
    InvalidFeature(String),
    #[error("invalid meta-path: {0}")]
    InvalidMetaPath(String),
}
