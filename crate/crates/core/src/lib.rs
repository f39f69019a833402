//! Aspect-level neural collaborative filtering over heterogeneous
//! information networks.
//!
//! The pipeline extracts PathSim similarity matrices along symmetric
//! meta-paths, learns one MLP tower per `(side, aspect)`, fuses the aspect
//! factors with attention or self-attention, and evaluates top-N ranking
//! under a leave-one-out protocol.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod hin;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod simpath;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};
pub use hin::{build_graph, HinGraph, NodeType, Schema};
pub use model::{Aspect, AspectSet, FeatureSet, FusionMode, ModelDims, NeuAcfModel};
pub use simpath::{commuting_matrix, parse_metapath, pathsim, MetaPath, Side, SimilarityMatrix};
pub use sparse::SparseMatrix;
