//! Optimal-transport distances, barycenters and dictionaries for attributed
//! directed graphs with node and edge features.

pub mod apps;
pub mod barycenter;
pub mod dictionary;
pub mod error;
pub mod experiments;
pub mod fngw;
pub mod generators;
pub mod graph;
pub mod io;
pub mod ot;
pub mod prediction;
pub mod preprocess;
pub mod rng;

pub use error::{Error, Result};
pub use fngw::{fngw_distance, fngw_distance_from, FngwParams, FngwProblem, FngwSolution};
pub use graph::{Graph, NodeMetric};
pub use ot::TransportPlan;
