//! User groups and item packages.
//!
//! Users (or items) are linked by a similarity graph whose edge weight is the
//! Jaccard overlap of their rated sets scaled by the inverse of one plus the
//! Euclidean distance over commonly rated entries. The graph is then cut into
//! hard clusters with normalized spectral clustering.

mod affinity;
mod kmeans;
mod partition;
mod spectral;

pub use affinity::{build_affinity, edge_weight, AffinityMatrix, Axis};
pub use kmeans::{kmeans, KMeansConfig};
pub use partition::Partition;
pub use spectral::{spectral_embedding, spectral_partition};
