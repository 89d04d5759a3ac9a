//! Sparse phase retrieval from intensity measurements.
//!
//! The pipeline: design vertex vectors on a random regular expander and the
//! polarized edge triples, recover relative phases from the intensities,
//! prune unreliable and badly connected vertices, synchronize phases with the
//! connection Laplacian, and finish with l1 recovery on the phased vertex
//! measurements.

pub mod graph;
pub mod harness;
pub mod linalg;
pub mod measurement;
pub mod ppp;
pub mod rng;
pub mod sparse_recovery;
