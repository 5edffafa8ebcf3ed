//! Bond percolation laboratory: finite lattice regions, reproducible
//! Bernoulli sampling, connectivity events, exact enumeration on small
//! graphs, Monte Carlo estimators, transfer-matrix diagnostics and the slab
//! local-modification maps.

pub mod decoupling;
pub mod error;
pub mod estimators;
pub mod events;
pub mod exec;
pub mod lattice;
pub mod oracle;
pub mod percolation;
pub mod rng;
pub mod slabqm;
pub mod stats;
pub mod vertex_set;

pub use error::{Error, Result};
pub use lattice::{LatticeSpec, Region};
pub use percolation::{Configuration, EdgeStates};
pub use stats::Estimate;
pub use vertex_set::VertexSet;
