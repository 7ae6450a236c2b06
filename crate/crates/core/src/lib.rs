//! Hierarchical zero-shot classification.
//!
//! A class hierarchy is built by clustering class semantic vectors, a
//! visual-to-semantic projection is learned for every superclass layer (and
//! for the class layer) by graph-regularised self-reconstruction, and test
//! samples are labelled by pruning candidates top-down through the hierarchy.

pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub mod graph;
pub mod hierarchy;
pub mod kmeans;
pub mod projection;
pub mod model;
pub mod inference;
pub mod eval;
pub mod synth;
pub mod pipeline;
pub mod tune;
