//! Percolation locality experiments on transitive graphs built from free
//! products of cyclic groups.

pub mod ball;
pub mod error;
pub mod explore;
pub mod graph;
pub mod group;
pub mod perc;
pub mod rng;
pub mod walk;

pub use error::{Error, Result};
