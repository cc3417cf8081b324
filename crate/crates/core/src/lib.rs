//! Computations on the space of unimodular lattices: heights along the
//! diagonal flow, Haar sampling and region measures, Monte Carlo checks
//! of the contraction inequalities, box counting of avoidance sets, and
//! Dirichlet-improvability scans.

pub mod constants;
pub mod contraction;
pub mod covering;
pub mod dirichlet;
pub mod dynamics;
pub mod enumeration;
pub mod error;
pub mod exterior;
pub mod geometry;
pub mod height;
pub mod lattice;
pub mod matrixfn;
pub mod par;

pub use error::{CoreError, Result};
pub use lattice::UnimodularLattice;
