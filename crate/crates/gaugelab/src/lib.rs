//! gaugelab: a numerical laboratory for the boundary inverse problem of
//! connection Laplacians on desk-scale surfaces.
//!
//! The crate manufactures unitary Yang-Mills connections on chart grids
//! (rectangle and annulus), computes Dirichlet-to-Neumann matrices of
//! d_A^* d_A + Q, runs an exact jet-level boundary symbol calculus, and
//! reconstructs interior gauges and holonomy from boundary data.

pub mod banded;
pub mod calculus;
pub mod cmat;
pub mod elliptic;
pub mod error;
pub mod fields;
pub mod grid;
pub mod metric;
pub mod symbols;
pub mod transport;
pub mod ym;

pub use error::{Error, Result};
