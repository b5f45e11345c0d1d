//! Exact simulator and verification laboratory for first-passage
//! percolation on Z^d: rational edge-weight environments, geodesic
//! enumeration and counting, turn/reflection path algebra, the box
//! classification system, and seeded Monte Carlo experiment drivers.

#![forbid(unsafe_code)]

pub mod boxes;
pub mod detour;
pub mod env;
pub mod error;
pub mod experiments;
pub mod geodesics;
pub mod lattice;
pub mod paths;
pub mod weight;

pub use error::{FppError, Result};
pub use lattice::{Edge, Region, Vertex};
pub use weight::{Rat, Weight};
