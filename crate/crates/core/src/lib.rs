pub mod analysis;
pub mod classical;
pub mod error;
pub mod gauge;
pub mod lattice;
pub mod percolation;
pub mod rng;

pub use error::{Error, Result};
pub use gauge::{Basis, CanonicalState, GaugeConfig};
pub use lattice::Lattice;
