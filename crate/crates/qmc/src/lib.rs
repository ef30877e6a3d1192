//! Continuous-time quantum Monte Carlo for the extended toric code, with an
//! exact-diagonalization oracle for small tori.

pub mod ed;
pub mod measure;
pub mod params;
pub mod run;
pub mod updates;
pub mod worldline;

pub use ed::{ed_solve, EdResult};
pub use measure::{fm_contour, measure_fm, sample_slice, FmEstimate, QmcRecord};
pub use params::{Couplings, QmcParams, SegmentMode};
pub use run::{run_qmc, run_qmc_with, QmcSeries};
pub use updates::{QmcAcceptance, QmcSampler};
pub use worldline::Worldline;
