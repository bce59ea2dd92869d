//! Simulation and tomography of path-encoded two-photon states.
//!
//! The crate models two photons distributed over two optical paths, an
//! interferometric analysis stage (two beam splitters, one drifting phase,
//! one ancilla path, loss channels), the coincidence rates it produces, and
//! three reconstructions of the input density matrix from those rates:
//!
//! * linear inversion of a minimal nine-rate data set ([`tomography::linear`]),
//! * maximum-likelihood fitting over a Cholesky parameterization
//!   ([`tomography::mle`]),
//! * a label-resolved fit that separates photons which are truly
//!   indistinguishable from distinguishable ones ([`distinguishability`]).
//!
//! Synthetic experimental campaigns (phase drift, shutter phase probes,
//! binning, Poisson counts, side-peak normalization) live in [`synth`].

pub mod correlations;
pub mod distinguishability;
pub mod error;
pub mod fock;
pub mod optics;
pub mod optim;
pub mod records;
pub mod state;
pub mod synth;
pub mod tomography;

pub use error::{Error, Result};

/// Complex double used throughout.
pub type C64 = num_complex::Complex64;
