//! Simulation and tomography of the discrete azimuthal Wigner distribution
//! of a photon's orbital-angular-momentum state.
//!
//! The pipeline mirrors an ancilla-pointer experiment: a polarization
//! qubit is coupled to the azimuthal degree of freedom through a
//! polarization-sensitive rotation, the beam is post-selected on angular
//! wedges, and the pointer's Pauli expectations give wedge-basis
//! projections of the density matrix. Those are converted to the angular
//! (ANG) basis, made physical, and mapped to the Wigner grid `W(theta, l)`
//! and back to the OAM density matrix.
//!
//! * [`hilbert`]: bases, rotations, expansion coefficients.
//! * [`protocol`]: forward model, shot noise, measurement plan, frames.
//! * [`recon`]: inversion, physicality restoration, Wigner transform.
//! * [`ingest`]: file formats, angular binning, output writers.
//! * [`cli`]: the `azwig` command-line tool.

pub mod cli;
pub mod error;
pub mod hilbert;
pub mod ingest;
pub mod par;
pub mod protocol;
pub mod recon;
pub mod selftest;

pub use error::{Error, Result};
pub use hilbert::{AngleIndex, Basis, DensityMatrix, Dimension, ModeIndex, StateVector};
pub use par::ExecMode;
