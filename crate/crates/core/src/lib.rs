//! Design, simulation, and strong-coupling analysis of a mode-gap cavity
//! embedded in a photonic-crystal waveguide.
//!
//! The crate is organised as a pipeline:
//!
//! - [`geometry`]: hole lattice with a locally widened waveguide, rasterized
//!   to a relative-permittivity map.
//! - [`fdtd`]: 2D Yee-grid solver (out-of-plane H, in-plane E) with CPML
//!   absorbers, sources, probes, DFT monitors and flux planes.
//! - [`modal`]: resonance energy, Q and mode volume from FDTD output.
//! - [`cqed`]: exciton-photon coupling, loss-corrected vacuum Rabi splitting
//!   and anticrossing eigenmodes.
//! - [`spectra`]: Lorentzian line shapes, Levenberg-Marquardt peak fitting,
//!   synthetic photoluminescence series and anticrossing fits.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod cqed;
pub mod error;
pub mod fdtd;
pub mod geometry;
pub mod io;
pub mod lm;
pub mod modal;
pub mod spectra;
pub mod svg;
pub mod workflow;

pub use error::{Error, Result};
