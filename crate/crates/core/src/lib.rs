//! Color filter design for colorimetric cameras.
//!
//! A filter placed in front of a camera changes its effective spectral
//! sensitivities to `diag(f) Q`. This crate searches for the transmittance `f`
//! that makes the subspace spanned by those sensitivities as close as possible
//! to the human visual subspace, measured by the Vora-Value
//! `trace(P{FQ} P{X}) / trace(P{X})`.
//!
//! Modules:
//!
//! - [`spectral`]: wavelength grids, spectra, sensor sets, cosine filter basis
//! - [`vora`]: projectors, the Vora-Value and its filter gradient
//! - [`optimizer`]: backtracking gradient ascent, unconstrained and projected
//! - [`luther`]: the Luther-condition filter baseline
//! - [`colorimetry`]: ΔE*ab evaluation over illuminant × reflectance scenes
//! - [`dataio`]: CSV datasets and bundled reference data
//! - [`cli`]: the `vora-filter` command line

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod colorimetry;
pub mod dataio;
pub mod error;
pub mod luther;
pub mod optimizer;
pub mod spectral;
pub mod vora;

pub use error::{Error, Result};
