//! Design and analysis toolkit for collinear quasi-phase-matched
//! photon-pair sources collected into single-mode fibers.
//!
//! The crate is organized bottom-up:
//!
//! - [`dispersion`]: refractive-index models, wavelength triples, and the
//!   collinear phase mismatch of a periodically poled crystal;
//! - [`coupling`]: closed-form single and pair emission rates into Gaussian
//!   collection modes, and the mode-coupling efficiency `eta_c`;
//! - [`detection`]: click statistics of multiplexed single-photon detectors,
//!   forward maps from emission rates to detected rates, and the inverse maps
//!   used to reduce raw measurements;
//! - [`montecarlo`]: stochastic cross-checks of the detection algebra and a
//!   timestamped event-stream simulator with coincidence matching;
//! - [`sweep`]: focal-parameter sweeps, peak finding, rate/efficiency
//!   trade-off curves, and a one-parameter nonlinearity fit.
//!
//! All quantities are SI unless the name says otherwise (`*_um`, `*_cps`,
//! `*_mw`). Emission rates are counts per second per milliwatt of pump.

pub mod constants;
pub mod coupling;
pub mod detection;
pub mod dispersion;
pub mod error;
pub mod montecarlo;
pub mod sweep;

pub use error::{Error, Result};
