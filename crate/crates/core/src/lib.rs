//! Gaussian-state simulator for light-mediated EPR entanglement between a
//! mechanical oscillator and a negative-mass atomic spin ensemble.
//!
//! The crate is `no_std` (with `alloc`). File formats, scenarios and the
//! command line live in the `hybrid-epr` companion crate.
//!
//! Layout:
//! - [`gaussian`], [`measurement`], [`epr`]: states, channels, homodyne
//!   conditioning and the EPR criterion.
//! - [`params`], [`io_maps`]: protocol parameters and the pulse-level
//!   input–output maps.
//! - [`oracle`]: continuous-time moment propagation of the full cascaded
//!   model, used to certify the pulse-level maps.
//! - [`decoherence`]: closed-form corrections for mismatch, damping and loss.
//! - [`protocols`]: EPR generation, verification and teleportation drivers.
//! - [`planner`]: SI hardware description to dimensionless parameters.

#![no_std]
// `!(x > 0.0)` is used on purpose to reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod decoherence;
pub mod epr;
pub mod error;
pub mod gaussian;
pub mod io_maps;
pub mod measurement;
pub mod oracle;
pub mod params;
pub mod planner;
pub mod protocols;

pub use epr::{epr_variance, Correction, EprReport, Provenance};
pub use error::{Error, Result};
pub use gaussian::{GaussianState, ModeKind, ModeLabel, ModeSpec};
pub use measurement::{FeedbackTerm, MeasurementRecord, Quadrature};
pub use params::ProtocolParams;

/// Conventional mode names used by the protocol drivers.
pub mod names {
    pub const MECH: &str = "mech";
    pub const ATOM: &str = "atom";
    pub const ATOM2: &str = "atom2";
    pub const COS: &str = "cos";
    pub const SIN: &str = "sin";
}
