//! Direct certification of quantum non-Gaussianity and Wigner-function
//! negativity of photon-number-diagonal detector POVM elements.
//!
//! The detector is probed with the vacuum and two thermal states. From the
//! three click probabilities we estimate the vacuum probabilities of the
//! regularized (noiselessly attenuated) POVM element and test them against
//! the Gaussian-mixture boundary in the `(p0, q0)` plane.
//!
//! Modules, bottom-up:
//!
//! + [`fock`]: truncated photon-number distributions, loss, convolution.
//! + [`povm`]: diagonal POVM elements, SPAD model, regularization, heralding.
//! + [`criterion`]: Gaussian boundary, non-Gaussianity and Wigner witnesses.
//! + [`estimation`]: probe records to `(P0', Q0')` with uncertainties.
//! + [`montecarlo`]: simulated experiments and sweeps.
//! + [`pnrd`]: multiplexed photon-number-resolving detector and EME
//!   reconstruction for probe calibration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criterion;
pub mod error;
pub mod estimation;
pub mod fock;
pub mod montecarlo;
pub mod pnrd;
pub mod povm;
pub mod rng;
mod sum;
pub mod text;

pub use error::{Error, Result};
