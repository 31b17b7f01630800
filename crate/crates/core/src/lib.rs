//! Channel estimation and phase tuning for reconfigurable intelligent
//! surfaces (RIS) that carry a single receive RF chain.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`]: geometric multipath channels and their DFT beamspace form.
//! * [`sampling`]: the single-RF front end (phase alphabet, random
//!   configuration codebook, per-slot selector) and training simulation.
//! * [`admm`]: the joint nuclear-norm / ℓ1 estimator solved by ADMM.
//! * [`baselines`]: least-squares and OMP reference estimators.
//! * [`tuning`]: phase configuration from channel estimates and achievable
//!   rate evaluation.
//! * [`experiment`]: seeded Monte Carlo sweeps and CSV output used by the
//!   `risce` binary.

pub mod admm;
pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod sampling;
pub mod seed;
pub mod tuning;

pub use error::{Error, Result};

use nalgebra::{Complex, DMatrix, DVector};

/// Complex double precision scalar.
pub type C64 = Complex<f64>;
/// Dense complex column vector.
pub type CVector = DVector<C64>;
/// Dense complex matrix.
pub type CMatrix = DMatrix<C64>;
