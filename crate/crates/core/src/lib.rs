//! Simulation and verification toolkit for SIS epidemic patch models with
//! asymmetric connectivity.
//!
//! * [`netmat`]: connectivity matrices, Perron vectors, quadratic forms and
//!   spectral bounds.
//! * [`model`]: parameters, incidence mechanisms, vector field and patch risk.
//! * [`dynamics`]: adaptive integration with conservation and positivity
//!   monitors, the pure-dispersal flow and Harnack ratios.
//! * [`lyapunov`]: the Lyapunov functions of the four degenerate-dispersal
//!   regimes with their closed-form derivatives.
//! * [`limits`]: predicted limit states, the threshold `N*`, and verdicts.

pub mod dynamics;
pub mod error;
pub mod limits;
pub mod lyapunov;
pub mod model;
pub mod netmat;

pub use error::{Error, Result};
