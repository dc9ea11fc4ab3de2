//! Tail VaR under model misspecification: tilted importance sampling against
//! moment-matching LP brackets, benchmarked on a Student-t truth.

pub mod calibration;
pub mod distributions;
pub mod dmm;
pub mod error;
pub mod experiment;
pub mod importance_sampling;
pub mod io;
pub mod lp_solver;
pub mod truth;

pub use error::{Error, Result};
