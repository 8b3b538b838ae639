//! Simulation toolkit for a cavity-coupled single nuclear-spin qubit:
//! hyperfine level structure, Purcell-filtered optical readout, optical
//! pumping, Raman control, and dephasing under classical noise, with the
//! calibration layer that ties every model parameter to a published
//! observable.

pub mod calibration;
pub mod cavity;
pub mod coherence;
pub mod config;
pub mod error;
pub mod fitting;
pub mod levels;
pub mod pumping;
pub mod readout;
pub mod rng;

pub use error::{Error, Result};
