//! Invariant measure and ergodic correctors of the stochastic elasto-plastic
//! oscillator.

pub mod assembly;
pub mod ergodic;
pub mod error;
pub mod grid;
pub mod model;
pub mod quadrature;
pub mod schwarz;
pub mod short_cycle;
pub mod sparse;
pub mod svi_mc;

pub use error::{Error, Result};
