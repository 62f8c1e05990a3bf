//! Broadbeam reconfigurable surfaces built from complementary phase arrays.

pub mod array;
pub mod channel;
pub mod error;
pub mod eval;
pub mod golay;
pub mod optimizer;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
