//! Simulation of finite-dimensional quantum systems driven by noisy control
//! fields, state-to-state pulse synthesis, and evaluation of lower bounds on
//! transformation time and purity loss.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod grape;
pub mod lindblad;
pub mod linalg;
pub mod optim;
pub mod spinalg;
pub mod states;

pub use error::{Error, Result};
