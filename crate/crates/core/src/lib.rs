pub mod error;
pub mod estimators;
pub mod io;
pub mod kernel;
pub mod laws;
pub mod optim;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod score;
pub mod special;
pub mod study;

pub use error::{Error, Result};
