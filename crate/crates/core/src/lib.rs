pub mod chaos;
pub mod direct_solver;
pub mod error;
pub mod exponent;
pub mod feynman_kac;
pub mod gaussian_field;
pub mod rng;
pub mod stable_path;
pub mod kernel;
pub mod quad;

pub use error::{Error, Result};
