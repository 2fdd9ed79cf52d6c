pub mod adjoint;
pub mod autodiff;
pub mod error;
pub mod evaluation;
pub mod fields;
pub mod io;
pub mod model;
pub mod simulators;
pub mod training;

pub use error::{Error, Result};
