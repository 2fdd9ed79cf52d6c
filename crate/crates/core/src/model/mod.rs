//! Learned components: the tendency network `F` and the initial-state map `g`.

mod dynamics;
mod init;
mod initial_state;

pub use dynamics::{init_orthogonal, init_orthogonal_with_gain, OUTPUT_GAIN, DynamicsConfig, DynamicsModel};
pub use init::{orthogonal_kernel, orthogonal_matrix};
pub use initial_state::{EncoderConfig, InitialInputs, InitialStateConfig, InitialStateModel};

/// Negative-side slope of every leaky ReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;
