//! Minimal CPU neural-network engine: NCHW `f64` tensors, layers with explicit
//! forward tapes and hand-written backward passes, and first-order optimizers.
//!
//! A forward pass returns a [`Tape`]; the same network can be run several
//! times before any backward pass, which the cycle-consistent training loop
//! relies on (a generator is applied to real, translated and identity inputs
//! within one step).

mod io;
mod layers;
mod network;
mod ops;
mod optim;
mod tensor;

pub use io::{decode_weights, encode_weights, load_weights, save_weights};
pub use layers::{Layer, Tape};
pub use network::{Init, LayerSummary, Network, NetworkBuilder};
pub use optim::{Adam, Sgd};
pub use tensor::Tensor;
