//! Desk-scale laboratory for stochastic activation pruning as an
//! adversarial defense.
//!
//! The crate trains a small ReLU classifier on synthetic Gaussian-anchor
//! data, wraps its hidden activations in the pruning defense, and attacks it
//! with projected gradient ascent driven by three gradient oracles:
//! straight through the stochastic forward pass, transfer from the
//! undefended source model, and a backward-pass substitution that treats the
//! averaged defense as the clean network. The harness runs the full
//! defense-by-attack grid and reports which attacks the defense actually
//! stops, with every random draw tied to explicit seeds so runs are
//! byte-for-byte reproducible.

pub mod attacks;
pub mod error;
pub mod gradcore;
pub mod harness;
pub mod mlp;
pub mod rng;
pub mod sap;

pub use error::{Error, Result};
pub use gradcore::Tensor;
