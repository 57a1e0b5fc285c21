//! Desk-scale training of feedforward ReLU networks and measurement of
//! per-layer class-separation fuzziness D = Tr(SSW · SSB⁺), including
//! fitting and validating its geometric decay across layers.

pub mod dataset;
pub mod error;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod rng;
pub mod separation;

pub use error::{Error, Result};
