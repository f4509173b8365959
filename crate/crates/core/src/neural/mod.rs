//! Dense tensor core: matrices, layers with hand-written backward passes,
//! Adam, a seeded random source and a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod rng;
pub mod scalar;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_mixed, GradCheckReport};
pub use layers::{copy_parameters, Embedding, LayerNorm, Linear, Module, Parameter};
pub use matrix::Matrix;
pub use rng::RandomSource;
pub use scalar::Scalar;
