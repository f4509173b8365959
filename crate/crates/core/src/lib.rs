pub mod annotate;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod ner;
pub mod neural;
pub mod pipeline;
pub mod pretrain;
pub mod relex;
pub mod service;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
