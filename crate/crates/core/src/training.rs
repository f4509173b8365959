//! Settings and helpers shared by the task trainers.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::neural::{Module, RandomSource};

/// Random streams derived from a run seed, so that changing how one part of
/// training draws numbers leaves the others untouched.
pub(crate) mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const ORDER: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const NEGATIVES: u64 = 5;
    pub const MASKING: u64 = 6;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub seed: u64,
    pub validation_fraction: f64,
    /// MLM checkpoint whose encoder initializes the task encoder.
    pub warm_start: Option<PathBuf>,
    pub freeze_encoder: bool,
    /// Validate on the training set itself.
    pub overfit: bool,
    /// Architecture for cold starts; `vocab_size` is taken from the vocabulary.
    pub encoder: EncoderConfig,
    /// Decision threshold used when scoring relation predictions.
    pub threshold: f32,
}

impl TrainConfig {
    pub fn ner() -> Self {
        TrainConfig {
            epochs: 300,
            lr: 1e-3,
            seed: 42,
            validation_fraction: 0.2,
            warm_start: None,
            freeze_encoder: false,
            overfit: false,
            encoder: EncoderConfig::new(0),
            threshold: crate::relex::DEFAULT_THRESHOLD,
        }
    }

    pub fn rel() -> Self {
        TrainConfig {
            epochs: 400,
            ..TrainConfig::ner()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction {} outside (0,1)",
                self.validation_fraction
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Seeded train/validation split over `n` items. In overfit mode both sides
/// are the whole set.
pub(crate) fn split(n: usize, config: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::TooFewDocuments(n));
    }
    let all: Vec<usize> = (0..n).collect();
    if config.overfit {
        return Ok((all.clone(), all));
    }
    let mut order = all;
    RandomSource::new(config.seed).fork(stream::SPLIT).shuffle(&mut order);
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1);
    let mut validation = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok((train, validation))
}

/// Per-parameter freeze flags: encoder tensors when `freeze_encoder` is set.
pub(crate) fn frozen(module: &impl Module, freeze_encoder: bool) -> Vec<bool> {
    module
        .parameters()
        .iter()
        .map(|p| freeze_encoder && p.name.starts_with("encoder."))
        .collect()
}

/// Largest f32 strictly below 1.
const BELOW_ONE: f32 = 1.0 - f32::EPSILON / 2.0;

/// Maps a probability into `(0, 1)`: saturated softmax and sigmoid outputs
/// round to exactly 0 or 1 in f32, which would let a threshold of 1.0 pass.
pub(crate) fn open_unit(p: f64) -> f32 {
    (p as f32).clamp(f32::MIN_POSITIVE, BELOW_ONE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let config = TrainConfig::ner();
        let (train, val) = split(10, &config).unwrap();
        assert_eq!(val.len(), 2);
        assert_eq!(train.len(), 8);
        assert!(val.iter().all(|v| !train.contains(v)));
        assert_eq!(split(10, &config).unwrap(), (train, val));
    }

    #[test]
    fn split_needs_two_documents() {
        assert!(matches!(split(1, &TrainConfig::ner()), Err(Error::TooFewDocuments(1))));
        let (train, val) = split(2, &TrainConfig::ner()).unwrap();
        assert_eq!((train.len(), val.len()), (1, 1));
    }

    #[test]
    fn overfit_validates_on_training_set() {
        let config = TrainConfig {
            overfit: true,
            ..TrainConfig::ner()
        };
        let (train, val) = split(4, &config).unwrap();
        assert_eq!(train, val);
    }

    #[test]
    fn open_unit_excludes_endpoints() {
        assert!(open_unit(1.0) < 1.0);
        assert!(open_unit(0.0) > 0.0);
        assert_eq!(open_unit(0.5), 0.5);
    }
}
