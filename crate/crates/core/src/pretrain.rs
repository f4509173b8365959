//! Masked-language-model pretraining with dynamic masking.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelHeader, Role};
use crate::corpus::{tokenize, ReviewDocument, Vocabulary, MASK_ID, RESERVED};
use crate::encoder::{truncate, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::neural::layers::cross_entropy;
use crate::neural::{AdamState, Linear, Matrix, Module, Parameter, RandomSource, Scalar};
use crate::training::stream;

pub const MASK_FRACTION: f64 = 0.15;

/// Number of positions masked in a sequence of length `n`: 15%, rounded,
/// and at least one so that every sequence contributes to the loss.
pub fn mask_count(n: usize) -> usize {
    ((n as f64 * MASK_FRACTION).round() as usize).clamp(1.min(n), n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSequence {
    pub inputs: Vec<usize>,
    /// Masked positions, ascending.
    pub positions: Vec<usize>,
    /// Original ids at `positions`.
    pub targets: Vec<usize>,
}

/// Selects fresh mask positions; each is replaced by MASK (80%), a random
/// id ≥ 3 (10%) or left unchanged (10%).
pub fn dynamic_mask(ids: &[usize], vocab_size: usize, rng: &mut RandomSource) -> MaskedSequence {
    let mut positions = rng.sample_indices(ids.len(), mask_count(ids.len()));
    positions.sort_unstable();
    let mut inputs = ids.to_vec();
    for &p in &positions {
        let r = rng.uniform();
        if r < 0.8 {
            inputs[p] = MASK_ID;
        } else if r < 0.9 && vocab_size > RESERVED {
            inputs[p] = rng.below(RESERVED, vocab_size);
        }
    }
    let targets = positions.iter().map(|&p| ids[p]).collect();
    MaskedSequence {
        inputs,
        positions,
        targets,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmModel<T = f32> {
    pub encoder: Encoder<T>,
    /// Projection from contextual vectors to vocabulary logits.
    pub output: Linear<T>,
    pub vocab_hash: u64,
}

impl<T: Scalar> MlmModel<T> {
    pub fn new(config: EncoderConfig, vocab_hash: u64, rng: &mut RandomSource) -> Result<Self> {
        let encoder = Encoder::new(config, rng)?;
        let output = Linear::new("mlm.output", config.d_model, config.vocab_size, rng);
        Ok(MlmModel {
            encoder,
            output,
            vocab_hash,
        })
    }

    /// Mean cross-entropy over the masked positions.
    pub fn loss(
        &mut self,
        masked: &MaskedSequence,
        rng: Option<&mut RandomSource>,
        backprop: bool,
    ) -> Result<f64> {
        let (h, cache) = self.encoder.forward(&masked.inputs, rng)?;
        let d = h.cols();
        let mut picked = Matrix::zeros(masked.positions.len(), d);
        for (r, &p) in masked.positions.iter().enumerate() {
            picked.row_mut(r).copy_from_slice(h.row(p));
        }
        let logits = self.output.forward(&picked)?;
        let include = vec![true; masked.targets.len()];
        let (loss, dlogits) = cross_entropy(&logits, &masked.targets, &include)?;
        if backprop {
            let dpicked = self.output.backward(&picked, &dlogits)?;
            let mut dh = Matrix::zeros(h.rows(), d);
            for (r, &p) in masked.positions.iter().enumerate() {
                for (g, v) in dh.row_mut(p).iter_mut().zip(dpicked.row(r)) {
                    *g += *v;
                }
            }
            self.encoder.backward(&cache, &dh)?;
        }
        Ok(loss)
    }
}

impl<T: Scalar> Module<T> for MlmModel<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = self.encoder.parameters();
        out.extend(self.output.parameters());
        out
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = self.encoder.parameters_mut();
        out.extend(self.output.parameters_mut());
        out
    }
}

impl MlmModel {
    pub fn header(&self) -> ModelHeader {
        ModelHeader::new(self.encoder.config, self.vocab_hash)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::capture(Role::Mlm, &self.header(), self)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_role(Role::Mlm)?;
        let header: ModelHeader = ck.config()?;
        let mut model = MlmModel::new(header.encoder, header.vocab_hash()?, &mut RandomSource::new(0))?;
        ck.restore(&mut model, "")?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        MlmModel::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub seed: u64,
    /// `vocab_size` is taken from the vocabulary.
    pub encoder: EncoderConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 100,
            lr: 1e-3,
            seed: 42,
            encoder: EncoderConfig::new(0),
        }
    }
}

/// Pretrains an encoder on unlabeled text. Returns the model and the mean
/// masked-token loss of every epoch.
pub fn mlm_pretrain(
    docs: &[ReviewDocument],
    vocab: &Vocabulary,
    config: &PretrainConfig,
) -> Result<(MlmModel, Vec<f64>)> {
    if config.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    let encoder_config = EncoderConfig {
        vocab_size: vocab.len(),
        ..config.encoder
    };
    encoder_config.validate()?;
    let sequences: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| truncate(&vocab.encode(&tokenize(&d.text)), encoder_config.max_len, &d.id))
        .filter(|ids| !ids.is_empty())
        .collect();
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let root = RandomSource::new(config.seed);
    let mut model = MlmModel::new(encoder_config, vocab.hash(), &mut root.fork(stream::INIT))?;
    let mut adam = AdamState::for_module(config.lr, &model);
    let mut order_rng = root.fork(stream::ORDER);
    let mut mask_rng = root.fork(stream::MASKING);
    let mut dropout_rng = root.fork(stream::DROPOUT);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let masked = dynamic_mask(&sequences[i], encoder_config.vocab_size, &mut mask_rng);
            let loss = model.loss(&masked, Some(&mut dropout_rng), true)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            total += loss;
            adam.step(model.parameters_mut())?;
        }
        let mean = total / sequences.len() as f64;
        log::info!("mlm epoch {epoch}: loss {mean:.4}");
        losses.push(mean);
    }
    Ok((model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_count_rule() {
        assert_eq!(mask_count(20), 3);
        assert_eq!(mask_count(1), 1);
        assert_eq!(mask_count(3), 1);
        assert_eq!(mask_count(10), 2);
        assert_eq!(mask_count(0), 0);
    }

    #[test]
    fn masks_are_resampled() {
        let ids: Vec<usize> = (3..23).collect();
        let mut rng = RandomSource::new(42);
        let draws: Vec<Vec<usize>> = (0..5)
            .map(|_| dynamic_mask(&ids, 30, &mut rng).positions)
            .collect();
        assert!(draws.iter().all(|p| p.len() == 3));
        assert!(draws.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn replacement_proportions() {
        let ids: Vec<usize> = vec![5; 100];
        let mut rng = RandomSource::new(1);
        let (mut mask, mut random, mut kept) = (0, 0, 0);
        for _ in 0..400 {
            let m = dynamic_mask(&ids, 50, &mut rng);
            for &p in &m.positions {
                match m.inputs[p] {
                    MASK_ID => mask += 1,
                    5 => kept += 1,
                    _ => random += 1,
                }
            }
            assert_eq!(m.targets, vec![5; 15]);
        }
        let total = (mask + random + kept) as f64;
        assert!((mask as f64 / total - 0.8).abs() < 0.02);
        // A random replacement can redraw id 5, so `kept` runs slightly high.
        assert!((random as f64 / total - 0.098).abs() < 0.02);
        assert!((kept as f64 / total - 0.102).abs() < 0.02);
    }
}
