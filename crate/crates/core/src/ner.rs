//! Token-level ASP/OPI tagger: encoder plus a linear head over the five BIO
//! tags.

use std::path::Path;

use crate::annotate::{decode_bio, encode_bio, AnnotatedDocument, BioTag, EntityMention};
use crate::checkpoint::{Checkpoint, ModelHeader, Role};
use crate::corpus::{Token, Vocabulary};
use crate::encoder::{truncate, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::metrics::{span_prf, TrainingCurve};
use crate::neural::layers::{cross_entropy, softmax_rows};
use crate::neural::{AdamState, Linear, Matrix, Module, Parameter, RandomSource, Scalar};
use crate::pretrain::MlmModel;
use crate::training::{frozen, open_unit, split, stream, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct NerModel<T = f32> {
    pub encoder: Encoder<T>,
    /// `d_model → 5`, one logit per [`BioTag`] ordinal.
    pub head: Linear<T>,
    pub vocab_hash: u64,
}

impl<T: Scalar> NerModel<T> {
    pub fn new(config: EncoderConfig, vocab_hash: u64, rng: &mut RandomSource) -> Result<Self> {
        let encoder = Encoder::new(config, rng)?;
        let head = Linear::new("ner.head", config.d_model, BioTag::COUNT, rng);
        Ok(NerModel {
            encoder,
            head,
            vocab_hash,
        })
    }

    pub fn logits(&self, ids: &[usize]) -> Result<Matrix<T>> {
        self.head.forward(&self.encoder.encode(ids)?)
    }

    /// Mean token cross-entropy against tag ordinals.
    pub fn loss(
        &mut self,
        ids: &[usize],
        tags: &[usize],
        rng: Option<&mut RandomSource>,
        backprop: bool,
    ) -> Result<f64> {
        let (h, cache) = self.encoder.forward(ids, rng)?;
        let logits = self.head.forward(&h)?;
        let (loss, dlogits) = cross_entropy(&logits, tags, &vec![true; ids.len()])?;
        if backprop {
            let dh = self.head.backward(&h, &dlogits)?;
            self.encoder.backward(&cache, &dh)?;
        }
        Ok(loss)
    }
}

impl<T: Scalar> Module<T> for NerModel<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = self.encoder.parameters();
        out.extend(self.head.parameters());
        out
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = self.encoder.parameters_mut();
        out.extend(self.head.parameters_mut());
        out
    }
}

impl NerModel {
    pub fn header(&self) -> ModelHeader {
        ModelHeader::new(self.encoder.config, self.vocab_hash)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::capture(Role::Ner, &self.header(), self)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_role(Role::Ner)?;
        let header: ModelHeader = ck.config()?;
        let mut model = NerModel::new(header.encoder, header.vocab_hash()?, &mut RandomSource::new(0))?;
        ck.restore(&mut model, "")?;
        Ok(model)
    }

    /// Encoder copied from an MLM checkpoint, head freshly initialized.
    pub fn warm_started(ck: &Checkpoint, rng: &mut RandomSource) -> Result<Self> {
        let pretrained = MlmModel::from_checkpoint(ck)?;
        let head = Linear::new("ner.head", pretrained.encoder.config.d_model, BioTag::COUNT, rng);
        Ok(NerModel {
            encoder: pretrained.encoder,
            head,
            vocab_hash: pretrained.vocab_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        NerModel::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        check_hash(self.vocab_hash, vocab)
    }

    /// Softmax tag distribution per token.
    pub fn tag_probabilities(&self, ids: &[usize]) -> Result<Matrix> {
        Ok(softmax_rows(&self.logits(ids)?))
    }
}

pub(crate) fn check_hash(expected: u64, vocab: &Vocabulary) -> Result<()> {
    let found = vocab.hash();
    if found != expected {
        return Err(Error::VocabularyMismatch { expected, found });
    }
    Ok(())
}

/// Argmax tags, lenient BIO decoding, and mention confidence as the mean
/// winning-tag probability over the mention's tokens.
pub fn mentions_from_probabilities(probs: &Matrix) -> Vec<EntityMention> {
    let mut tags = Vec::with_capacity(probs.rows());
    let mut winning = Vec::with_capacity(probs.rows());
    for r in 0..probs.rows() {
        let (best, p) = probs
            .row(r)
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        tags.push(BioTag::from_ordinal(best).unwrap_or(BioTag::O));
        winning.push(p as f64);
    }
    let mut mentions = decode_bio(&tags);
    for m in &mut mentions {
        let mean = winning[m.token_start..m.token_end].iter().sum::<f64>() / m.len() as f64;
        m.confidence = Some(open_unit(mean));
    }
    mentions
}

/// Vocabulary ids for `tokens`, cut to the model's `max_len`.
pub fn encode_tokens(vocab: &Vocabulary, tokens: &[Token], max_len: usize, what: &str) -> Vec<usize> {
    truncate(&vocab.encode(tokens), max_len, what)
}

/// Predicted mentions over `tokens`. Tokens beyond `max_len` are not tagged.
pub fn predict_ner(model: &NerModel, vocab: &Vocabulary, tokens: &[Token]) -> Result<Vec<EntityMention>> {
    model.check_vocabulary(vocab)?;
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let ids = encode_tokens(vocab, tokens, model.encoder.config.max_len, "prediction input");
    Ok(mentions_from_probabilities(&model.tag_probabilities(&ids)?))
}

/// A document reduced to what the tagger sees.
pub(crate) struct TaggedSequence {
    pub id: String,
    pub ids: Vec<usize>,
    pub tags: Vec<usize>,
    /// Gold mentions lying inside the truncated sequence.
    pub gold: Vec<EntityMention>,
}

fn prepare(doc: &AnnotatedDocument, vocab: &Vocabulary, max_len: usize) -> Result<TaggedSequence> {
    let ids = encode_tokens(vocab, &doc.tokens, max_len, doc.id());
    if ids.is_empty() {
        return Err(Error::EmptyAfterTruncation(doc.id().to_string()));
    }
    let gold: Vec<EntityMention> = doc
        .mentions
        .iter()
        .filter(|m| m.token_end <= ids.len())
        .map(|m| EntityMention::new(m.token_start, m.token_end, m.label))
        .collect();
    let tags = encode_bio(&gold, ids.len())?.into_iter().map(BioTag::ordinal).collect();
    Ok(TaggedSequence {
        id: doc.id().to_string(),
        ids,
        tags,
        gold,
    })
}

pub(crate) fn initial_encoder_config(vocab: &Vocabulary, config: &TrainConfig) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab.len(),
        ..config.encoder
    }
}

/// Warm-started from `config.warm_start` when set, otherwise freshly
/// initialized.
fn initial_model(vocab: &Vocabulary, config: &TrainConfig, rng: &mut RandomSource) -> Result<NerModel> {
    match &config.warm_start {
        Some(path) => {
            let model = NerModel::warm_started(&Checkpoint::load(path)?, rng)?;
            model.check_vocabulary(vocab)?;
            Ok(model)
        }
        None => NerModel::new(initial_encoder_config(vocab, config), vocab.hash(), rng),
    }
}

/// Trains a tagger on the mentions of `docs`; relations are never read.
/// Returns the model from the epoch with the best validation F1 (earliest on
/// ties) and the full curve.
pub fn train_ner(
    docs: &[AnnotatedDocument],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(NerModel, TrainingCurve)> {
    config.validate()?;
    let (train_idx, val_idx) = split(docs.len(), config)?;
    let root = RandomSource::new(config.seed);
    let mut model = initial_model(vocab, config, &mut root.fork(stream::INIT))?;
    let max_len = model.encoder.config.max_len;
    let sequences = docs
        .iter()
        .map(|d| prepare(d, vocab, max_len))
        .collect::<Result<Vec<_>>>()?;
    let freeze = frozen(&model, config.freeze_encoder);
    let mut adam = AdamState::for_module(config.lr, &model);
    let mut order_rng = root.fork(stream::ORDER);
    let mut dropout_rng = root.fork(stream::DROPOUT);
    let mut order = train_idx;
    let mut curve = TrainingCurve::default();
    let mut best: Option<(f64, NerModel)> = None;
    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let mut train_loss = 0.0;
        for &i in &order {
            let s = &sequences[i];
            let loss = model.loss(&s.ids, &s.tags, Some(&mut dropout_rng), true)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            train_loss += loss;
            adam.step_masked(model.parameters_mut(), &freeze)?;
        }
        train_loss /= order.len() as f64;
        let (val_loss, score) = validate(&model, &sequences, &val_idx)?;
        log::info!(
            "ner epoch {epoch}: loss {train_loss:.4} val {val_loss:.4} P {:.4} R {:.4} F1 {:.4}",
            score.precision,
            score.recall,
            score.f1
        );
        curve.push(train_loss, val_loss, &score);
        if best.as_ref().is_none_or(|(f1, _)| score.f1 > *f1) {
            best = Some((score.f1, model.clone()));
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, curve))
}

fn validate(
    model: &NerModel,
    sequences: &[TaggedSequence],
    indices: &[usize],
) -> Result<(f64, crate::metrics::PrfScore)> {
    let mut gold = std::collections::BTreeMap::new();
    let mut predicted = std::collections::BTreeMap::new();
    let mut total = 0.0;
    for &i in indices {
        let s = &sequences[i];
        let logits = model.logits(&s.ids)?;
        let (loss, _) = cross_entropy(&logits, &s.tags, &vec![true; s.ids.len()])?;
        total += loss;
        gold.insert(s.id.clone(), s.gold.clone());
        predicted.insert(s.id.clone(), mentions_from_probabilities(&softmax_rows(&logits)));
    }
    Ok((total / indices.len() as f64, span_prf(&gold, &predicted)?))
}
