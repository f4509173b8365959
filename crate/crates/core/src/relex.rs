//! Relation extractor: scores ordered mention pairs with a probability that
//! the head aspect is described by the tail opinion.
//!
//! A pair is represented as `[mean(head tokens); mean(tail tokens);
//! mean(all tokens)]` over the encoder output, then passed through a GELU
//! hidden layer and a single sigmoid unit.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotatedDocument, EntityMention, RELATION_LABEL};
use crate::checkpoint::{Checkpoint, ModelHeader, Role};
use crate::corpus::{Token, Vocabulary};
use crate::encoder::{Encoder, EncoderCache, EncoderConfig};
use crate::error::{Error, Result};
use crate::metrics::{rel_prf, PrfScore, RelationKey, TrainingCurve};
use crate::ner::{check_hash, encode_tokens, initial_encoder_config};
use crate::neural::layers::{binary_cross_entropy_with_logits, gelu, gelu_backward, sigmoid};
use crate::neural::{AdamState, Linear, Matrix, Module, Parameter, RandomSource, Scalar};
use crate::pretrain::MlmModel;
use crate::training::{frozen, open_unit, split, stream, TrainConfig};

pub const DEFAULT_THRESHOLD: f32 = 0.3;
/// At most this many negatives per positive in a training document.
pub const NEGATIVE_RATIO: usize = 5;

/// Ordered pair of distinct mentions, as indices into a mention list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelCandidate {
    pub head: usize,
    pub tail: usize,
}

/// Every ordered pair of distinct mentions, in (head, tail) order. Labels
/// are not consulted.
pub fn gen_candidates(mentions: &[EntityMention]) -> Vec<RelCandidate> {
    let n = mentions.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for head in 0..n {
        for tail in 0..n {
            if head != tail {
                out.push(RelCandidate { head, tail });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationPrediction {
    /// Index of the head in the mention list given to [`predict_rel`].
    pub head_index: usize,
    pub tail_index: usize,
    pub head: EntityMention,
    pub tail: EntityMention,
    pub probability: f32,
}

impl RelationPrediction {
    pub fn label(&self) -> &'static str {
        RELATION_LABEL
    }

    /// Probability as a percentage with two decimals, e.g. `"36.72"`.
    pub fn percent(&self) -> String {
        format_percent(self.probability)
    }
}

pub fn format_percent(probability: f32) -> String {
    format!("{:.2}", probability as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelModel<T = f32> {
    pub encoder: Encoder<T>,
    /// `3·d_model → d_model`
    pub hidden: Linear<T>,
    /// `d_model → 1`
    pub output: Linear<T>,
    pub vocab_hash: u64,
}

struct PairCache<T> {
    encoder: EncoderCache<T>,
    features: Matrix<T>,
    pre: Matrix<T>,
    act: Matrix<T>,
    rows: usize,
}

fn mean_rows<T: Scalar>(h: &Matrix<T>, start: usize, end: usize, out: &mut [T]) {
    let scale = T::from_f64(1.0 / (end - start) as f64);
    out.iter_mut().for_each(|v| *v = T::zero());
    for r in start..end {
        for (o, v) in out.iter_mut().zip(h.row(r)) {
            *o += *v;
        }
    }
    out.iter_mut().for_each(|v| *v *= scale);
}

fn spread_rows<T: Scalar>(dh: &mut Matrix<T>, start: usize, end: usize, grad: &[T]) {
    let scale = T::from_f64(1.0 / (end - start) as f64);
    for r in start..end {
        for (g, v) in dh.row_mut(r).iter_mut().zip(grad) {
            *g += *v * scale;
        }
    }
}

impl<T: Scalar> RelModel<T> {
    pub fn new(config: EncoderConfig, vocab_hash: u64, rng: &mut RandomSource) -> Result<Self> {
        let encoder = Encoder::new(config, rng)?;
        Self::with_encoder(encoder, vocab_hash, rng)
    }

    fn with_encoder(encoder: Encoder<T>, vocab_hash: u64, rng: &mut RandomSource) -> Result<Self> {
        let d = encoder.config.d_model;
        Ok(RelModel {
            hidden: Linear::new("rel.hidden", 3 * d, d, rng),
            output: Linear::new("rel.output", d, 1, rng),
            encoder,
            vocab_hash,
        })
    }

    fn forward(
        &self,
        ids: &[usize],
        mentions: &[EntityMention],
        pairs: &[RelCandidate],
        rng: Option<&mut RandomSource>,
    ) -> Result<(Vec<T>, PairCache<T>)> {
        for m in mentions {
            if m.is_empty() || m.token_end > ids.len() {
                return Err(Error::InvalidSpan(format!(
                    "mention {}..{} outside a sequence of {} tokens",
                    m.token_start,
                    m.token_end,
                    ids.len()
                )));
            }
        }
        let (h, encoder) = self.encoder.forward(ids, rng)?;
        let d = h.cols();
        let mut context = vec![T::zero(); d];
        mean_rows(&h, 0, h.rows(), &mut context);
        let mut features = Matrix::zeros(pairs.len(), 3 * d);
        for (r, pair) in pairs.iter().enumerate() {
            let (head, tail) = (mentions[pair.head], mentions[pair.tail]);
            let row = features.row_mut(r);
            mean_rows(&h, head.token_start, head.token_end, &mut row[..d]);
            mean_rows(&h, tail.token_start, tail.token_end, &mut row[d..2 * d]);
            row[2 * d..].copy_from_slice(&context);
        }
        let pre = self.hidden.forward(&features)?;
        let act = gelu(&pre);
        let logits = self.output.forward(&act)?.into_vec();
        Ok((
            logits,
            PairCache {
                encoder,
                features,
                pre,
                act,
                rows: h.rows(),
            },
        ))
    }

    fn backward(
        &mut self,
        cache: &PairCache<T>,
        mentions: &[EntityMention],
        pairs: &[RelCandidate],
        dlogits: Vec<T>,
    ) -> Result<()> {
        let dlogits = Matrix::from_vec(dlogits.len(), 1, dlogits)?;
        let dact = self.output.backward(&cache.act, &dlogits)?;
        let dpre = gelu_backward(&cache.pre, &dact)?;
        let dfeatures = self.hidden.backward(&cache.features, &dpre)?;
        let d = self.encoder.config.d_model;
        let mut dh = Matrix::zeros(cache.rows, d);
        let mut dcontext = vec![T::zero(); d];
        for (r, pair) in pairs.iter().enumerate() {
            let (head, tail) = (mentions[pair.head], mentions[pair.tail]);
            let row = dfeatures.row(r);
            spread_rows(&mut dh, head.token_start, head.token_end, &row[..d]);
            spread_rows(&mut dh, tail.token_start, tail.token_end, &row[d..2 * d]);
            for (c, v) in dcontext.iter_mut().zip(&row[2 * d..]) {
                *c += *v;
            }
        }
        spread_rows(&mut dh, 0, cache.rows, &dcontext);
        self.encoder.backward(&cache.encoder, &dh)
    }

    /// Mean binary cross-entropy of `pairs` against 0/1 `targets`.
    pub fn loss(
        &mut self,
        ids: &[usize],
        mentions: &[EntityMention],
        pairs: &[RelCandidate],
        targets: &[f32],
        rng: Option<&mut RandomSource>,
        backprop: bool,
    ) -> Result<f64> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let (logits, cache) = self.forward(ids, mentions, pairs, rng)?;
        let (loss, dlogits) = binary_cross_entropy_with_logits(&logits, targets);
        if backprop {
            self.backward(&cache, mentions, pairs, dlogits)?;
        }
        Ok(loss)
    }
}

impl<T: Scalar> Module<T> for RelModel<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = self.encoder.parameters();
        out.extend(self.hidden.parameters());
        out.extend(self.output.parameters());
        out
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = self.encoder.parameters_mut();
        out.extend(self.hidden.parameters_mut());
        out.extend(self.output.parameters_mut());
        out
    }
}

impl RelModel {
    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            head_hidden: Some(self.hidden.output_dim()),
            ..ModelHeader::new(self.encoder.config, self.vocab_hash)
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::capture(Role::Rel, &self.header(), self)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_role(Role::Rel)?;
        let header: ModelHeader = ck.config()?;
        let mut model = RelModel::new(header.encoder, header.vocab_hash()?, &mut RandomSource::new(0))?;
        ck.restore(&mut model, "")?;
        Ok(model)
    }

    /// Encoder copied from an MLM checkpoint, pair head freshly initialized.
    pub fn warm_started(ck: &Checkpoint, rng: &mut RandomSource) -> Result<Self> {
        let pretrained = MlmModel::from_checkpoint(ck)?;
        RelModel::with_encoder(pretrained.encoder, pretrained.vocab_hash, rng)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RelModel::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        check_hash(self.vocab_hash, vocab)
    }

    /// Probability for each pair, in `(0, 1)`.
    pub fn probabilities(
        &self,
        ids: &[usize],
        mentions: &[EntityMention],
        pairs: &[RelCandidate],
    ) -> Result<Vec<f32>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let (logits, _) = self.forward(ids, mentions, pairs, None)?;
        Ok(logits.into_iter().map(|z| open_unit(sigmoid(z as f64))).collect())
    }
}

/// Scores every candidate pair of `mentions` and keeps those with
/// probability ≥ `threshold`, most probable first. Mentions reaching past
/// the model's `max_len` are not scored.
pub fn predict_rel(
    model: &RelModel,
    vocab: &Vocabulary,
    tokens: &[Token],
    mentions: &[EntityMention],
    threshold: f32,
) -> Result<Vec<RelationPrediction>> {
    model.check_vocabulary(vocab)?;
    let ids = encode_tokens(vocab, tokens, model.encoder.config.max_len, "prediction input");
    let visible: Vec<usize> = (0..mentions.len())
        .filter(|&i| mentions[i].token_end <= ids.len())
        .collect();
    let local: Vec<EntityMention> = visible.iter().map(|&i| mentions[i]).collect();
    let pairs = gen_candidates(&local);
    let probs = model.probabilities(&ids, &local, &pairs)?;
    Ok(select(&pairs, &probs, threshold, |i| (visible[i], mentions[visible[i]])))
}

fn select(
    pairs: &[RelCandidate],
    probs: &[f32],
    threshold: f32,
    resolve: impl Fn(usize) -> (usize, EntityMention),
) -> Vec<RelationPrediction> {
    let mut out: Vec<RelationPrediction> = pairs
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p >= threshold)
        .map(|(pair, &p)| {
            let (head_index, head) = resolve(pair.head);
            let (tail_index, tail) = resolve(pair.tail);
            RelationPrediction {
                head_index,
                tail_index,
                head,
                tail,
                probability: p,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then((a.head_index, a.tail_index).cmp(&(b.head_index, b.tail_index)))
    });
    out
}

struct PairSequence {
    id: String,
    ids: Vec<usize>,
    mentions: Vec<EntityMention>,
    candidates: Vec<RelCandidate>,
    positives: BTreeSet<RelCandidate>,
}

impl PairSequence {
    fn gold_keys(&self) -> Vec<RelationKey> {
        self.positives
            .iter()
            .map(|c| RelationKey::new(&self.mentions[c.head], &self.mentions[c.tail]))
            .collect()
    }
}

fn prepare(doc: &AnnotatedDocument, vocab: &Vocabulary, max_len: usize) -> Result<PairSequence> {
    let ids = encode_tokens(vocab, &doc.tokens, max_len, doc.id());
    if ids.is_empty() {
        return Err(Error::EmptyAfterTruncation(doc.id().to_string()));
    }
    let mut remap = BTreeMap::new();
    let mut mentions = Vec::new();
    for (i, m) in doc.mentions.iter().enumerate() {
        if m.token_end <= ids.len() {
            remap.insert(i, mentions.len());
            mentions.push(EntityMention::new(m.token_start, m.token_end, m.label));
        }
    }
    let positives = doc
        .relations
        .iter()
        .filter_map(|r| {
            Some(RelCandidate {
                head: *remap.get(&r.head)?,
                tail: *remap.get(&r.tail)?,
            })
        })
        .collect();
    Ok(PairSequence {
        id: doc.id().to_string(),
        candidates: gen_candidates(&mentions),
        ids,
        mentions,
        positives,
    })
}

fn initial_model(vocab: &Vocabulary, config: &TrainConfig, rng: &mut RandomSource) -> Result<RelModel> {
    match &config.warm_start {
        Some(path) => {
            let model = RelModel::warm_started(&Checkpoint::load(path)?, rng)?;
            model.check_vocabulary(vocab)?;
            Ok(model)
        }
        None => RelModel::new(initial_encoder_config(vocab, config), vocab.hash(), rng),
    }
}

/// Positives plus at most `NEGATIVE_RATIO` negatives per positive, drawn
/// afresh on every call.
fn sample_pairs(s: &PairSequence, rng: &mut RandomSource) -> (Vec<RelCandidate>, Vec<f32>) {
    let negatives: Vec<RelCandidate> = s
        .candidates
        .iter()
        .filter(|c| !s.positives.contains(c))
        .copied()
        .collect();
    let keep = (NEGATIVE_RATIO * s.positives.len()).min(negatives.len());
    let mut chosen: Vec<usize> = rng.sample_indices(negatives.len(), keep);
    chosen.sort_unstable();
    let mut pairs: Vec<RelCandidate> = s.positives.iter().copied().collect();
    let mut targets = vec![1.0; pairs.len()];
    pairs.extend(chosen.into_iter().map(|i| negatives[i]));
    targets.resize(pairs.len(), 0.0);
    (pairs, targets)
}

/// Trains the pair scorer on gold mentions and relations. Returns the model
/// from the epoch with the best validation F1 (earliest on ties) and the
/// full curve.
pub fn train_rel(
    docs: &[AnnotatedDocument],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(RelModel, TrainingCurve)> {
    config.validate()?;
    if docs.iter().all(|d| d.relations.is_empty()) {
        return Err(Error::NoPositives);
    }
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
    let mut negative_rng = root.fork(stream::NEGATIVES);
    let mut order = train_idx;
    let mut curve = TrainingCurve::default();
    let mut best: Option<(f64, RelModel)> = None;
    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let (mut total, mut steps) = (0.0, 0usize);
        for &i in &order {
            let s = &sequences[i];
            let (pairs, targets) = sample_pairs(s, &mut negative_rng);
            if pairs.is_empty() {
                continue;
            }
            let loss = model.loss(&s.ids, &s.mentions, &pairs, &targets, Some(&mut dropout_rng), true)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            total += loss;
            steps += 1;
            adam.step_masked(model.parameters_mut(), &freeze)?;
        }
        let train_loss = if steps == 0 { 0.0 } else { total / steps as f64 };
        let (val_loss, score) = validate(&model, &sequences, &val_idx, config.threshold)?;
        log::info!(
            "rel epoch {epoch}: loss {train_loss:.4} val {val_loss:.4} P {:.4} R {:.4} F1 {:.4}",
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
    model: &RelModel,
    sequences: &[PairSequence],
    indices: &[usize],
    threshold: f32,
) -> Result<(f64, PrfScore)> {
    let mut gold = BTreeMap::new();
    let mut predicted = BTreeMap::new();
    let (mut total, mut scored) = (0.0, 0usize);
    for &i in indices {
        let s = &sequences[i];
        let probs = model.probabilities(&s.ids, &s.mentions, &s.candidates)?;
        if !s.candidates.is_empty() {
            let targets: Vec<f32> = s
                .candidates
                .iter()
                .map(|c| if s.positives.contains(c) { 1.0 } else { 0.0 })
                .collect();
            total += crate::neural::layers::binary_cross_entropy(&probs, &targets);
            scored += 1;
        }
        let kept = select(&s.candidates, &probs, threshold, |i| (i, s.mentions[i]));
        predicted.insert(
            s.id.clone(),
            kept.iter().map(|p| RelationKey::new(&p.head, &p.tail)).collect(),
        );
        gold.insert(s.id.clone(), s.gold_keys());
    }
    let val_loss = if scored == 0 { 0.0 } else { total / scored as f64 };
    Ok((val_loss, rel_prf(&gold, &predicted)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::EntityLabel;

    fn m(s: usize, e: usize, label: EntityLabel) -> EntityMention {
        EntityMention::new(s, e, label)
    }

    #[test]
    fn candidates_are_all_ordered_pairs() {
        let mentions = [
            m(0, 1, EntityLabel::Asp),
            m(1, 2, EntityLabel::Opi),
            m(3, 4, EntityLabel::Opi),
        ];
        let c = gen_candidates(&mentions);
        assert_eq!(c.len(), 6);
        assert!(c.contains(&RelCandidate { head: 1, tail: 2 }));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!(gen_candidates(&mentions[..1]).is_empty());
        assert!(gen_candidates(&[]).is_empty());
    }

    #[test]
    fn negatives_are_capped() {
        let mentions = vec![
            m(0, 1, EntityLabel::Asp),
            m(1, 2, EntityLabel::Opi),
            m(2, 3, EntityLabel::Opi),
        ];
        let s = PairSequence {
            id: "d".into(),
            ids: vec![3, 4, 5],
            candidates: gen_candidates(&mentions),
            mentions,
            positives: [RelCandidate { head: 0, tail: 1 }].into_iter().collect(),
        };
        let (pairs, targets) = sample_pairs(&s, &mut RandomSource::new(1));
        assert_eq!(targets.iter().filter(|&&t| t == 1.0).count(), 1);
        assert_eq!(pairs.len(), 6);
        assert!(pairs[1..].iter().all(|p| *p != RelCandidate { head: 0, tail: 1 }));
    }

    #[test]
    fn percent_has_two_decimals() {
        assert_eq!(format_percent(0.3672), "36.72");
        assert_eq!(format_percent(0.7496), "74.96");
    }

    #[test]
    fn selection_respects_threshold_and_order() {
        let pairs = gen_candidates(&[m(0, 1, EntityLabel::Asp), m(1, 2, EntityLabel::Opi)]);
        let probs = [0.3672, 0.9];
        let resolve = |i| (i, m(i, i + 1, EntityLabel::Asp));
        let out = select(&pairs, &probs, 0.3, resolve);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].probability, 0.9);
        assert_eq!(out[1].percent(), "36.72");
        assert_eq!(select(&pairs, &probs, 0.5, resolve).len(), 1);
        assert!(select(&pairs, &probs, 1.0, resolve).is_empty());
    }
}
