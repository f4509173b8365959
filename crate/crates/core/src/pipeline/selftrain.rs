//! Pseudo-labeling loop: adopt confidently predicted unlabeled documents
//! and retrain both models on gold plus adopted data.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotatedDocument, EntityLabel};
use crate::corpus::ReviewDocument;
use crate::error::{Error, Result};
use crate::metrics::TrainingCurve;
use crate::ner::train_ner;
use crate::relex::train_rel;
use crate::training::TrainConfig;

use super::predict::{predict_document, DocumentPrediction, Models};
use super::project::ReviewCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    /// Minimum confidence of every mention of an adopted document.
    pub tau_ner: f32,
    /// Minimum probability of every emitted relation of an adopted document.
    pub tau_rel: f32,
    pub rounds: usize,
    pub max_added_per_round: usize,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            tau_ner: 0.9,
            tau_rel: 0.9,
            rounds: 1,
            max_added_per_round: 50,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_ner", self.tau_ner), ("tau_rel", self.tau_rel)] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::Config(format!("{name} = {tau} outside (0, 1]")));
            }
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why a prediction was or was not adopted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adoption {
    Adopted,
    NoMentions,
    LowMentionConfidence,
    LowRelationProbability,
    /// A relation that does not run from an aspect to an opinion cannot
    /// serve as a training label.
    InvalidDirection,
}

pub fn adoption(prediction: &DocumentPrediction, config: &SelfTrainConfig) -> Adoption {
    if prediction.mentions.is_empty() {
        return Adoption::NoMentions;
    }
    if prediction
        .mentions
        .iter()
        .any(|m| m.confidence.is_none_or(|c| c < config.tau_ner))
    {
        return Adoption::LowMentionConfidence;
    }
    if prediction.relations.iter().any(|r| r.probability < config.tau_rel) {
        return Adoption::LowRelationProbability;
    }
    if prediction
        .relations
        .iter()
        .any(|r| r.head.label != EntityLabel::Asp || r.tail.label != EntityLabel::Opi)
    {
        return Adoption::InvalidDirection;
    }
    Adoption::Adopted
}

/// One adopted document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub round: usize,
    pub doc_id: String,
    pub mention_confidences: Vec<f32>,
    pub relation_probabilities: Vec<f32>,
    pub mean_confidence: f64,
    pub tau_ner: f32,
    pub tau_rel: f32,
}

impl AuditEntry {
    /// Whether the recorded scores meet the recorded thresholds.
    pub fn meets_thresholds(&self) -> bool {
        !self.mention_confidences.is_empty()
            && self.mention_confidences.iter().all(|&c| c >= self.tau_ner)
            && self.relation_probabilities.iter().all(|&p| p >= self.tau_rel)
    }
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub models: Models,
    pub audit: Vec<AuditEntry>,
    /// Pseudo-labeled documents, in adoption order.
    pub adopted: Vec<AnnotatedDocument>,
    /// Curves of the last retraining, when one happened.
    pub ner_curve: Option<TrainingCurve>,
    pub rel_curve: Option<TrainingCurve>,
}

/// Predictions on `pool` that pass the thresholds, most confident first,
/// ties by id.
pub fn candidates(models: &Models, pool: &[ReviewDocument], config: &SelfTrainConfig) -> Result<Vec<DocumentPrediction>> {
    let mut passed = Vec::new();
    for doc in pool {
        let p = predict_document(models, doc)?;
        match adoption(&p, config) {
            Adoption::Adopted => passed.push(p),
            other => log::debug!("{} not adopted: {other:?}", doc.id),
        }
    }
    passed.sort_by(|a, b| {
        b.mean_confidence()
            .total_cmp(&a.mean_confidence())
            .then_with(|| a.document.id.cmp(&b.document.id))
    });
    Ok(passed)
}

pub fn review_candidate(p: &DocumentPrediction) -> ReviewCandidate {
    let annotated = p.to_annotated();
    ReviewCandidate {
        document: p.document.clone(),
        annotation: annotated.to_file(),
        entity_confidences: annotated.mentions.iter().map(|m| m.confidence.unwrap_or(0.0)).collect(),
        relation_probabilities: annotated.relations.iter().map(|r| r.probability.unwrap_or(0.0)).collect(),
        mean_confidence: p.mean_confidence(),
    }
}

/// Runs `config.rounds` rounds of predict, adopt and retrain from scratch.
/// Documents in `blacklist` are never adopted. A round that adopts nothing
/// ends the loop and leaves the models as they were.
pub fn self_train(
    models: Models,
    gold: &[AnnotatedDocument],
    unlabeled: &[ReviewDocument],
    config: &SelfTrainConfig,
    ner_config: &TrainConfig,
    rel_config: &TrainConfig,
    blacklist: &BTreeSet<String>,
) -> Result<SelfTrainOutcome> {
    config.validate()?;
    if unlabeled.is_empty() {
        return Err(Error::NoUnlabeledDocuments);
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|d| d.id()).collect();
    if let Some(d) = unlabeled.iter().find(|d| gold_ids.contains(d.id.as_str())) {
        return Err(Error::DuplicateId(d.id.clone()));
    }
    let mut outcome = SelfTrainOutcome {
        models,
        audit: Vec::new(),
        adopted: Vec::new(),
        ner_curve: None,
        rel_curve: None,
    };
    let mut pool: Vec<ReviewDocument> = unlabeled
        .iter()
        .filter(|d| !blacklist.contains(&d.id))
        .cloned()
        .collect();
    for round in 0..config.rounds {
        let passed = candidates(&outcome.models, &pool, config)?;
        if passed.is_empty() {
            log::info!("self-training round {round}: nothing adopted");
            break;
        }
        for p in passed.into_iter().take(config.max_added_per_round) {
            outcome.audit.push(AuditEntry {
                round,
                doc_id: p.document.id.clone(),
                mention_confidences: p.mentions.iter().map(|m| m.confidence.unwrap_or(0.0)).collect(),
                relation_probabilities: p.relations.iter().map(|r| r.probability).collect(),
                mean_confidence: p.mean_confidence(),
                tau_ner: config.tau_ner,
                tau_rel: config.tau_rel,
            });
            outcome.adopted.push(p.to_annotated());
        }
        let adopted: BTreeSet<&str> = outcome.adopted.iter().map(|d| d.id()).collect();
        pool.retain(|d| !adopted.contains(d.id.as_str()));
        let training: Vec<AnnotatedDocument> = gold.iter().chain(&outcome.adopted).cloned().collect();
        log::info!(
            "self-training round {round}: {} adopted, retraining on {} documents",
            outcome.adopted.len(),
            training.len()
        );
        let vocab = &outcome.models.vocab;
        let (ner, ner_curve) = train_ner(&training, vocab, ner_config)?;
        let (rel, rel_curve) = train_rel(&training, vocab, rel_config)?;
        outcome.models = Models {
            ner,
            rel,
            ..outcome.models
        };
        outcome.ner_curve = Some(ner_curve);
        outcome.rel_curve = Some(rel_curve);
    }
    Ok(outcome)
}
