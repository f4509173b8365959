//! What each CLI command does to a project directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::annotate::AnnotatedDocument;
use crate::checkpoint::Role;
use crate::corpus::{build_vocab, load_corpus, tokenize, write_corpus, write_file, ReviewDocument, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{write_curve, TrainingCurve};
use crate::ner::train_ner;
use crate::pretrain::{mlm_pretrain, PretrainConfig};
use crate::relex::train_rel;
use crate::training::TrainConfig;

use super::convert::convert_export;
use super::predict::{
    evaluate_models, evaluate_records, extraction_records, predict_document, render_table, Evaluation, Models,
    PredictionRecord,
};
use super::project::{Project, AUDIT_LOG, NER_CURVE, REL_CURVE};
use super::selftrain::{candidates, review_candidate, self_train, AuditEntry, SelfTrainConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertSummary {
    pub documents: usize,
    pub flipped: usize,
}

/// Adds converted export records to the labeled corpus and writes their
/// annotation files. Ids already in the corpus are rejected.
pub fn convert(project: &Project, export: &Path) -> Result<ConvertSummary> {
    let bytes = fs::read(export).map_err(|e| Error::io(export, e))?;
    let converted = convert_export(&bytes).map_err(|e| Error::File {
        path: export.into(),
        message: e.to_string(),
    })?;
    let mut corpus = if project.corpus_path().exists() {
        project.load_corpus()?
    } else {
        Vec::new()
    };
    let mut ids: BTreeSet<String> = corpus.iter().map(|d| d.id.clone()).collect();
    for c in &converted {
        super::project::check_id(&c.document.id)?;
        if !ids.insert(c.document.id.clone()) {
            return Err(Error::DuplicateId(c.document.id.clone()));
        }
    }
    let mut flipped = 0;
    for c in &converted {
        let doc = c.annotation.clone().into_document(Some(&c.document))?;
        write_file(&project.annotation_path(&c.document.id), &doc.to_canonical_json())?;
        corpus.push(c.document.clone());
        flipped += c.flipped;
    }
    write_corpus(&project.corpus_path(), &corpus)?;
    Ok(ConvertSummary {
        documents: converted.len(),
        flipped,
    })
}

/// Labeled and unlabeled text together.
fn all_text(project: &Project) -> Result<Vec<ReviewDocument>> {
    let mut docs = project.load_corpus()?;
    docs.extend(project.load_unlabeled()?);
    Ok(docs)
}

/// Builds the vocabulary over labeled and unlabeled text.
pub fn build_vocabulary(project: &Project, min_frequency: usize, lowercase: bool) -> Result<Vocabulary> {
    let vocab = build_vocab(&all_text(project)?, min_frequency, lowercase)?;
    vocab.save(&project.vocab_path())?;
    Ok(vocab)
}

/// MLM pretraining over all project text. Writes the MLM checkpoint and
/// `mlm_loss.csv` in a new run.
pub fn pretrain(project: &Project, config: &PretrainConfig) -> Result<(String, Vec<f64>)> {
    let vocab = project.load_vocab()?;
    let (model, losses) = mlm_pretrain(&all_text(project)?, &vocab, config)?;
    model.save(&project.checkpoint_path(Role::Mlm))?;
    let (run, dir) = project.create_run()?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l:.6}\n"));
    }
    write_file(&dir.join("mlm_loss.csv"), csv.as_bytes())?;
    Ok((run, losses))
}

fn gold(project: &Project) -> Result<Vec<AnnotatedDocument>> {
    let gold = project.load_gold()?;
    if gold.is_empty() {
        return Err(Error::File {
            path: project.annotations_dir(),
            message: "no annotated documents".into(),
        });
    }
    Ok(gold)
}

/// Trains the tagger, saves it and records its curve in a new run.
pub fn train_ner_command(project: &Project, config: &TrainConfig) -> Result<(String, TrainingCurve)> {
    let vocab = project.load_vocab()?;
    let (model, curve) = train_ner(&gold(project)?, &vocab, config)?;
    model.save(&project.checkpoint_path(Role::Ner))?;
    let (run, dir) = project.create_run()?;
    write_curve(&curve, &dir.join(NER_CURVE))?;
    Ok((run, curve))
}

/// Trains the pair scorer, saves it and records its curve in a new run.
pub fn train_rel_command(project: &Project, config: &TrainConfig) -> Result<(String, TrainingCurve)> {
    let vocab = project.load_vocab()?;
    let (model, curve) = train_rel(&gold(project)?, &vocab, config)?;
    model.save(&project.checkpoint_path(Role::Rel))?;
    let (run, dir) = project.create_run()?;
    write_curve(&curve, &dir.join(REL_CURVE))?;
    Ok((run, curve))
}

/// Scores the project models on the gold set.
pub fn evaluate(project: &Project) -> Result<Evaluation> {
    evaluate_models(&Models::load(project)?, &gold(project)?)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::File {
                path: path.into(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Scores a predictions file against the gold set.
pub fn evaluate_file(project: &Project, predictions: &Path) -> Result<crate::metrics::PrfScore> {
    evaluate_records(&gold(project)?, &read_predictions(predictions)?)
}

#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub path: PathBuf,
    pub records: Vec<PredictionRecord>,
    pub table: String,
}

/// Predicts over `documents`, writes `predictions/<timestamp>.jsonl` and
/// renders the extraction table.
pub fn predict(project: &Project, documents: &[ReviewDocument], threshold: f32) -> Result<PredictOutput> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    let models = Models {
        threshold,
        ..Models::load(project)?
    };
    let predictions = documents
        .iter()
        .map(|d| predict_document(&models, d))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<PredictionRecord> = predictions.iter().flat_map(|p| p.records()).collect();
    let mut jsonl = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut jsonl, r)?;
        jsonl.push(b'\n');
    }
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let path = project.predictions_dir().join(format!("{stamp}.jsonl"));
    write_file(&path, &jsonl)?;
    Ok(PredictOutput {
        path,
        records,
        table: render_table(&extraction_records(&predictions)),
    })
}

/// Documents to predict on: a JSONL file, literal texts, or by default
/// the unlabeled pool.
pub fn prediction_input(project: &Project, input: Option<&Path>, texts: &[String]) -> Result<Vec<ReviewDocument>> {
    if !texts.is_empty() {
        return Ok(texts
            .iter()
            .enumerate()
            .map(|(i, t)| ReviewDocument::new(format!("text{}", i + 1), t.clone()))
            .filter(|d| !tokenize(&d.text).is_empty())
            .collect());
    }
    match input {
        Some(path) => load_corpus(path),
        None => project.load_unlabeled(),
    }
}

#[derive(Debug, Clone)]
pub struct SelfTrainReport {
    pub run: String,
    pub audit: Vec<AuditEntry>,
    /// Whether new checkpoints were written.
    pub retrained: bool,
}

/// Self-trains on the unlabeled pool. The audit log is written to a new
/// run; checkpoints are replaced only when a document was adopted.
pub fn selftrain(
    project: &Project,
    config: &SelfTrainConfig,
    ner_config: &TrainConfig,
    rel_config: &TrainConfig,
) -> Result<SelfTrainReport> {
    let models = Models::load(project)?;
    let outcome = self_train(
        models,
        &gold(project)?,
        &project.load_unlabeled()?,
        config,
        ner_config,
        rel_config,
        &project.blacklist()?,
    )?;
    let (run, dir) = project.create_run()?;
    let audit_path = dir.join(AUDIT_LOG);
    write_file(&audit_path, b"")?;
    for entry in &outcome.audit {
        project.append_jsonl(&audit_path, entry)?;
    }
    for doc in &outcome.adopted {
        write_file(&dir.join("pseudo").join(format!("{}.json", doc.id())), &doc.to_canonical_json())?;
    }
    let retrained = !outcome.adopted.is_empty();
    if retrained {
        outcome.models.ner.save(&project.checkpoint_path(Role::Ner))?;
        outcome.models.rel.save(&project.checkpoint_path(Role::Rel))?;
    }
    if let Some(curve) = &outcome.ner_curve {
        write_curve(curve, &dir.join(NER_CURVE))?;
    }
    if let Some(curve) = &outcome.rel_curve {
        write_curve(curve, &dir.join(REL_CURVE))?;
    }
    Ok(SelfTrainReport {
        run,
        audit: outcome.audit,
        retrained,
    })
}

/// Puts unlabeled documents that pass the thresholds into the review
/// queue instead of adopting them. Returns the queued ids.
pub fn queue_for_review(project: &Project, config: &SelfTrainConfig) -> Result<Vec<String>> {
    config.validate()?;
    let models = Models::load(project)?;
    let blacklist = project.blacklist()?;
    let queued: BTreeSet<String> = project.review_queue()?.into_iter().map(|c| c.document.id).collect();
    let pool: Vec<ReviewDocument> = project
        .load_unlabeled()?
        .into_iter()
        .filter(|d| !blacklist.contains(&d.id) && !queued.contains(&d.id))
        .collect();
    if pool.is_empty() {
        return Err(Error::NoUnlabeledDocuments);
    }
    let mut ids = Vec::new();
    for p in candidates(&models, &pool, config)?.iter().take(config.max_added_per_round) {
        project.enqueue(&review_candidate(p))?;
        ids.push(p.document.id.clone());
    }
    Ok(ids)
}
