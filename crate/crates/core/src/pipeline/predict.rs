//! Chained prediction over raw documents, its JSONL and table renderings,
//! and scoring against gold annotations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotate::{align_spans, AnnotatedDocument, CharSpanAnnotation, EntityLabel, EntityMention, RelationAnnotation};
use crate::checkpoint::Role;
use crate::corpus::{tokenize, ReviewDocument, Token, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{gold_mentions, gold_relations, rel_prf, span_prf, PrfScore, RelationKey};
use crate::ner::{predict_ner, NerModel};
use crate::relex::{format_percent, predict_rel, RelModel, RelationPrediction, DEFAULT_THRESHOLD};

use super::Project;

/// Column header of the extraction table.
pub const TABLE_HEADER: &str = "SI No | Text | ASP | OPI | Probability (%)";

/// Characters of review text shown in the table before it is cut.
pub const TEXT_WIDTH: usize = 40;

/// A tagger and a pair scorer sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Models {
    pub vocab: Vocabulary,
    pub ner: NerModel,
    pub rel: RelModel,
    /// Minimum probability for a relation to be emitted.
    pub threshold: f32,
}

impl Models {
    pub fn new(vocab: Vocabulary, ner: NerModel, rel: RelModel) -> Result<Self> {
        ner.check_vocabulary(&vocab)?;
        rel.check_vocabulary(&vocab)?;
        Ok(Models {
            vocab,
            ner,
            rel,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    /// Vocabulary and NER/REL checkpoints of a project.
    pub fn load(project: &Project) -> Result<Self> {
        let ner_path = project.checkpoint_path(Role::Ner);
        let rel_path = project.checkpoint_path(Role::Rel);
        for path in [&ner_path, &rel_path] {
            if !path.exists() {
                return Err(Error::ModelUnavailable(format!("{} does not exist", path.display())));
            }
        }
        Models::new(project.load_vocab()?, NerModel::load(&ner_path)?, RelModel::load(&rel_path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentPrediction {
    pub document: ReviewDocument,
    pub tokens: Vec<Token>,
    pub mentions: Vec<EntityMention>,
    /// Most probable first.
    pub relations: Vec<RelationPrediction>,
}

/// Tags the document, then scores pairs of the predicted mentions.
pub fn predict_document(models: &Models, document: &ReviewDocument) -> Result<DocumentPrediction> {
    let tokens = tokenize(&document.text);
    let mentions = predict_ner(&models.ner, &models.vocab, &tokens)?;
    let relations = predict_rel(&models.rel, &models.vocab, &tokens, &mentions, models.threshold)?;
    Ok(DocumentPrediction {
        document: document.clone(),
        tokens,
        mentions,
        relations,
    })
}

/// Character span of a mention and the text it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanText {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// One line of a predictions file. `aspect` is the relation head and
/// `opinion` its tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub aspect: SpanText,
    pub opinion: SpanText,
    pub probability: f32,
}

impl DocumentPrediction {
    pub fn span_text(&self, mention: &EntityMention) -> SpanText {
        let (start, end) = mention.char_span(&self.tokens);
        SpanText {
            start,
            end,
            text: mention.surface(&self.document.text, &self.tokens),
        }
    }

    pub fn records(&self) -> Vec<PredictionRecord> {
        self.relations
            .iter()
            .map(|r| PredictionRecord {
                doc_id: self.document.id.clone(),
                aspect: self.span_text(&r.head),
                opinion: self.span_text(&r.tail),
                probability: r.probability,
            })
            .collect()
    }

    /// Mean of every mention confidence and relation probability.
    pub fn mean_confidence(&self) -> f64 {
        let scores: Vec<f64> = self
            .mentions
            .iter()
            .filter_map(|m| m.confidence)
            .chain(self.relations.iter().map(|r| r.probability))
            .map(f64::from)
            .collect();
        if scores.is_empty() {
            return 0.0;
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    /// The prediction as an annotated document, relations ordered by
    /// (head, tail).
    pub fn to_annotated(&self) -> AnnotatedDocument {
        let mut relations: Vec<RelationAnnotation> = self
            .relations
            .iter()
            .map(|r| RelationAnnotation {
                head: r.head_index,
                tail: r.tail_index,
                probability: Some(r.probability),
            })
            .collect();
        relations.sort_by_key(|r| (r.head, r.tail));
        AnnotatedDocument {
            document: self.document.clone(),
            tokens: self.tokens.clone(),
            mentions: self.mentions.clone(),
            relations,
        }
    }
}

/// A row of the extraction table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionRecord {
    /// 1-based position of the document among those with extractions.
    pub serial: usize,
    pub text: String,
    pub aspect: String,
    pub opinion: String,
    pub probability: f32,
}

impl ExtractionRecord {
    pub fn percent(&self) -> String {
        format_percent(self.probability)
    }
}

/// Review text cut to [`TEXT_WIDTH`] characters, with `...` when cut.
pub fn display_text(text: &str) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= TEXT_WIDTH {
        return flat;
    }
    let cut: String = flat.chars().take(TEXT_WIDTH).collect();
    format!("{}...", cut.trim_end())
}

/// One record per emitted relation; documents without relations get none.
pub fn extraction_records(predictions: &[DocumentPrediction]) -> Vec<ExtractionRecord> {
    let mut out = Vec::new();
    let mut serial = 0;
    for p in predictions.iter().filter(|p| !p.relations.is_empty()) {
        serial += 1;
        for r in &p.relations {
            out.push(ExtractionRecord {
                serial,
                text: display_text(&p.document.text),
                aspect: p.span_text(&r.head).text,
                opinion: p.span_text(&r.tail).text,
                probability: r.probability,
            });
        }
    }
    out
}

/// Pipe-separated table; serial number and text appear on the first row
/// of each document only.
pub fn render_table(records: &[ExtractionRecord]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    let mut previous = None;
    for r in records {
        let first = previous != Some(r.serial);
        previous = Some(r.serial);
        let (serial, text) = if first {
            (r.serial.to_string(), r.text.as_str())
        } else {
            (String::new(), "")
        };
        out.push_str(&format!("{serial} | {text} | {} | {} | {}\n", r.aspect, r.opinion, r.percent()));
    }
    out
}

pub fn format_score(score: &PrfScore) -> String {
    format!("P={:.4} R={:.4} F1={:.4}", score.precision, score.recall, score.f1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub ner: PrfScore,
    /// Relations predicted over predicted mentions.
    pub rel: PrfScore,
}

/// Runs both models over gold documents and scores them end to end.
pub fn evaluate_models(models: &Models, gold: &[AnnotatedDocument]) -> Result<Evaluation> {
    let mut mentions = BTreeMap::new();
    let mut relations = BTreeMap::new();
    for doc in gold {
        let p = predict_document(models, &doc.document)?;
        let keys = p.relations.iter().map(|r| RelationKey::new(&r.head, &r.tail)).collect();
        relations.insert(doc.id().to_string(), keys);
        mentions.insert(doc.id().to_string(), p.mentions);
    }
    Ok(Evaluation {
        ner: span_prf(&gold_mentions(gold), &mentions)?,
        rel: rel_prf(&gold_relations(gold), &relations)?,
    })
}

fn align_one(doc: &AnnotatedDocument, span: &SpanText, label: EntityLabel) -> Result<EntityMention> {
    let spans = [CharSpanAnnotation {
        start: span.start,
        end: span.end,
        label,
    }];
    if span.end > doc.document.char_len() || span.start >= span.end {
        return Err(Error::InvalidSpan(format!(
            "{}..{} in document `{}`",
            span.start,
            span.end,
            doc.id()
        )));
    }
    Ok(align_spans(&spans, &doc.tokens)?[0])
}

/// Relation scores of a predictions file against gold, matching aspects as
/// ASP and opinions as OPI spans. Every record must name a gold document.
pub fn evaluate_records(gold: &[AnnotatedDocument], records: &[PredictionRecord]) -> Result<PrfScore> {
    let by_id: BTreeMap<&str, &AnnotatedDocument> = gold.iter().map(|d| (d.id(), d)).collect();
    let mut predicted: BTreeMap<String, Vec<RelationKey>> = gold.iter().map(|d| (d.id().to_string(), Vec::new())).collect();
    for r in records {
        let doc = by_id
            .get(r.doc_id.as_str())
            .ok_or_else(|| Error::DocumentIdMismatch(r.doc_id.clone()))?;
        let head = align_one(doc, &r.aspect, EntityLabel::Asp)?;
        let tail = align_one(doc, &r.opinion, EntityLabel::Opi)?;
        predicted
            .get_mut(&r.doc_id)
            .expect("every gold id is present")
            .push(RelationKey::new(&head, &tail));
    }
    rel_prf(&gold_relations(gold), &predicted)
}

/// Gold relations written as prediction records with probability 1.
pub fn gold_records(gold: &[AnnotatedDocument]) -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for doc in gold {
        let span = |m: &EntityMention| {
            let (start, end) = m.char_span(&doc.tokens);
            SpanText {
                start,
                end,
                text: m.surface(&doc.document.text, &doc.tokens),
            }
        };
        for r in &doc.relations {
            out.push(PredictionRecord {
                doc_id: doc.id().to_string(),
                aspect: span(&doc.mentions[r.head]),
                opinion: span(&doc.mentions[r.tail]),
                probability: 1.0,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(serial: usize, text: &str, aspect: &str, opinion: &str, p: f32) -> ExtractionRecord {
        ExtractionRecord {
            serial,
            text: text.into(),
            aspect: aspect.into(),
            opinion: opinion.into(),
            probability: p,
        }
    }

    #[test]
    fn table_blanks_repeated_document_cells() {
        let table = render_table(&[
            record(1, "Screen color poor", "Screen color", "poor", 0.7496),
            record(1, "Screen color poor", "camera", "poor", 0.5),
            record(2, "ok", "ram", "ok", 0.9),
        ]);
        let expected = "SI No | Text | ASP | OPI | Probability (%)\n\
                        1 | Screen color poor | Screen color | poor | 74.96\n \
                        |  | camera | poor | 50.00\n\
                        2 | ok | ram | ok | 90.00\n";
        assert_eq!(table, expected);
    }

    #[test]
    fn long_text_is_cut() {
        let text = "a ".repeat(50);
        let shown = display_text(&text);
        assert!(shown.ends_with("..."));
        assert!(shown.chars().count() <= TEXT_WIDTH + 3);
        assert_eq!(display_text("  two\nlines "), "two lines");
    }

    #[test]
    fn gold_records_score_perfectly() {
        let docs = crate::synthetic::overfit_set().annotated().unwrap();
        let score = evaluate_records(&docs, &gold_records(&docs)).unwrap();
        assert_eq!(format_score(&score), "P=1.0000 R=1.0000 F1=1.0000");
    }

    #[test]
    fn unknown_document_is_rejected() {
        let docs = crate::synthetic::overfit_set().annotated().unwrap();
        let mut records = gold_records(&docs);
        records[0].doc_id = "zzz".into();
        assert!(matches!(evaluate_records(&docs, &records), Err(Error::DocumentIdMismatch(_))));
    }
}
