//! Span- and relation-level precision/recall/F1, and per-epoch training
//! curves.
//!
//! Matching is exact: a predicted span counts only if a gold span with the
//! same token boundaries and label exists in the same document. Scores are
//! micro-averaged over documents.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotatedDocument, EntityLabel, EntityMention, RelationAnnotation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted_count: usize,
    pub gold_count: usize,
}

impl PrfScore {
    /// Both sets empty scores 1; an empty side otherwise scores 0.
    pub fn from_counts(true_positives: usize, predicted_count: usize, gold_count: usize) -> Self {
        if predicted_count == 0 && gold_count == 0 {
            return PrfScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                true_positives,
                predicted_count,
                gold_count,
            };
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(true_positives, predicted_count);
        let recall = ratio(true_positives, gold_count);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfScore {
            precision,
            recall,
            f1,
            true_positives,
            predicted_count,
            gold_count,
        }
    }
}

pub type SpanKey = (usize, usize, EntityLabel);

/// Direction-sensitive relation identity: (head span, tail span).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationKey {
    pub head: SpanKey,
    pub tail: SpanKey,
}

impl RelationKey {
    pub fn new(head: &EntityMention, tail: &EntityMention) -> Self {
        RelationKey {
            head: head.key(),
            tail: tail.key(),
        }
    }

    pub fn from_relations(mentions: &[EntityMention], relations: &[RelationAnnotation]) -> Vec<RelationKey> {
        relations
            .iter()
            .map(|r| RelationKey::new(&mentions[r.head], &mentions[r.tail]))
            .collect()
    }
}

pub fn gold_mentions(docs: &[AnnotatedDocument]) -> BTreeMap<String, Vec<EntityMention>> {
    docs.iter()
        .map(|d| (d.id().to_string(), d.mentions.clone()))
        .collect()
}

pub fn gold_relations(docs: &[AnnotatedDocument]) -> BTreeMap<String, Vec<RelationKey>> {
    docs.iter()
        .map(|d| (d.id().to_string(), RelationKey::from_relations(&d.mentions, &d.relations)))
        .collect()
}

fn micro_prf<T, K, F>(gold: &BTreeMap<String, Vec<T>>, predicted: &BTreeMap<String, Vec<T>>, key: F) -> Result<PrfScore>
where
    K: Eq + Hash,
    F: Fn(&T) -> K,
{
    if let Some(id) = gold
        .keys()
        .find(|k| !predicted.contains_key(*k))
        .or_else(|| predicted.keys().find(|k| !gold.contains_key(*k)))
    {
        return Err(Error::DocumentIdMismatch(id.clone()));
    }
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    for (id, gold_items) in gold {
        let gold_set: HashSet<K> = gold_items.iter().map(&key).collect();
        let pred_set: HashSet<K> = predicted[id].iter().map(&key).collect();
        n_gold += gold_set.len();
        n_pred += pred_set.len();
        tp += pred_set.iter().filter(|k| gold_set.contains(k)).count();
    }
    Ok(PrfScore::from_counts(tp, n_pred, n_gold))
}

pub fn span_prf(
    gold: &BTreeMap<String, Vec<EntityMention>>,
    predicted: &BTreeMap<String, Vec<EntityMention>>,
) -> Result<PrfScore> {
    micro_prf(gold, predicted, EntityMention::key)
}

pub fn rel_prf(
    gold: &BTreeMap<String, Vec<RelationKey>>,
    predicted: &BTreeMap<String, Vec<RelationKey>>,
) -> Result<PrfScore> {
    micro_prf(gold, predicted, |k| *k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub records: Vec<EpochRecord>,
}

impl TrainingCurve {
    pub fn push(&mut self, train_loss: f64, val_loss: f64, score: &PrfScore) {
        self.records.push(EpochRecord {
            epoch: self.records.len(),
            train_loss,
            val_loss,
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Earliest epoch with the highest F1.
    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.records.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.f1 >= r.f1 => Some(b),
            _ => Some(r),
        })
    }

    pub fn max_f1(&self) -> f64 {
        self.records.iter().map(|r| r.f1).fold(0.0, f64::max)
    }

    /// First epoch whose F1 reaches `floor`.
    pub fn first_epoch_reaching(&self, floor: f64) -> Option<usize> {
        self.records.iter().find(|r| r.f1 >= floor).map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,precision,recall,f1\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                r.epoch, r.train_loss, r.val_loss, r.precision, r.recall, r.f1
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<TrainingCurve> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut curve = TrainingCurve::default();
        for (i, row) in reader.deserialize::<EpochRecord>().enumerate() {
            let record = row.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            curve.records.push(record);
        }
        Ok(curve)
    }
}

pub fn write_curve(curve: &TrainingCurve, path: &Path) -> Result<()> {
    if curve.is_empty() {
        return Err(Error::Config("cannot write an empty training curve".into()));
    }
    crate::corpus::write_file(path, curve.to_csv().as_bytes())
}

pub fn read_curve(path: &Path) -> Result<TrainingCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainingCurve::parse_csv(&text).map_err(|e| Error::File {
        path: path.into(),
        message: e.to_string(),
    })
}
