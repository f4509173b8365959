//! Span/relation annotations, span-to-token alignment and BIO encoding.
//!
//! The canonical annotation file holds one document:
//!
//! ```json
//! {
//!   "id": "r1",
//!   "text": "good camera",
//!   "entities": [{"start": 0, "end": 4, "label": "OPI"}, {"start": 5, "end": 11, "label": "ASP"}],
//!   "relations": [{"head": 1, "tail": 0, "label": "ASP-OPI"}]
//! }
//! ```
//!
//! Offsets count Unicode scalar values; `head`/`tail` index `entities`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, ReviewDocument, Token};
use crate::error::{Error, Result};

pub const RELATION_LABEL: &str = "ASP-OPI";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "ASP")]
    Asp,
    #[serde(rename = "OPI")]
    Opi,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 2] = [EntityLabel::Asp, EntityLabel::Opi];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::Asp => "ASP",
            EntityLabel::Opi => "OPI",
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
}

/// A labeled token range `[token_start, token_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub token_start: usize,
    pub token_end: usize,
    pub label: EntityLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f32>,
}

impl EntityMention {
    pub fn new(token_start: usize, token_end: usize, label: EntityLabel) -> Self {
        EntityMention {
            token_start,
            token_end,
            label,
            confidence: None,
        }
    }

    pub fn len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        self.token_end <= self.token_start
    }

    /// `(token_start, token_end, label)`, ignoring confidence.
    pub fn key(&self) -> (usize, usize, EntityLabel) {
        (self.token_start, self.token_end, self.label)
    }

    pub fn overlaps(&self, other: &EntityMention) -> bool {
        self.token_start < other.token_end && other.token_start < self.token_end
    }

    /// Character extent `[start, end)` in the tokenized text.
    pub fn char_span(&self, tokens: &[Token]) -> (usize, usize) {
        (tokens[self.token_start].start, tokens[self.token_end - 1].end)
    }

    /// Text covered by the mention.
    pub fn surface(&self, text: &str, tokens: &[Token]) -> String {
        let (start, end) = self.char_span(tokens);
        text.chars().skip(start).take(end - start).collect()
    }
}

/// Directed ASP-OPI link between two mentions of a document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationAnnotation {
    pub head: usize,
    pub tail: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f32>,
}

impl RelationAnnotation {
    pub fn new(head: usize, tail: usize) -> Self {
        RelationAnnotation {
            head,
            tail,
            probability: None,
        }
    }

    pub fn label(&self) -> &'static str {
        RELATION_LABEL
    }
}

/// A document with its tokens, mentions and relations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDocument {
    pub document: ReviewDocument,
    pub tokens: Vec<Token>,
    pub mentions: Vec<EntityMention>,
    pub relations: Vec<RelationAnnotation>,
}

impl AnnotatedDocument {
    pub fn id(&self) -> &str {
        &self.document.id
    }

    /// Checks mention and relation invariants. `gold` additionally requires
    /// every relation to run from an ASP mention to an OPI mention.
    pub fn validate(&self, gold: bool) -> Result<()> {
        for m in &self.mentions {
            if m.token_start >= m.token_end || m.token_end > self.tokens.len() {
                return Err(Error::InvalidSpan(format!(
                    "mention tokens {}..{} invalid for {} tokens",
                    m.token_start,
                    m.token_end,
                    self.tokens.len()
                )));
            }
            if let Some(c) = m.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidSpan(format!("confidence {c} outside [0,1]")));
                }
            }
        }
        check_overlaps(&self.mentions)?;
        let mut seen = std::collections::HashSet::new();
        for r in &self.relations {
            if r.head >= self.mentions.len() || r.tail >= self.mentions.len() {
                return Err(Error::InvalidRelation(format!(
                    "relation {}->{} indexes past {} mentions",
                    r.head,
                    r.tail,
                    self.mentions.len()
                )));
            }
            if r.head == r.tail {
                return Err(Error::InvalidRelation(format!("relation {0}->{0} has head = tail", r.head)));
            }
            if gold
                && (self.mentions[r.head].label != EntityLabel::Asp
                    || self.mentions[r.tail].label != EntityLabel::Opi)
            {
                return Err(Error::InvalidRelation(format!(
                    "relation {}->{} must run from ASP to OPI",
                    r.head, r.tail
                )));
            }
            if !seen.insert((r.head, r.tail)) {
                return Err(Error::InvalidRelation(format!(
                    "duplicate relation {}->{}",
                    r.head, r.tail
                )));
            }
        }
        Ok(())
    }

    /// Canonical interchange form: entities sorted, snapped to token
    /// boundaries, relations sorted by (head, tail).
    pub fn to_file(&self) -> AnnotationFile {
        let mut relations: Vec<FileRelation> = self
            .relations
            .iter()
            .map(|r| FileRelation {
                head: r.head,
                tail: r.tail,
                label: RELATION_LABEL.to_string(),
            })
            .collect();
        relations.sort_by_key(|r| (r.head, r.tail));
        AnnotationFile {
            id: self.document.id.clone(),
            text: self.document.text.clone(),
            entities: self
                .mentions
                .iter()
                .map(|m| {
                    let (start, end) = m.char_span(&self.tokens);
                    CharSpanAnnotation {
                        start,
                        end,
                        label: m.label,
                    }
                })
                .collect(),
            relations,
        }
    }

    /// Canonical JSON bytes (pretty-printed, trailing newline).
    pub fn to_canonical_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.to_file()).expect("annotation serializes");
        out.push(b'\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRelation {
    pub head: usize,
    pub tail: usize,
    pub label: String,
}

/// On-disk annotation schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub entities: Vec<CharSpanAnnotation>,
    #[serde(default)]
    pub relations: Vec<FileRelation>,
}

impl AnnotationFile {
    /// Validates the file and aligns its spans, producing a gold document.
    /// Metadata (rating, date, source) is taken from `base` when given.
    pub fn into_document(self, base: Option<&ReviewDocument>) -> Result<AnnotatedDocument> {
        let text_len = self.text.chars().count();
        for e in &self.entities {
            if e.start >= e.end || e.end > text_len {
                return Err(Error::InvalidSpan(format!(
                    "entity {}..{} outside text of length {text_len}",
                    e.start, e.end
                )));
            }
        }
        for r in &self.relations {
            if r.label != RELATION_LABEL {
                return Err(Error::InvalidRelation(format!("unknown relation label `{}`", r.label)));
            }
            if r.head >= self.entities.len() || r.tail >= self.entities.len() {
                return Err(Error::InvalidRelation(format!(
                    "relation {}->{} indexes past {} entities",
                    r.head,
                    r.tail,
                    self.entities.len()
                )));
            }
            if r.head == r.tail {
                return Err(Error::InvalidRelation(format!("relation {0}->{0} has head = tail", r.head)));
            }
        }
        let mut document = match base {
            Some(b) => ReviewDocument {
                id: self.id.clone(),
                text: self.text.clone(),
                ..b.clone()
            },
            None => ReviewDocument::new(self.id.clone(), self.text.clone()),
        };
        document.id = self.id;
        document.validate()?;
        let tokens = tokenize(&document.text);
        let aligned = align_indexed(&self.entities, &tokens)?;
        // entity index -> position in the sorted mention list
        let mut position = vec![0; aligned.len()];
        for (pos, (orig, _)) in aligned.iter().enumerate() {
            position[*orig] = pos;
        }
        let mentions: Vec<EntityMention> = aligned.into_iter().map(|(_, m)| m).collect();
        let mut relations: Vec<RelationAnnotation> = self
            .relations
            .iter()
            .map(|r| RelationAnnotation::new(position[r.head], position[r.tail]))
            .collect();
        relations.sort_by_key(|r| (r.head, r.tail));
        let doc = AnnotatedDocument {
            document,
            tokens,
            mentions,
            relations,
        };
        doc.validate(true)?;
        Ok(doc)
    }
}

/// Parses and validates one annotation file.
pub fn parse_annotation_file(bytes: &[u8]) -> Result<AnnotatedDocument> {
    let file: AnnotationFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    file.into_document(None)
}

fn check_overlaps(mentions: &[EntityMention]) -> Result<()> {
    let mut sorted: Vec<&EntityMention> = mentions.iter().collect();
    sorted.sort_by_key(|m| (m.token_start, m.token_end));
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(Error::OverlappingMentions {
                first: (pair[0].token_start, pair[0].token_end),
                second: (pair[1].token_start, pair[1].token_end),
            });
        }
    }
    Ok(())
}

fn align_indexed(spans: &[CharSpanAnnotation], tokens: &[Token]) -> Result<Vec<(usize, EntityMention)>> {
    let mut out = Vec::with_capacity(spans.len());
    for (i, span) in spans.iter().enumerate() {
        let first = tokens
            .iter()
            .position(|t| t.start < span.end && t.end > span.start);
        let Some(first) = first else {
            return Err(Error::UnalignableSpan {
                start: span.start,
                end: span.end,
            });
        };
        let mut last = first;
        while last + 1 < tokens.len() && tokens[last + 1].start < span.end {
            last += 1;
        }
        if tokens[first].start != span.start || tokens[last].end != span.end {
            log::warn!(
                "span {}..{} ({}) snapped to token boundaries {}..{}",
                span.start,
                span.end,
                span.label,
                tokens[first].start,
                tokens[last].end
            );
        }
        out.push((i, EntityMention::new(first, last + 1, span.label)));
    }
    out.sort_by_key(|(i, m)| (m.token_start, m.token_end, *i));
    let mentions: Vec<EntityMention> = out.iter().map(|(_, m)| *m).collect();
    check_overlaps(&mentions)?;
    Ok(out)
}

/// Maps character spans to the minimal covering token ranges, sorted by
/// token start.
pub fn align_spans(spans: &[CharSpanAnnotation], tokens: &[Token]) -> Result<Vec<EntityMention>> {
    Ok(align_indexed(spans, tokens)?
        .into_iter()
        .map(|(_, m)| m)
        .collect())
}

/// Per-token span tag. Ordinals are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum BioTag {
    O = 0,
    BAsp = 1,
    IAsp = 2,
    BOpi = 3,
    IOpi = 4,
}

impl BioTag {
    pub const COUNT: usize = 5;
    pub const ALL: [BioTag; 5] = [BioTag::O, BioTag::BAsp, BioTag::IAsp, BioTag::BOpi, BioTag::IOpi];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<BioTag> {
        BioTag::ALL.get(i).copied()
    }

    pub fn begin(label: EntityLabel) -> BioTag {
        match label {
            EntityLabel::Asp => BioTag::BAsp,
            EntityLabel::Opi => BioTag::BOpi,
        }
    }

    pub fn inside(label: EntityLabel) -> BioTag {
        match label {
            EntityLabel::Asp => BioTag::IAsp,
            EntityLabel::Opi => BioTag::IOpi,
        }
    }

    pub fn label(self) -> Option<EntityLabel> {
        match self {
            BioTag::O => None,
            BioTag::BAsp | BioTag::IAsp => Some(EntityLabel::Asp),
            BioTag::BOpi | BioTag::IOpi => Some(EntityLabel::Opi),
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, BioTag::BAsp | BioTag::BOpi)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::O => "O",
            BioTag::BAsp => "B-ASP",
            BioTag::IAsp => "I-ASP",
            BioTag::BOpi => "B-OPI",
            BioTag::IOpi => "I-OPI",
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn encode_bio(mentions: &[EntityMention], n_tokens: usize) -> Result<Vec<BioTag>> {
    let mut tags = vec![BioTag::O; n_tokens];
    for m in mentions {
        if m.token_start >= m.token_end || m.token_end > n_tokens {
            return Err(Error::InvalidSpan(format!(
                "mention {}..{} invalid for {n_tokens} tokens",
                m.token_start, m.token_end
            )));
        }
    }
    check_overlaps(mentions)?;
    for m in mentions {
        tags[m.token_start] = BioTag::begin(m.label);
        for t in &mut tags[m.token_start + 1..m.token_end] {
            *t = BioTag::inside(m.label);
        }
    }
    Ok(tags)
}

/// Lenient decoding: an `I-X` that does not continue an `X` run opens a new
/// mention.
pub fn decode_bio(tags: &[BioTag]) -> Vec<EntityMention> {
    let mut out: Vec<EntityMention> = Vec::new();
    let mut open: Option<EntityMention> = None;
    for (i, &tag) in tags.iter().enumerate() {
        let continues = match (&open, tag.label()) {
            (Some(m), Some(label)) => !tag.is_begin() && m.label == label,
            _ => false,
        };
        if continues {
            if let Some(m) = open.as_mut() {
                m.token_end = i + 1;
            }
            continue;
        }
        if let Some(m) = open.take() {
            out.push(m);
        }
        if let Some(label) = tag.label() {
            open = Some(EntityMention::new(i, i + 1, label));
        }
    }
    out.extend(open);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use EntityLabel::{Asp, Opi};

    fn span(start: usize, end: usize, label: EntityLabel) -> CharSpanAnnotation {
        CharSpanAnnotation { start, end, label }
    }

    #[test]
    fn parses_annotation_file() {
        let json = br#"{"id":"d1","text":"good camera",
            "entities":[{"start":0,"end":4,"label":"OPI"},{"start":5,"end":11,"label":"ASP"}],
            "relations":[{"head":1,"tail":0,"label":"ASP-OPI"}]}"#;
        let doc = parse_annotation_file(json).unwrap();
        assert_eq!(doc.mentions.len(), 2);
        assert_eq!(doc.relations.len(), 1);
        let r = doc.relations[0];
        assert_eq!(doc.mentions[r.head].label, Asp);
        assert_eq!(doc.mentions[r.tail].label, Opi);
    }

    #[test]
    fn rejects_bad_spans_and_relations() {
        let long = br#"{"id":"d","text":"good","entities":[{"start":0,"end":9,"label":"OPI"}]}"#;
        assert!(matches!(parse_annotation_file(long), Err(Error::InvalidSpan(_))));

        let bad_label = br#"{"id":"d","text":"good camera",
            "entities":[{"start":0,"end":4,"label":"OPI"},{"start":5,"end":11,"label":"ASP"}],
            "relations":[{"head":1,"tail":0,"label":"ASP-ASP"}]}"#;
        assert!(matches!(parse_annotation_file(bad_label), Err(Error::InvalidRelation(_))));

        let self_rel = br#"{"id":"d","text":"good camera",
            "entities":[{"start":0,"end":4,"label":"OPI"}],
            "relations":[{"head":0,"tail":0,"label":"ASP-OPI"}]}"#;
        assert!(matches!(parse_annotation_file(self_rel), Err(Error::InvalidRelation(_))));

        let reversed = br#"{"id":"d","text":"good camera",
            "entities":[{"start":0,"end":4,"label":"OPI"},{"start":5,"end":11,"label":"ASP"}],
            "relations":[{"head":0,"tail":1,"label":"ASP-OPI"}]}"#;
        assert!(matches!(parse_annotation_file(reversed), Err(Error::InvalidRelation(_))));

        assert!(matches!(parse_annotation_file(b"{"), Err(Error::Parse { .. })));
    }

    #[test]
    fn alignment_snaps_outward() {
        let tokens = tokenize("great camera");
        let exact = align_spans(&[span(6, 12, Asp)], &tokens).unwrap();
        assert_eq!(exact[0].key(), (1, 2, Asp));
        let straddle = align_spans(&[span(3, 8, Opi)], &tokens).unwrap();
        assert_eq!(straddle[0].key(), (0, 2, Opi));
        assert!(matches!(
            align_spans(&[span(5, 6, Opi)], &tokens),
            Err(Error::UnalignableSpan { start: 5, end: 6 })
        ));
        assert!(matches!(
            align_spans(&[span(0, 5, Opi), span(3, 12, Asp)], &tokens),
            Err(Error::OverlappingMentions { .. })
        ));
    }

    #[test]
    fn relations_follow_sorted_mentions() {
        let json = br#"{"id":"d","text":"camera is good",
            "entities":[{"start":10,"end":14,"label":"OPI"},{"start":0,"end":6,"label":"ASP"}],
            "relations":[{"head":1,"tail":0,"label":"ASP-OPI"}]}"#;
        let doc = parse_annotation_file(json).unwrap();
        assert_eq!(doc.mentions[0].label, Asp);
        assert_eq!((doc.relations[0].head, doc.relations[0].tail), (0, 1));
        let canonical = doc.to_canonical_json();
        let again = parse_annotation_file(&canonical).unwrap();
        assert_eq!(again.to_canonical_json(), canonical);
    }

    #[test]
    fn bio_examples() {
        use BioTag::*;
        let m = |s, e, l| EntityMention::new(s, e, l);
        assert_eq!(encode_bio(&[m(0, 3, Asp)], 5).unwrap(), [BAsp, IAsp, IAsp, O, O]);
        assert_eq!(encode_bio(&[], 3).unwrap(), [O, O, O]);
        assert_eq!(encode_bio(&[m(0, 1, Opi), m(1, 2, Opi)], 2).unwrap(), [BOpi, BOpi]);
        assert!(matches!(
            encode_bio(&[m(0, 2, Opi), m(1, 3, Asp)], 3),
            Err(Error::OverlappingMentions { .. })
        ));

        let keys = |tags: &[BioTag]| decode_bio(tags).iter().map(|m| m.key()).collect::<Vec<_>>();
        assert_eq!(keys(&[BAsp, IAsp, O, BOpi]), [(0, 2, Asp), (3, 4, Opi)]);
        assert_eq!(keys(&[IAsp, O]), [(0, 1, Asp)]);
        assert!(keys(&[O, O]).is_empty());
        assert_eq!(keys(&[BAsp, IOpi, IOpi]), [(0, 1, Asp), (1, 3, Opi)]);
    }

    fn mention_sets() -> impl Strategy<Value = (Vec<EntityMention>, usize)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec((0usize..4, 0usize..4, any::<bool>()), 0..12),
                Just(n),
            )
                .prop_map(|(pieces, n)| {
                    let mut mentions = Vec::new();
                    let mut cursor = 0;
                    for (gap, len, asp) in pieces {
                        let start = cursor + gap;
                        let end = start + len + 1;
                        if end > n {
                            break;
                        }
                        mentions.push(EntityMention::new(start, end, if asp { Asp } else { Opi }));
                        cursor = end;
                    }
                    (mentions, n)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn decode_inverts_encode((mentions, n) in mention_sets()) {
            let tags = encode_bio(&mentions, n).unwrap();
            prop_assert_eq!(decode_bio(&tags), mentions);
        }

        #[test]
        fn decode_never_overlaps(ords in proptest::collection::vec(0usize..5, 0..50)) {
            let tags: Vec<BioTag> = ords.iter().map(|&o| BioTag::from_ordinal(o).unwrap()).collect();
            let mentions = decode_bio(&tags);
            for pair in mentions.windows(2) {
                prop_assert!(pair[0].token_end <= pair[1].token_start);
            }
        }

        #[test]
        fn realigning_a_mention_is_stable(words in proptest::collection::vec("[a-z]{1,6}[,!]?", 1..12), a in 0usize..12, b in 0usize..12) {
            let text = words.join(" ");
            let tokens = tokenize(&text);
            let (a, b) = (a % tokens.len(), b % tokens.len());
            let (lo, hi) = (a.min(b), a.max(b));
            let m = EntityMention::new(lo, hi + 1, Asp);
            let (start, end) = m.char_span(&tokens);
            let again = align_spans(&[span(start, end, Asp)], &tokens).unwrap();
            prop_assert_eq!(again[0].key(), m.key());
        }
    }
}
