//! Converter from annotation-tool exports to annotation files.
//!
//! An export is a JSON array, or JSON lines, of records:
//!
//! ```json
//! {"documentName": "r001.txt",
//!  "document": "good camera",
//!  "tokens": [{"text": "good", "start": 0, "end": 4, "token_start": 0, "token_end": 0, "entityLabel": "OPI"},
//!             {"text": "camera", "start": 5, "end": 11, "token_start": 1, "token_end": 1, "entityLabel": "ASP"}],
//!  "relations": [{"head": 1, "child": 0, "relationLabel": "ASP-OPI"}]}
//! ```
//!
//! * The id is `id` when present, else `documentName` without its
//!   extension, else `doc0001`, `doc0002`, ... by position.
//! * Every `tokens` entry is one entity; `start`/`end` are character
//!   offsets and `entityLabel` is ASP or OPI (any case). `token_start`
//!   identifies the entity in relations.
//! * `head` and `child` of a relation are the `token_start` values of its
//!   two entities. A relation recorded from the opinion to the aspect is
//!   turned around, with a warning.

use std::path::Path;

use serde::Deserialize;

use crate::annotate::{AnnotationFile, CharSpanAnnotation, EntityLabel, FileRelation, RELATION_LABEL};
use crate::corpus::ReviewDocument;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct ExportRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default, rename = "documentName")]
    document_name: Option<String>,
    document: String,
    #[serde(default)]
    tokens: Vec<ExportEntity>,
    #[serde(default)]
    relations: Vec<ExportRelation>,
}

#[derive(Debug, Deserialize)]
struct ExportEntity {
    start: usize,
    end: usize,
    token_start: usize,
    #[serde(rename = "entityLabel")]
    label: String,
}

#[derive(Debug, Deserialize)]
struct ExportRelation {
    head: usize,
    child: usize,
    #[serde(rename = "relationLabel")]
    label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Converted {
    pub document: ReviewDocument,
    pub annotation: AnnotationFile,
    /// Relations that were recorded opinion-first.
    pub flipped: usize,
}

fn parse_records(bytes: &[u8]) -> Result<Vec<ExportRecord>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        });
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn label(s: &str) -> Result<EntityLabel> {
    match s.to_ascii_uppercase().as_str() {
        "ASP" => Ok(EntityLabel::Asp),
        "OPI" => Ok(EntityLabel::Opi),
        other => Err(Error::InvalidSpan(format!("unknown entity label `{other}`"))),
    }
}

fn convert_record(index: usize, record: ExportRecord) -> Result<Converted> {
    let id = record
        .id
        .or_else(|| {
            record
                .document_name
                .map(|n| Path::new(&n).file_stem().map_or(n.clone(), |s| s.to_string_lossy().into_owned()))
        })
        .unwrap_or_else(|| format!("doc{:04}", index + 1));
    let entities = record
        .tokens
        .iter()
        .map(|t| {
            Ok(CharSpanAnnotation {
                start: t.start,
                end: t.end,
                label: label(&t.label)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let find = |token_start: usize| {
        record
            .tokens
            .iter()
            .position(|t| t.token_start == token_start)
            .ok_or_else(|| Error::InvalidRelation(format!("no entity starts at token {token_start} in `{id}`")))
    };
    let mut relations = Vec::new();
    let mut flipped = 0;
    for r in &record.relations {
        if !r.label.eq_ignore_ascii_case(RELATION_LABEL) {
            return Err(Error::InvalidRelation(format!("unknown relation label `{}` in `{id}`", r.label)));
        }
        let (mut head, mut tail) = (find(r.head)?, find(r.child)?);
        match (entities[head].label, entities[tail].label) {
            (EntityLabel::Asp, EntityLabel::Opi) => {}
            (EntityLabel::Opi, EntityLabel::Asp) => {
                log::warn!("`{id}`: relation recorded from opinion to aspect, reversed");
                std::mem::swap(&mut head, &mut tail);
                flipped += 1;
            }
            (a, b) => {
                return Err(Error::InvalidRelation(format!("{a}-{b} relation in `{id}`")));
            }
        }
        relations.push(FileRelation {
            head,
            tail,
            label: RELATION_LABEL.to_string(),
        });
    }
    let document = ReviewDocument::new(id.clone(), record.document.clone());
    let annotation = AnnotationFile {
        id,
        text: record.document,
        entities,
        relations,
    };
    // Canonical form: validated, aligned, sorted.
    let annotation = annotation.into_document(Some(&document))?.to_file();
    Ok(Converted {
        document,
        annotation,
        flipped,
    })
}

/// Converts every record of an export.
pub fn convert_export(bytes: &[u8]) -> Result<Vec<Converted>> {
    parse_records(bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| convert_record(i, r))
        .collect()
}
