//! Review documents, tokenization and vocabulary construction.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One product review with its metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDocument {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl ReviewDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        ReviewDocument {
            id: id.into(),
            text: text.into(),
            rating: None,
            date: None,
            source: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidDocument("empty id".into()));
        }
        if self.text.is_empty() {
            return Err(Error::InvalidDocument(format!("document `{}` has empty text", self.id)));
        }
        if let Some(r) = self.rating {
            if !(1..=5).contains(&r) {
                return Err(Error::InvalidDocument(format!(
                    "document `{}` has rating {r} outside [1,5]",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Length of the text in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// A token with character offsets (Unicode scalar indices, end exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on whitespace, peels leading and trailing punctuation into
/// one-character tokens and separates digit runs from their neighbours.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, chunk_start, i, &mut tokens);
    }
    tokens
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut core_start = start;
    while core_start < end && is_punctuation(chars[core_start]) {
        core_start += 1;
    }
    let mut core_end = end;
    while core_end > core_start && is_punctuation(chars[core_end - 1]) {
        core_end -= 1;
    }
    for p in start..core_start {
        push(chars, p, p + 1, out);
    }
    // Core: maximal runs of digits vs. everything else.
    let mut run_start = core_start;
    while run_start < core_end {
        let digit = chars[run_start].is_ascii_digit();
        let mut run_end = run_start + 1;
        while run_end < core_end && chars[run_end].is_ascii_digit() == digit {
            run_end += 1;
        }
        push(chars, run_start, run_end, out);
        run_start = run_end;
    }
    for p in core_end.max(core_start)..end {
        push(chars, p, p + 1, out);
    }
}

fn push(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    out.push(Token {
        surface: chars[start..end].iter().collect(),
        start,
        end,
    });
}

/// Reserved ids.
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const MASK_ID: usize = 2;
pub const RESERVED: usize = 3;

/// Token-string to id map. Ids `0..3` are reserved for PAD, UNK and MASK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_frequency: usize,
    lowercase: bool,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    lowercase: bool,
    min_frequency: usize,
    /// `tokens[i]` has id `i + 3`.
    tokens: Vec<String>,
}

impl From<VocabularyFile> for Vocabulary {
    fn from(file: VocabularyFile) -> Self {
        Vocabulary::from_tokens(file.tokens, file.min_frequency, file.lowercase)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            lowercase: v.lowercase,
            min_frequency: v.min_frequency,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// `tokens` must be distinct; `tokens[i]` receives id `i + 3`.
    pub fn from_tokens(tokens: Vec<String>, min_frequency: usize, lowercase: bool) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + RESERVED))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_frequency,
            lowercase,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    fn normalize<'a>(&self, surface: &'a str) -> std::borrow::Cow<'a, str> {
        if self.lowercase {
            std::borrow::Cow::Owned(surface.to_lowercase())
        } else {
            std::borrow::Cow::Borrowed(surface)
        }
    }

    pub fn lookup(&self, surface: &str) -> usize {
        self.index
            .get(self.normalize(surface).as_ref())
            .copied()
            .unwrap_or(UNK_ID)
    }

    /// Entry string for a non-reserved id.
    pub fn token(&self, id: usize) -> Option<&str> {
        id.checked_sub(RESERVED)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    /// Retained entries in id order, starting at id 3.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i + RESERVED))
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(&t.surface)).collect()
    }

    /// Stable 64-bit digest of the vocabulary contents.
    pub fn hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update([self.lowercase as u8]);
        hasher.update((self.min_frequency as u64).to_le_bytes());
        for t in &self.tokens {
            hasher.update((t.len() as u64).to_le_bytes());
            hasher.update(t.as_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_file(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::File {
            path: path.into(),
            message: e.to_string(),
        })
    }
}

/// Builds a vocabulary from every token occurring at least `min_frequency`
/// times. Ids follow descending frequency, ties broken lexicographically.
pub fn build_vocab(
    corpus: &[ReviewDocument],
    min_frequency: usize,
    lowercase: bool,
) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let min_frequency = min_frequency.max(1);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        for tok in tokenize(&doc.text) {
            let key = if lowercase {
                tok.surface.to_lowercase()
            } else {
                tok.surface
            };
            *counts.entry(key).or_default() += 1;
        }
    }
    let mut retained: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_frequency)
        .collect();
    retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_tokens(
        retained.into_iter().map(|(t, _)| t).collect(),
        min_frequency,
        lowercase,
    ))
}

/// Parses a JSONL corpus. Blank lines are skipped.
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<ReviewDocument>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: ReviewDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        doc.validate().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<ReviewDocument>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, message } => Error::File {
            path: path.into(),
            message: format!("parse error at line {line}: {message}"),
        },
        other => other,
    })
}

pub fn write_corpus(path: &Path, docs: &[ReviewDocument]) -> Result<()> {
    let mut out = Vec::new();
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.push(b'\n');
    }
    write_file(path, &out)
}

/// Writes via a temporary sibling and a rename.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
