//! On-disk project layout, the command lock, annotation storage with
//! revision tokens, run directories and the review queue.

use std::collections::BTreeSet;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::{AnnotatedDocument, AnnotationFile};
use crate::checkpoint::Role;
use crate::corpus::{load_corpus, write_corpus, write_file, ReviewDocument, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{read_curve, TrainingCurve};

pub const LOCK_FILE: &str = ".aoml.lock";
pub const NER_CURVE: &str = "ner_curve.csv";
pub const REL_CURVE: &str = "rel_curve.csv";
pub const AUDIT_LOG: &str = "audit.jsonl";

/// A project directory:
///
/// ```text
/// corpus/corpus.jsonl        labeled documents
/// corpus/unlabeled.jsonl     self-training pool
/// annotations/<id>.json
/// vocab/vocab.json
/// checkpoints/{mlm,ner,rel}.aoml
/// runs/<timestamp>/{ner_curve.csv, rel_curve.csv, audit.jsonl}
/// predictions/<timestamp>.jsonl
/// review/pending/<id>.json, review/blacklist.json, review/decisions.jsonl
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Project {
    root: PathBuf,
}

/// Held while a command mutates the project; the lock file is removed on
/// drop.
#[derive(Debug)]
pub struct ProjectLock {
    path: PathBuf,
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(&self.path) {
            log::warn!("could not remove {}: {e}", self.path.display());
        }
    }
}

/// Short content hash of stored annotation bytes.
pub fn revision_of(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Rejects ids that cannot serve as file names.
pub fn check_id(id: &str) -> Result<()> {
    let bad = id.is_empty()
        || id.starts_with('.')
        || id.chars().any(|c| matches!(c, '/' | '\\' | '\0') || c.is_control());
    if bad {
        return Err(Error::InvalidDocument(format!("id `{id}` is not usable as a file name")));
    }
    Ok(())
}

/// A stored gold annotation and its revision token.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredAnnotation {
    pub document: AnnotatedDocument,
    pub revision: String,
}

/// A pseudo-labeled document waiting for a human verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCandidate {
    pub document: ReviewDocument,
    pub annotation: AnnotationFile,
    /// Aligned with `annotation.entities`.
    pub entity_confidences: Vec<f32>,
    /// Aligned with `annotation.relations`.
    pub relation_probabilities: Vec<f32>,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Edit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub doc_id: String,
    pub verdict: Verdict,
    /// Corrected annotation, present exactly when the verdict is `edit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AnnotationFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(bytes)),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::File {
        path: path.into(),
        message: e.to_string(),
    }
}

impl Project {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Project { root: root.into() }
    }

    /// Creates the directory skeleton.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self> {
        let project = Project::new(root);
        for dir in ["corpus", "annotations", "vocab", "checkpoints", "runs", "predictions", "review/pending"] {
            let path = project.root.join(dir);
            fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        }
        Ok(project)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.root.join("corpus/corpus.jsonl")
    }

    pub fn unlabeled_path(&self) -> PathBuf {
        self.root.join("corpus/unlabeled.jsonl")
    }

    pub fn annotations_dir(&self) -> PathBuf {
        self.root.join("annotations")
    }

    pub fn annotation_path(&self, id: &str) -> PathBuf {
        self.annotations_dir().join(format!("{id}.json"))
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.root.join("vocab/vocab.json")
    }

    pub fn checkpoint_path(&self, role: Role) -> PathBuf {
        let name = role.to_string().to_lowercase();
        self.root.join("checkpoints").join(format!("{name}.aoml"))
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.root.join("predictions")
    }

    pub fn pending_dir(&self) -> PathBuf {
        self.root.join("review/pending")
    }

    pub fn blacklist_path(&self) -> PathBuf {
        self.root.join("review/blacklist.json")
    }

    pub fn decisions_path(&self) -> PathBuf {
        self.root.join("review/decisions.jsonl")
    }

    /// Takes the command lock, failing if another command holds it.
    pub fn lock(&self) -> Result<ProjectLock> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(ProjectLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn load_corpus(&self) -> Result<Vec<ReviewDocument>> {
        load_corpus(&self.corpus_path())
    }

    /// The self-training pool; empty when the file does not exist.
    pub fn load_unlabeled(&self) -> Result<Vec<ReviewDocument>> {
        let path = self.unlabeled_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        load_corpus(&path)
    }

    pub fn load_vocab(&self) -> Result<Vocabulary> {
        Vocabulary::load(&self.vocab_path())
    }

    pub fn document(&self, id: &str) -> Result<ReviewDocument> {
        self.load_corpus()?
            .into_iter()
            .find(|d| d.id == id)
            .ok_or_else(|| Error::NotFound(format!("document `{id}`")))
    }

    /// The stored annotation of `base`, if any.
    pub fn annotation_of(&self, base: &ReviewDocument) -> Result<Option<StoredAnnotation>> {
        check_id(&base.id)?;
        let path = self.annotation_path(&base.id);
        let Some(bytes) = read_optional(&path)? else {
            return Ok(None);
        };
        let file: AnnotationFile = serde_json::from_slice(&bytes).map_err(|e| file_error(&path, e))?;
        if file.id != base.id {
            return Err(file_error(&path, format!("id `{}` does not match file name", file.id)));
        }
        let document = file.into_document(Some(base)).map_err(|e| file_error(&path, e))?;
        Ok(Some(StoredAnnotation {
            document,
            revision: revision_of(&bytes),
        }))
    }

    /// Validates and stores an annotation of a corpus document. The update
    /// must be based on the current revision (`None` when unannotated).
    pub fn save_annotation(&self, file: AnnotationFile, based_on: Option<&str>) -> Result<StoredAnnotation> {
        check_id(&file.id)?;
        let base = self.document(&file.id)?;
        if file.text != base.text {
            return Err(Error::InvalidDocument(format!(
                "annotation text differs from the text of document `{}`",
                base.id
            )));
        }
        let document = file.into_document(Some(&base))?;
        let current = self.annotation_of(&base)?.map(|s| s.revision);
        if current.as_deref() != based_on {
            return Err(Error::RevisionConflict {
                id: base.id.clone(),
                expected: based_on.unwrap_or("none").to_string(),
                current: current.unwrap_or_else(|| "none".into()),
            });
        }
        self.write_annotation(document)
    }

    fn write_annotation(&self, document: AnnotatedDocument) -> Result<StoredAnnotation> {
        let bytes = document.to_canonical_json();
        write_file(&self.annotation_path(document.id()), &bytes)?;
        Ok(StoredAnnotation {
            document,
            revision: revision_of(&bytes),
        })
    }

    /// Annotated corpus documents, in corpus order.
    pub fn load_gold(&self) -> Result<Vec<AnnotatedDocument>> {
        let mut gold = Vec::new();
        for doc in self.load_corpus()? {
            if let Some(stored) = self.annotation_of(&doc)? {
                gold.push(stored.document);
            }
        }
        Ok(gold)
    }

    /// Creates `runs/<timestamp>` and returns its name and path.
    pub fn create_run(&self) -> Result<(String, PathBuf)> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
        let runs = self.runs_dir();
        fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
        for n in 0.. {
            let name = if n == 0 { stamp.clone() } else { format!("{stamp}-{n}") };
            let path = runs.join(&name);
            match fs::create_dir(&path) {
                Ok(()) => return Ok((name, path)),
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        unreachable!("run names are unbounded")
    }

    /// Run names, oldest first.
    pub fn list_runs(&self) -> Result<Vec<String>> {
        let runs = self.runs_dir();
        let entries = match fs::read_dir(&runs) {
            Ok(e) => e,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&runs, e)),
        };
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&runs, e))?;
            if entry.path().is_dir() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        Ok(names)
    }

    /// The NER and REL curves recorded by a run; either may be absent.
    pub fn run_curves(&self, run: &str) -> Result<(Option<TrainingCurve>, Option<TrainingCurve>)> {
        check_id(run).map_err(|_| Error::NotFound(format!("run `{run}`")))?;
        let dir = self.runs_dir().join(run);
        if !dir.is_dir() {
            return Err(Error::NotFound(format!("run `{run}`")));
        }
        let load = |name: &str| -> Result<Option<TrainingCurve>> {
            let path = dir.join(name);
            if path.exists() {
                read_curve(&path).map(Some)
            } else {
                Ok(None)
            }
        };
        Ok((load(NER_CURVE)?, load(REL_CURVE)?))
    }

    pub fn blacklist(&self) -> Result<BTreeSet<String>> {
        let path = self.blacklist_path();
        match read_optional(&path)? {
            Some(bytes) => serde_json::from_slice(&bytes).map_err(|e| file_error(&path, e)),
            None => Ok(BTreeSet::new()),
        }
    }

    pub fn enqueue(&self, candidate: &ReviewCandidate) -> Result<()> {
        check_id(&candidate.document.id)?;
        let path = self.pending_dir().join(format!("{}.json", candidate.document.id));
        write_file(&path, &serde_json::to_vec_pretty(candidate)?)
    }

    /// Pending candidates, most confident first, ties by id.
    pub fn review_queue(&self) -> Result<Vec<ReviewCandidate>> {
        let dir = self.pending_dir();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&dir, e)),
        };
        let mut queue = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let c: ReviewCandidate = serde_json::from_slice(&bytes).map_err(|e| file_error(&path, e))?;
                queue.push(c);
            }
        }
        queue.sort_by(|a, b| {
            b.mean_confidence
                .total_cmp(&a.mean_confidence)
                .then_with(|| a.document.id.cmp(&b.document.id))
        });
        Ok(queue)
    }

    /// Applies a verdict to a queued candidate. Accepted and edited
    /// documents join the labeled corpus and leave the unlabeled pool;
    /// rejected ones are blacklisted from future adoption.
    pub fn apply_review(&self, mut decision: ReviewDecision) -> Result<()> {
        check_id(&decision.doc_id)?;
        let pending = self.pending_dir().join(format!("{}.json", decision.doc_id));
        let Some(bytes) = read_optional(&pending)? else {
            return Err(Error::NotFound(format!("review candidate `{}`", decision.doc_id)));
        };
        let candidate: ReviewCandidate = serde_json::from_slice(&bytes).map_err(|e| file_error(&pending, e))?;
        let annotation = match (decision.verdict, decision.annotation.clone()) {
            (Verdict::Edit, Some(edited)) => Some(edited),
            (Verdict::Edit, None) => {
                return Err(Error::InvalidDocument("an edit verdict needs an annotation".into()))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidDocument("only an edit verdict carries an annotation".into()))
            }
            (Verdict::Accept, None) => Some(candidate.annotation.clone()),
            (Verdict::Reject, None) => None,
        };
        match annotation {
            Some(file) => {
                if file.id != decision.doc_id || file.text != candidate.document.text {
                    return Err(Error::InvalidDocument(format!(
                        "annotation does not belong to document `{}`",
                        decision.doc_id
                    )));
                }
                let document = file.into_document(Some(&candidate.document))?;
                let mut corpus = if self.corpus_path().exists() {
                    self.load_corpus()?
                } else {
                    Vec::new()
                };
                if corpus.iter().any(|d| d.id == decision.doc_id) {
                    return Err(Error::DuplicateId(decision.doc_id));
                }
                self.write_annotation(document)?;
                corpus.push(candidate.document.clone());
                write_corpus(&self.corpus_path(), &corpus)?;
                let unlabeled = self.load_unlabeled()?;
                if unlabeled.iter().any(|d| d.id == decision.doc_id) {
                    let rest: Vec<ReviewDocument> = unlabeled.into_iter().filter(|d| d.id != decision.doc_id).collect();
                    write_corpus(&self.unlabeled_path(), &rest)?;
                }
            }
            None => {
                let mut blacklist = self.blacklist()?;
                blacklist.insert(decision.doc_id.clone());
                write_file(&self.blacklist_path(), &serde_json::to_vec_pretty(&blacklist)?)?;
            }
        }
        fs::remove_file(&pending).map_err(|e| Error::io(&pending, e))?;
        decision.timestamp.get_or_insert_with(|| chrono::Utc::now().to_rfc3339());
        self.append_jsonl(&self.decisions_path(), &decision)
    }

    pub(crate) fn append_jsonl<T: Serialize>(&self, path: &Path, record: &T) -> Result<()> {
        use std::io::Write;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(&line).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{CharSpanAnnotation, EntityLabel, FileRelation, RELATION_LABEL};

    fn project() -> (tempfile::TempDir, Project) {
        let dir = tempfile::tempdir().unwrap();
        let p = Project::init(dir.path()).unwrap();
        write_corpus(&p.corpus_path(), &[ReviewDocument::new("d1", "good camera")]).unwrap();
        (dir, p)
    }

    fn file() -> AnnotationFile {
        AnnotationFile {
            id: "d1".into(),
            text: "good camera".into(),
            entities: vec![
                CharSpanAnnotation {
                    start: 0,
                    end: 4,
                    label: EntityLabel::Opi,
                },
                CharSpanAnnotation {
                    start: 5,
                    end: 11,
                    label: EntityLabel::Asp,
                },
            ],
            relations: vec![FileRelation {
                head: 1,
                tail: 0,
                label: RELATION_LABEL.into(),
            }],
        }
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let (_d, p) = project();
        let held = p.lock().unwrap();
        assert!(matches!(p.lock(), Err(Error::Locked(_))));
        drop(held);
        p.lock().unwrap();
    }

    #[test]
    fn stale_revision_is_rejected() {
        let (_d, p) = project();
        let first = p.save_annotation(file(), None).unwrap();
        assert!(matches!(
            p.save_annotation(file(), None),
            Err(Error::RevisionConflict { .. })
        ));
        let again = p.save_annotation(file(), Some(&first.revision)).unwrap();
        assert_eq!(again.revision, first.revision);
        assert_eq!(p.load_gold().unwrap().len(), 1);
    }

    #[test]
    fn text_must_match_corpus() {
        let (_d, p) = project();
        let mut f = file();
        f.text = "good camera!".into();
        assert!(matches!(p.save_annotation(f, None), Err(Error::InvalidDocument(_))));
        assert!(p.load_gold().unwrap().is_empty());
    }

    #[test]
    fn ids_must_be_file_names() {
        assert!(check_id("r001").is_ok());
        for bad in ["", "../x", "a/b", ".hidden"] {
            assert!(check_id(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn runs_get_distinct_names() {
        let (_d, p) = project();
        let (a, _) = p.create_run().unwrap();
        let (b, _) = p.create_run().unwrap();
        assert_ne!(a, b);
        assert_eq!(p.list_runs().unwrap().len(), 2);
        assert!(matches!(p.run_curves("nope"), Err(Error::NotFound(_))));
    }
}
