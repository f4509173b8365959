//! Deterministic synthetic review corpora.
//!
//! * [`overfit_set`]: ten short, unambiguous sentences in which every
//!   opinion immediately precedes the aspect it describes.
//! * [`noisy_reviews`]: phone reviews built from clause templates, with
//!   typos, stretched letters, dropped verbs, odd casing and stray
//!   punctuation.
//! * [`unlabeled_reviews`]: the same generator without annotations.
//!
//! The copies under `data/` are produced by these functions.

use std::path::Path;

use crate::annotate::{AnnotatedDocument, AnnotationFile, CharSpanAnnotation, EntityLabel, FileRelation, RELATION_LABEL};
use crate::corpus::{write_corpus, write_file, ReviewDocument};
use crate::error::Result;
use crate::neural::RandomSource;
use crate::pipeline::Project;

pub const NOISY_COUNT: usize = 150;
pub const NOISY_SEED: u64 = 7;
pub const UNLABELED_COUNT: usize = 200;
pub const UNLABELED_SEED: u64 = 11;

const ASPECTS: &[&str] = &[
    "camera",
    "battery",
    "battery life",
    "screen",
    "display",
    "screen color",
    "internal storage",
    "storage",
    "sound quality",
    "speaker",
    "price",
    "performance",
    "processor",
    "design",
    "build quality",
    "charger",
    "charging speed",
    "fingerprint sensor",
    "face unlock",
    "wifi",
    "network",
    "signal",
    "ram",
    "touch",
    "body",
    "weight",
    "headphones",
    "packaging",
    "delivery",
    "customer service",
    "software",
    "front camera",
    "video quality",
    "gaming",
    "brightness",
    "volume",
];

const OPINIONS: &[&str] = &[
    "great",
    "good",
    "very good",
    "quite good",
    "excellent",
    "amazing",
    "awesome",
    "nice",
    "decent",
    "average",
    "poor",
    "bad",
    "very bad",
    "worst",
    "terrible",
    "slow",
    "fast",
    "cheap",
    "expensive",
    "superb",
    "not good",
    "disappointing",
    "horrible",
    "great value for money",
    "smooth",
    "laggy",
    "weak",
    "strong",
    "bright",
    "dull",
    "loud",
    "useless",
    "perfect",
];

/// Words for the whole product. Fillers use them freely; a clause rates the
/// product itself only now and then.
const GENERIC_ASPECTS: &[&str] = &["phone", "mobile", "product", "device", "handset"];
const GENERIC_FRACTION: f32 = 0.06;

/// Per-word misspelling rates; review authors mangle feature names more
/// often than the words around them.
const TERM_TYPOS: f32 = 0.1;
const FILLER_TYPOS: f32 = 0.02;


const FILLERS: &[&str] = &[
    "i bought this phone last month",
    "using it since 2 weeks",
    "overall",
    "for this budget",
    "my friend suggested it",
    "ordered it in the sale",
    "got it for my mom",
    "thanks amazon",
    "writing this after 10 days",
    "honest review",
    "it is my second phone from this brand",
    "do not buy",
    "the product arrived on time",
    "gifted this mobile to my dad",
    "this device was on sale",
    "switched from my old handset",
    "second phone in the house",
    "the phone came with a case",
    "using this mobile for work",
];

const CONNECTORS: &[&str] = &[", ", " and ", " but ", ". ", " , also ", " !! ", " ... ", " "];

/// A generated corpus: raw documents and their annotation files.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<ReviewDocument>,
    pub annotations: Vec<AnnotationFile>,
}

impl SyntheticCorpus {
    /// Aligned, validated gold documents.
    pub fn annotated(&self) -> Result<Vec<AnnotatedDocument>> {
        self.annotations
            .iter()
            .zip(&self.documents)
            .map(|(a, d)| a.clone().into_document(Some(d)))
            .collect()
    }

    /// Writes the corpus, canonical annotation files and, when given, an
    /// unlabeled pool in the project layout under `root`.
    pub fn write_project(&self, root: &Path, unlabeled: &[ReviewDocument]) -> Result<Project> {
        let project = Project::new(root);
        write_corpus(&project.corpus_path(), &self.documents)?;
        for doc in self.annotated()? {
            write_file(&project.annotation_path(doc.id()), &doc.to_canonical_json())?;
        }
        if !unlabeled.is_empty() {
            write_corpus(&project.unlabeled_path(), unlabeled)?;
        }
        Ok(project)
    }
}

#[derive(Default)]
struct Builder {
    text: String,
    chars: usize,
    entities: Vec<CharSpanAnnotation>,
    relations: Vec<FileRelation>,
}

impl Builder {
    fn push(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn entity(&mut self, s: &str, label: EntityLabel) -> usize {
        let start = self.chars;
        self.push(s);
        self.entities.push(CharSpanAnnotation {
            start,
            end: self.chars,
            label,
        });
        self.entities.len() - 1
    }

    fn relate(&mut self, aspect: usize, opinion: usize) {
        self.relations.push(FileRelation {
            head: aspect,
            tail: opinion,
            label: RELATION_LABEL.to_string(),
        });
    }

    fn finish(self, id: String) -> (ReviewDocument, AnnotationFile) {
        let doc = ReviewDocument::new(id.clone(), self.text.clone());
        let file = AnnotationFile {
            id,
            text: self.text,
            entities: self.entities,
            relations: self.relations,
        };
        (doc, file)
    }
}

/// Ten unambiguous sentences; each opinion directly precedes its aspect.
pub fn overfit_set() -> SyntheticCorpus {
    const PAIRS: &[&[(&str, &str)]] = &[
        &[("great", "camera"), ("poor", "battery")],
        &[("excellent", "screen"), ("slow", "charging")],
        &[("amazing", "sound quality")],
        &[("bad", "speaker"), ("good", "display")],
        &[("great value for money", "phone")],
        &[("cheap", "price"), ("fast", "delivery")],
        &[("poor", "screen color"), ("weak", "wifi")],
        &[("nice", "design")],
        &[("terrible", "customer service"), ("sturdy", "body")],
        &[("smooth", "performance"), ("decent", "storage")],
    ];
    let mut documents = Vec::new();
    let mut annotations = Vec::new();
    for (i, pairs) in PAIRS.iter().enumerate() {
        let mut b = Builder::default();
        for (j, (opinion, aspect)) in pairs.iter().enumerate() {
            if j > 0 {
                b.push(" and ");
            }
            let o = b.entity(opinion, EntityLabel::Opi);
            b.push(" ");
            let a = b.entity(aspect, EntityLabel::Asp);
            b.relate(a, o);
        }
        b.push(" .");
        let (doc, file) = b.finish(format!("s{:02}", i + 1));
        documents.push(doc);
        annotations.push(file);
    }
    SyntheticCorpus {
        documents,
        annotations,
    }
}

struct Noise<'a> {
    rng: &'a mut RandomSource,
}

impl Noise<'_> {
    fn pick<'s>(&mut self, items: &[&'s str]) -> &'s str {
        items[self.rng.below(0, items.len())]
    }

    fn aspect(&mut self) -> &'static str {
        if self.rng.chance(GENERIC_FRACTION) {
            return self.pick(GENERIC_ASPECTS);
        }
        self.pick(ASPECTS)
    }

    fn opinion(&mut self) -> &'static str {
        self.pick(OPINIONS)
    }

    /// Misspells some words of a phrase.
    fn words(&mut self, phrase: &str, typo_rate: f32) -> String {
        phrase
            .split(' ')
            .map(|w| self.word(w, typo_rate))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn word(&mut self, w: &str, typo_rate: f32) -> String {
        let chars: Vec<char> = w.chars().collect();
        let mut out = chars.clone();
        if chars.len() >= 4 && chars.iter().all(|c| c.is_ascii_alphabetic()) && self.rng.chance(typo_rate) {
            let i = self.rng.below(1, chars.len() - 1);
            match self.rng.below(0, 4) {
                0 => out.swap(i, i + 1),
                1 => {
                    out.remove(i);
                }
                2 => out.insert(i, chars[i]),
                _ => {
                    // stretched vowel, "goood"
                    if let Some(v) = chars.iter().rposition(|c| "aeiou".contains(*c)) {
                        out.insert(v, chars[v]);
                        out.insert(v, chars[v]);
                    } else {
                        out.swap(i, i + 1);
                    }
                }
            }
        }
        let mut s: String = out.into_iter().collect();
        if self.rng.chance(0.04) {
            s = s.to_uppercase();
        } else if self.rng.chance(0.06) {
            let mut c = s.chars();
            if let Some(first) = c.next() {
                s = first.to_uppercase().chain(c).collect();
            }
        }
        s
    }
}

/// One clause with its aspect/opinion mentions and relations.
fn clause(b: &mut Builder, noise: &mut Noise) {
    let aspect = noise.aspect();
    let opinion = noise.opinion();
    let aspect_text = noise.words(aspect, TERM_TYPOS);
    let opinion_text = noise.words(opinion, TERM_TYPOS);
    match noise.rng.below(0, 8) {
        0 | 1 => {
            let o = b.entity(&opinion_text, EntityLabel::Opi);
            b.push(" ");
            let a = b.entity(&aspect_text, EntityLabel::Asp);
            b.relate(a, o);
        }
        2 => {
            b.push(noise.pick(&["the ", "The ", "its ", ""]));
            let a = b.entity(&aspect_text, EntityLabel::Asp);
            b.push(noise.pick(&[" is ", " was ", " are ", " is really ", " seems "]));
            let o = b.entity(&opinion_text, EntityLabel::Opi);
            b.relate(a, o);
        }
        3 => {
            // no verb, as in "camera poor"
            let a = b.entity(&aspect_text, EntityLabel::Asp);
            b.push(noise.pick(&[" ", " - ", " : "]));
            let o = b.entity(&opinion_text, EntityLabel::Opi);
            b.relate(a, o);
        }
        4 => {
            let second = noise.aspect();
            let second = if second == aspect { "battery backup" } else { second };
            let second_text = noise.words(second, TERM_TYPOS);
            let o = b.entity(&opinion_text, EntityLabel::Opi);
            b.push(" ");
            let a = b.entity(&aspect_text, EntityLabel::Asp);
            b.push(noise.pick(&[" and ", " & ", ", "]));
            let a2 = b.entity(&second_text, EntityLabel::Asp);
            b.relate(a, o);
            b.relate(a2, o);
        }
        5 => {
            let other = noise.opinion();
            let other = if other == opinion { "okay" } else { other };
            let other_text = noise.words(other, TERM_TYPOS);
            let a = b.entity(&aspect_text, EntityLabel::Asp);
            b.push(noise.pick(&[" is ", " was ", " "]));
            let o = b.entity(&opinion_text, EntityLabel::Opi);
            b.push(noise.pick(&[" and ", " but ", " , "]));
            let o2 = b.entity(&other_text, EntityLabel::Opi);
            b.relate(a, o);
            b.relate(a, o2);
        }
        6 => {
            b.push(noise.pick(&["i found the ", "really ", "i think "]));
            let o = b.entity(&opinion_text, EntityLabel::Opi);
            b.push(" ");
            let a = b.entity(&aspect_text, EntityLabel::Asp);
            b.relate(a, o);
        }
        _ => {
            b.push(noise.pick(&["the ", "", "phone has "]));
            let a = b.entity(&aspect_text, EntityLabel::Asp);
            b.push(noise.pick(&[" is not ", " not ", " is "]));
            let o = b.entity(&opinion_text, EntityLabel::Opi);
            b.relate(a, o);
        }
    }
}

fn review(rng: &mut RandomSource) -> Builder {
    let mut b = Builder::default();
    let mut noise = Noise { rng };
    if noise.rng.chance(0.45) {
        let filler = noise.pick(FILLERS);
        let filler = noise.words(filler, FILLER_TYPOS);
        b.push(&filler);
        b.push(noise.pick(&[". ", ", ", " "]));
    }
    let clauses = noise.rng.below(1, 4);
    for i in 0..clauses {
        if i > 0 {
            b.push(noise.pick(CONNECTORS));
        }
        clause(&mut b, &mut noise);
    }
    if noise.rng.chance(0.4) {
        b.push(noise.pick(&[". ", " , ", " "]));
        let filler = noise.pick(FILLERS);
        let filler = noise.words(filler, FILLER_TYPOS);
        b.push(&filler);
    }
    b.push(noise.pick(&[".", "", "!", "!!", " ..", " :)"]));
    b
}


fn metadata(doc: &mut ReviewDocument, rng: &mut RandomSource) {
    doc.rating = Some(rng.below(1, 6) as u8);
    doc.date = Some(format!("2021-{:02}-{:02}", rng.below(1, 13), rng.below(1, 29)));
    doc.source = Some("synthetic".into());
}

/// `count` annotated noisy reviews with ids `r001`, `r002`, ...
pub fn noisy_reviews(count: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = RandomSource::new(seed);
    let mut documents = Vec::with_capacity(count);
    let mut annotations = Vec::with_capacity(count);
    for i in 0..count {
        let (mut doc, file) = review(&mut rng).finish(format!("r{:03}", i + 1));
        metadata(&mut doc, &mut rng);
        documents.push(doc);
        annotations.push(file);
    }
    SyntheticCorpus {
        documents,
        annotations,
    }
}

/// `count` unannotated reviews with ids `u001`, `u002`, ...
pub fn unlabeled_reviews(count: usize, seed: u64) -> Vec<ReviewDocument> {
    let mut rng = RandomSource::new(seed);
    (0..count)
        .map(|i| {
            let (mut doc, _) = review(&mut rng).finish(format!("u{:03}", i + 1));
            metadata(&mut doc, &mut rng);
            doc
        })
        .collect()
}
