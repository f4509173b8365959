//! One round of confidence-gated pseudo-labeling on the noisy set.

use std::collections::BTreeSet;
use std::path::Path;

use aoml::corpus::build_vocab;
use aoml::ner::train_ner;
use aoml::pipeline::{self_train, Models, Project, SelfTrainConfig};
use aoml::relex::train_rel;
use aoml::training::TrainConfig;

fn main() -> aoml::Result<()> {
    let project = Project::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/noisy"));
    let gold = project.load_gold()?;
    let pool = project.load_unlabeled()?;
    let mut texts = project.load_corpus()?;
    texts.extend(pool.iter().cloned());
    let vocab = build_vocab(&texts, 1, true)?;
    let short = |base: TrainConfig| TrainConfig { epochs: 20, ..base };
    let (ner, _) = train_ner(&gold, &vocab, &short(TrainConfig::ner()))?;
    let (rel, _) = train_rel(&gold, &vocab, &short(TrainConfig::rel()))?;

    let config = SelfTrainConfig {
        tau_ner: 0.8,
        tau_rel: 0.8,
        ..SelfTrainConfig::default()
    };
    let outcome = self_train(
        Models::new(vocab, ner, rel)?,
        &gold,
        &pool,
        &config,
        &short(TrainConfig::ner()),
        &short(TrainConfig::rel()),
        &BTreeSet::new(),
    )?;
    println!("adopted {} of {} unlabeled reviews", outcome.audit.len(), pool.len());
    for e in outcome.audit.iter().take(5) {
        println!("  {} mean confidence {:.3}, relations {:?}", e.doc_id, e.mean_confidence, e.relation_probabilities);
    }
    Ok(())
}
