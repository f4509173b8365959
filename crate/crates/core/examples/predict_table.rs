//! Trains both models briefly on the overfit set and prints extracted
//! aspect/opinion pairs as a table.

use std::path::Path;

use aoml::corpus::{build_vocab, ReviewDocument};
use aoml::ner::train_ner;
use aoml::pipeline::{extraction_records, predict_document, render_table, Models, Project};
use aoml::relex::train_rel;
use aoml::training::TrainConfig;

fn main() -> aoml::Result<()> {
    let project = Project::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/overfit"));
    let gold = project.load_gold()?;
    let vocab = build_vocab(&project.load_corpus()?, 1, true)?;
    let quick = |base: TrainConfig| TrainConfig {
        epochs: 60,
        overfit: true,
        ..base
    };
    let (ner, _) = train_ner(&gold, &vocab, &quick(TrainConfig::ner()))?;
    let (rel, _) = train_rel(&gold, &vocab, &quick(TrainConfig::rel()))?;
    let models = Models::new(vocab, ner, rel)?;

    let reviews = [
        ReviewDocument::new("a", "excellent screen and slow charging ."),
        ReviewDocument::new("b", "great camera and poor battery ."),
    ];
    let predictions = reviews
        .iter()
        .map(|d| predict_document(&models, d))
        .collect::<aoml::Result<Vec<_>>>()?;
    print!("{}", render_table(&extraction_records(&predictions)));
    Ok(())
}
