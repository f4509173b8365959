//! Trains the ASP-OPI pair scorer on the overfit set, then scores every
//! ordered pair of gold mentions in one review.

use std::path::Path;

use aoml::corpus::{build_vocab, tokenize};
use aoml::pipeline::Project;
use aoml::relex::{predict_rel, train_rel, DEFAULT_THRESHOLD};
use aoml::training::TrainConfig;

fn main() -> aoml::Result<()> {
    let project = Project::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/overfit"));
    let gold = project.load_gold()?;
    let vocab = build_vocab(&project.load_corpus()?, 1, true)?;
    let config = TrainConfig {
        epochs: 80,
        overfit: true,
        ..TrainConfig::rel()
    };
    let (model, curve) = train_rel(&gold, &vocab, &config)?;
    println!("best relation F1 {:.4} over {} epochs", curve.max_f1(), curve.len());

    let doc = &gold[0];
    let tokens = tokenize(&doc.document.text);
    for r in predict_rel(&model, &vocab, &tokens, &doc.mentions, DEFAULT_THRESHOLD)? {
        println!(
            "{} -> {}  {}%",
            r.head.surface(&doc.document.text, &tokens),
            r.tail.surface(&doc.document.text, &tokens),
            r.percent()
        );
    }
    Ok(())
}
