//! Trains the aspect/opinion tagger on the bundled noisy reviews and
//! prints the validation curve.

use std::path::Path;

use aoml::corpus::build_vocab;
use aoml::ner::{predict_ner, train_ner};
use aoml::pipeline::Project;
use aoml::training::TrainConfig;

fn main() -> aoml::Result<()> {
    let project = Project::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/noisy"));
    let gold = project.load_gold()?;
    let vocab = build_vocab(&project.load_corpus()?, 1, true)?;
    let config = TrainConfig {
        epochs: std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30),
        ..TrainConfig::ner()
    };
    let (model, curve) = train_ner(&gold, &vocab, &config)?;
    for r in curve.records.iter().step_by(5) {
        println!("epoch {:>3}  loss {:.4}/{:.4}  P {:.3} R {:.3} F1 {:.3}", r.epoch, r.train_loss, r.val_loss, r.precision, r.recall, r.f1);
    }
    let best = curve.best_epoch().expect("at least one epoch");
    println!("best epoch {} F1 {:.4}", best.epoch, best.f1);

    let text = "battery backup is very good but camera quality poor";
    let tokens = aoml::corpus::tokenize(text);
    for m in predict_ner(&model, &vocab, &tokens)? {
        println!("{} `{}` ({:.2})", m.label, m.surface(text, &tokens), m.confidence.unwrap_or(0.0));
    }
    Ok(())
}
