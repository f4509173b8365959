//! Pretrains the encoder with masked-token prediction on the bundled
//! review pool.

use std::path::Path;

use aoml::corpus::build_vocab;
use aoml::pipeline::Project;
use aoml::pretrain::{mlm_pretrain, PretrainConfig};

fn main() -> aoml::Result<()> {
    let project = Project::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/noisy"));
    let mut docs = project.load_corpus()?;
    docs.extend(project.load_unlabeled()?);
    let vocab = build_vocab(&docs, 1, true)?;
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let config = PretrainConfig {
        epochs,
        ..PretrainConfig::default()
    };
    let (model, losses) = mlm_pretrain(&docs, &vocab, &config)?;
    for (epoch, loss) in losses.iter().enumerate() {
        println!("epoch {epoch:>3}  masked-token loss {loss:.4}");
    }
    let out = std::env::temp_dir().join("aoml-example-mlm.aoml");
    model.save(&out)?;
    println!("saved {}", out.display());
    Ok(())
}
