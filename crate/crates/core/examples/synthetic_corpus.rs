//! Regenerates the bundled project directories:
//!
//! ```text
//! cargo run --example synthetic_corpus -- crates/core/data
//! ```

use std::path::PathBuf;

use aoml::synthetic::{noisy_reviews, overfit_set, unlabeled_reviews, NOISY_COUNT, NOISY_SEED, UNLABELED_COUNT, UNLABELED_SEED};

fn main() -> aoml::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    overfit_set().write_project(&out.join("overfit"), &[])?;
    let noisy = noisy_reviews(NOISY_COUNT, NOISY_SEED);
    noisy.write_project(&out.join("noisy"), &unlabeled_reviews(UNLABELED_COUNT, UNLABELED_SEED))?;
    for doc in noisy.documents.iter().take(5) {
        println!("{}: {}", doc.id, doc.text);
    }
    println!("wrote {}", out.display());
    Ok(())
}
