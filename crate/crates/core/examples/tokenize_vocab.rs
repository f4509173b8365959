//! Tokenizes review text and builds a vocabulary from it.

use aoml::corpus::{build_vocab, tokenize, ReviewDocument};

fn main() -> aoml::Result<()> {
    let docs = [
        ReviewDocument::new("r1", "Poor screen color, poor camera, wifi also only 2"),
        ReviewDocument::new("r2", "great value!! battery lasts 2 days"),
    ];
    for doc in &docs {
        let tokens = tokenize(&doc.text);
        let shown: Vec<String> = tokens.iter().map(|t| format!("{}[{}..{}]", t.surface, t.start, t.end)).collect();
        println!("{}: {}", doc.id, shown.join(" "));
    }
    let vocab = build_vocab(&docs, 1, true)?;
    println!("{} entries (3 reserved)", vocab.len());
    let ids = vocab.encode(&tokenize("poor battery, unseen-word"));
    println!("encoded: {ids:?}");
    Ok(())
}
