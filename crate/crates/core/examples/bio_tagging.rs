//! Encodes mentions as BIO tags and decodes ill-formed tag sequences.

use aoml::annotate::{decode_bio, encode_bio, BioTag, EntityLabel, EntityMention};

fn main() -> aoml::Result<()> {
    let mentions = [
        EntityMention::new(0, 2, EntityLabel::Asp),
        EntityMention::new(3, 4, EntityLabel::Opi),
    ];
    let tags = encode_bio(&mentions, 5)?;
    println!("{}", tags.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" "));
    assert_eq!(decode_bio(&tags), mentions);

    // A stray I- opens a new mention.
    let noisy = [BioTag::IOpi, BioTag::O, BioTag::BAsp, BioTag::IOpi];
    for m in decode_bio(&noisy) {
        println!("{} [{}, {})", m.label, m.token_start, m.token_end);
    }
    Ok(())
}
