//! Saves a tagger, reloads it, and shows the file layout.

use aoml::checkpoint::Checkpoint;
use aoml::encoder::EncoderConfig;
use aoml::ner::NerModel;
use aoml::neural::RandomSource;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = EncoderConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        ..EncoderConfig::new(50)
    };
    let model = NerModel::<f32>::new(config, 0xfeed, &mut RandomSource::new(3))?;
    let path = std::env::temp_dir().join("aoml-example-ner.aoml");
    model.save(&path)?;

    let reloaded = NerModel::load(&path)?;
    assert_eq!(reloaded, model);

    let bytes = std::fs::read(&path)?;
    let ck = Checkpoint::from_bytes(&bytes)?;
    println!("{} bytes, role {}, config {}", bytes.len(), ck.role, ck.config);
    for t in ck.tensors.iter().take(4) {
        println!("  {} {}x{}", t.name, t.value.rows(), t.value.cols());
    }
    println!("  ... {} tensors", ck.tensors.len());
    Ok(())
}
