//! Checks backpropagation through a small tagger against finite
//! differences.

use aoml::encoder::EncoderConfig;
use aoml::ner::NerModel;
use aoml::neural::{grad_check, grad_check_mixed, RandomSource};

fn main() -> aoml::Result<()> {
    let config = EncoderConfig {
        vocab_size: 12,
        d_model: 8,
        n_heads: 2,
        n_layers: 2,
        d_ff: 16,
        max_len: 8,
        dropout_p: 0.0,
    };
    let ids = [3, 7, 4, 9, 5];
    let tags = [1, 2, 0, 3, 0];

    let mut model = NerModel::<f32>::new(config, 0, &mut RandomSource::new(1))?;
    let mut reference = NerModel::<f64>::new(config, 0, &mut RandomSource::new(1))?;
    let report = grad_check_mixed(
        &mut model,
        |m, backprop| m.loss(&ids, &tags, None, backprop),
        &mut reference,
        |m, backprop| m.loss(&ids, &tags, None, backprop),
        1e-2,
    )?;
    println!(
        "f32 backward: {} entries, max relative error {:.2e} at {:?}",
        report.entries_checked, report.max_relative_error, report.worst
    );

    let report = grad_check(&mut reference, |m, backprop| m.loss(&ids, &tags, None, backprop), 1e-5)?;
    println!("f64 backward: max relative error {:.2e}, passed {}", report.max_relative_error, report.passed());
    Ok(())
}
