//! Standing property tests over the data model, metrics and numeric core.

use std::collections::BTreeMap;

use aoml::annotate::{EntityLabel, EntityMention};
use aoml::checkpoint::Checkpoint;
use aoml::corpus::{build_vocab, tokenize, ReviewDocument, UNK_ID};
use aoml::encoder::EncoderConfig;
use aoml::metrics::{rel_prf, span_prf, RelationKey};
use aoml::ner::NerModel;
use aoml::neural::{Module, RandomSource};
use proptest::prelude::*;

fn review_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            "[a-zA-Z]{1,8}",
            "[0-9]{1,4}",
            "[.,!?()]{1,2}",
            "[a-z]{1,5}[.,!]{1,2}",
            "[éüñ]{1,3}",
        ],
        0..12,
    )
    .prop_flat_map(|words| {
        let n = words.len();
        (Just(words), prop::collection::vec(prop_oneof![Just(" "), Just("  "), Just("\t"), Just("\n")], n))
    })
    .prop_map(|(words, gaps)| words.iter().zip(gaps).map(|(w, g)| format!("{w}{g}")).collect())
}

fn mention() -> impl Strategy<Value = EntityMention> + Clone {
    (0usize..5, 1usize..3, any::<bool>())
        .prop_map(|(s, l, asp)| EntityMention::new(s, s + l, if asp { EntityLabel::Asp } else { EntityLabel::Opi }))
}

type Docs<T> = BTreeMap<String, Vec<T>>;

fn paired<T: std::fmt::Debug + Clone + 'static>(
    item: impl Strategy<Value = T> + Clone + 'static,
) -> impl Strategy<Value = (Docs<T>, Docs<T>)> {
    prop::collection::vec((prop::collection::vec(item.clone(), 0..4), prop::collection::vec(item, 0..4)), 1..6)
        .prop_map(|docs| {
            let (mut gold, mut pred) = (BTreeMap::new(), BTreeMap::new());
            for (i, (g, p)) in docs.into_iter().enumerate() {
                gold.insert(format!("doc{i:02}"), g);
                pred.insert(format!("doc{i:02}"), p);
            }
            (gold, pred)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tokens_slice_the_text(text in review_text()) {
        let chars: Vec<char> = text.chars().collect();
        let tokens = tokenize(&text);
        let mut last_end = 0;
        for t in &tokens {
            prop_assert!(t.start < t.end);
            prop_assert!(t.start >= last_end);
            prop_assert_eq!(chars[t.start..t.end].iter().collect::<String>(), t.surface.clone());
            prop_assert!(!t.surface.chars().any(char::is_whitespace));
            last_end = t.end;
        }
        // Everything between tokens is whitespace.
        let covered: usize = tokens.iter().map(|t| t.end - t.start).sum();
        let non_space = chars.iter().filter(|c| !c.is_whitespace()).count();
        prop_assert_eq!(covered, non_space);
    }

    #[test]
    fn vocabulary_ids_are_contiguous(texts in prop::collection::vec(review_text(), 1..6), min_frequency in 1usize..3) {
        let docs: Vec<ReviewDocument> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| ReviewDocument::new(format!("d{i}"), format!("{t} x")))
            .collect();
        let vocab = build_vocab(&docs, min_frequency, true).unwrap();
        let mut ids: Vec<usize> = vocab.entries().map(|(_, id)| id).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (3..vocab.len()).collect::<Vec<_>>());
        prop_assert_eq!(vocab.lookup("\u{2603}never-seen"), UNK_ID);
        for (surface, id) in vocab.entries() {
            prop_assert_eq!(vocab.lookup(surface), id);
        }
    }

    #[test]
    fn f1_is_symmetric_in_gold_and_predicted((gold, pred) in paired(mention())) {
        let forward = span_prf(&gold, &pred).unwrap();
        let backward = span_prf(&pred, &gold).unwrap();
        prop_assert_eq!(forward.precision, backward.recall);
        prop_assert_eq!(forward.recall, backward.precision);
        prop_assert!((forward.f1 - backward.f1).abs() < 1e-12);
    }

    #[test]
    fn scores_ignore_document_order((gold, pred) in paired((mention(), mention()).prop_map(|(h, t)| RelationKey::new(&h, &t))), shift in 0usize..6) {
        // Renaming ids permutes the documents' sort order.
        let n = gold.len();
        let rename = |m: &Docs<RelationKey>| -> Docs<RelationKey> {
            m.iter()
                .enumerate()
                .map(|(i, (_, v))| (format!("doc{:02}", (i + shift) % n), v.clone()))
                .collect()
        };
        prop_assert_eq!(rel_prf(&gold, &pred).unwrap(), rel_prf(&rename(&gold), &rename(&pred)).unwrap());
        let s = rel_prf(&gold, &pred).unwrap();
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in any::<u64>(), d in 1usize..3, layers in 1usize..3) {
        let config = EncoderConfig {
            vocab_size: 10,
            d_model: 4 * d,
            n_heads: 2,
            n_layers: layers,
            d_ff: 6,
            max_len: 5,
            dropout_p: 0.1,
        };
        let model = NerModel::<f32>::new(config, seed, &mut RandomSource::new(seed)).unwrap();
        let bytes = model.to_checkpoint().unwrap().to_bytes();
        let restored = NerModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        prop_assert_eq!(restored.to_checkpoint().unwrap().to_bytes(), bytes);
        for (a, b) in model.parameters().iter().zip(restored.parameters()) {
            prop_assert!(a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn same_seed_same_draws(seed in any::<u64>()) {
        let (mut a, mut b) = (RandomSource::new(seed), RandomSource::new(seed));
        for _ in 0..20 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            prop_assert_eq!(a.below(0, 1000), b.below(0, 1000));
        }
    }

    #[test]
    fn losses_and_gradients_stay_finite(seed in any::<u64>(), ids in prop::collection::vec(0usize..12, 1..8)) {
        let config = EncoderConfig {
            vocab_size: 12,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 8,
            max_len: 8,
            dropout_p: 0.1,
        };
        let mut rng = RandomSource::new(seed);
        let mut model = NerModel::<f32>::new(config, 0, &mut rng).unwrap();
        let tags: Vec<usize> = ids.iter().map(|i| i % 5).collect();
        let loss = model.loss(&ids, &tags, Some(&mut rng), true).unwrap();
        prop_assert!(loss.is_finite());
        prop_assert!(model.parameters().iter().all(|p| p.grad.is_finite()));
    }
}
