//! Exact-match precision, recall and F1 over spans and relations.

use std::collections::BTreeMap;

use aoml::annotate::{EntityLabel, EntityMention};
use aoml::metrics::{rel_prf, span_prf, RelationKey};

fn main() -> aoml::Result<()> {
    let battery = EntityMention::new(0, 2, EntityLabel::Asp);
    let good = EntityMention::new(3, 4, EntityLabel::Opi);
    let camera = EntityMention::new(5, 6, EntityLabel::Asp);

    let gold = BTreeMap::from([("r1".to_string(), vec![battery, good, camera])]);
    // One boundary error: "life" alone does not match "battery life".
    let predicted = BTreeMap::from([(
        "r1".to_string(),
        vec![EntityMention::new(1, 2, EntityLabel::Asp), good, camera],
    )]);
    let s = span_prf(&gold, &predicted)?;
    println!("spans:     P {:.4} R {:.4} F1 {:.4} ({} of {})", s.precision, s.recall, s.f1, s.true_positives, s.gold_count);

    let gold_rel = BTreeMap::from([("r1".to_string(), vec![RelationKey::new(&battery, &good)])]);
    let reversed = BTreeMap::from([("r1".to_string(), vec![RelationKey::new(&good, &battery)])]);
    let s = rel_prf(&gold_rel, &reversed)?;
    println!("relations: P {:.4} R {:.4} F1 {:.4} (direction matters)", s.precision, s.recall, s.f1);

    let empty: BTreeMap<String, Vec<RelationKey>> = BTreeMap::from([("r1".to_string(), vec![])]);
    println!("both empty: F1 {:.1}", rel_prf(&empty, &empty)?.f1);
    Ok(())
}
