//! The bundled project directories are exactly what the generator writes.

use std::path::Path;

use aoml::pipeline::Project;
use aoml::synthetic::{noisy_reviews, overfit_set, unlabeled_reviews, NOISY_COUNT, NOISY_SEED, UNLABELED_COUNT, UNLABELED_SEED};

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((name, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bundled_data_matches_the_generator() {
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let dir = tempfile::tempdir().unwrap();
    overfit_set().write_project(&dir.path().join("overfit"), &[]).unwrap();
    noisy_reviews(NOISY_COUNT, NOISY_SEED)
        .write_project(&dir.path().join("noisy"), &unlabeled_reviews(UNLABELED_COUNT, UNLABELED_SEED))
        .unwrap();
    for name in ["overfit", "noisy"] {
        let expected = files(&dir.path().join(name));
        let actual = files(&bundled.join(name));
        assert_eq!(
            actual.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            expected.iter().map(|(n, _)| n).collect::<Vec<_>>()
        );
        for ((n, a), (_, e)) in actual.iter().zip(&expected) {
            assert!(a == e, "{name}/{n} differs; rerun the synthetic_corpus example");
        }
    }
}

#[test]
fn bundled_projects_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let noisy = Project::new(root.join("noisy"));
    let gold = noisy.load_gold().unwrap();
    assert_eq!(gold.len(), NOISY_COUNT);
    assert!(gold.iter().all(|d| d.validate(true).is_ok()));
    assert_eq!(noisy.load_unlabeled().unwrap().len(), UNLABELED_COUNT);
    let overfit = Project::new(root.join("overfit")).load_gold().unwrap();
    assert_eq!(overfit.len(), 10);
}
