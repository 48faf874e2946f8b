use pps_core::dictionary::Dictionary;
use pps_core::{detect, naive_scan, Category, Detector};
use pps_testkit as kit;
use proptest::prelude::*;

fn synthetic(size: usize) -> Dictionary {
    Dictionary {
        fingerprints: kit::synthetic_dictionary(size),
        version: 3,
        loaded_from: "synthetic".into(),
    }
}

#[test]
fn tortured_plus_scigen_doc_triggers_both() {
    let dict = Dictionary::seed();
    let doc = "Our fake neural organization converges. Though many skeptics said it couldn\u{2019}t be done, it did.";
    let report = detect("p", doc, &dict).unwrap();
    let active: Vec<_> = dict.active().cloned().collect();
    assert_eq!(report.hits, naive_scan(&active, doc));
    assert_eq!(
        report.categories_triggered.into_iter().collect::<Vec<_>>(),
        vec![Category::Scigen, Category::Tortured]
    );
}

#[test]
fn planted_corpus_recall_and_precision() {
    let dict = synthetic(300);
    let detector = Detector::new(&dict).unwrap();
    let docs = kit::planted_corpus(&mut kit::rng(4), &dict.fingerprints, 300, 30, 150);
    for doc in &docs {
        let report = detector.detect(&doc.id, &doc.text);
        for id in &doc.planted {
            assert!(
                report.hits.iter().any(|h| &h.fingerprint_id == id),
                "{} missed {id}",
                doc.id
            );
        }
        if doc.planted.is_empty() {
            assert!(report.hits.is_empty(), "{} false positive", doc.id);
        }
        assert_eq!(report.dictionary_version, 3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recall_of_inserted_pattern(seed in any::<u64>(), which in 0usize..300, at in 0usize..200) {
        let dict = synthetic(300);
        let mut rng = kit::rng(seed);
        let base = kit::clean_text(&mut rng, 200);
        let words: Vec<&str> = base.split(' ').collect();
        let at = at.min(words.len());
        let fp = &dict.fingerprints[which];
        let doc = format!("{} {} {}", words[..at].join(" "), fp.pattern, words[at..].join(" "));
        let report = detect("p", &doc, &dict).unwrap();
        prop_assert!(report.hits.iter().any(|h| h.fingerprint_id == fp.id));
    }

    #[test]
    fn precision_on_disjoint_vocabulary(seed in any::<u64>()) {
        let dict = synthetic(300);
        let doc = kit::clean_text(&mut kit::rng(seed), 400);
        prop_assert!(detect("p", &doc, &dict).unwrap().hits.is_empty());
    }

    #[test]
    fn adding_a_fingerprint_never_removes_hits(seed in any::<u64>()) {
        let mut dict = synthetic(20);
        let docs = kit::planted_corpus(&mut kit::rng(seed), &dict.fingerprints, 5, 5, 40);
        let before: Vec<_> = docs.iter().map(|d| detect(&d.id, &d.text, &dict).unwrap()).collect();
        dict.fingerprints.push(kit::fingerprint("extra", "ka lo", Category::Sbir));
        for (doc, old) in docs.iter().zip(before) {
            let new = detect(&doc.id, &doc.text, &dict).unwrap();
            for h in old.hits {
                prop_assert!(new.hits.contains(&h));
            }
        }
    }
}
