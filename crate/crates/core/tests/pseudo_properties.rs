//! Pseudo labeling checked against a brute-force scan.

#![allow(clippy::needless_range_loop)]

use medforge_core::pseudo::{max_similarity, pseudo_label, PoolEntry, PseudoConfig};
use medforge_core::rules::RuleSet;
use medforge_core::{Corpus, Dialogue, Provenance, SemanticLabel, Service, Speaker, Turn, Vocabulary};
use proptest::prelude::*;

fn brute_distance(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        t[i][0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let c = usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + c);
        }
    }
    t[a.len()][b.len()]
}

/// Unpruned scan: exact rational comparison, first occurrence wins ties,
/// starting from similarity 0 with no labels.
fn brute_max(query: &[char], pool: &[PoolEntry]) -> (u128, u128, Option<usize>) {
    let (mut num, mut den, mut best) = (0u128, 1u128, None);
    for (i, e) in pool.iter().enumerate() {
        let total = query.len() + e.chars.len();
        let (n, d) = if total == 0 {
            (1, 1)
        } else {
            ((total - brute_distance(query, &e.chars)) as u128, total as u128)
        };
        if n * den > num * d {
            num = n;
            den = d;
            best = Some(i);
        }
    }
    (num, den, best)
}

fn word() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', '头', '痛']), 0..12)
        .prop_map(|v| v.into_iter().collect())
}

fn pool(max: usize) -> impl Strategy<Value = Vec<PoolEntry>> {
    prop::collection::vec(word(), 0..max).prop_map(|texts| {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                PoolEntry::new(Speaker::Patient, t, vec![SemanticLabel::intent(format!("L{}", i))])
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn max_similarity_matches_brute_force(q in word(), p in pool(100)) {
        let query: Vec<char> = q.chars().collect();
        let (eta, labels) = max_similarity(&query, &p);
        let (num, den, best) = brute_max(&query, &p);
        let (n, d) = if eta.total() == 0 { (1, 1) } else { ((eta.total() - eta.distance()) as u128, eta.total() as u128) };
        prop_assert_eq!(n * den, num * d);
        prop_assert_eq!(labels.map(|l| l[0].label.clone()), best.map(|i| format!("L{}", i)));
    }

    #[test]
    fn enlarging_pool_never_lowers_eta(q in word(), a in pool(30), b in pool(30)) {
        let query: Vec<char> = q.chars().collect();
        let (small, _) = max_similarity(&query, &a);
        let mut both = a.clone();
        both.extend(b);
        let (large, _) = max_similarity(&query, &both);
        prop_assert!(large >= small);
    }
}

fn human_pool() -> Corpus {
    let mut d = Dialogue::new("p");
    d.provenance = Provenance::HumanLabeled;
    d.services.insert(Service::Diagnosis);
    d.turns = vec![
        Turn::patient("我头痛三天了").with_labels(vec![SemanticLabel::intent("Informing")
            .with_slot("Symptom")
            .with_value("头痛")]),
        Turn::doctor("建议口服布洛芬").with_labels(vec![SemanticLabel::action("Recommendation")
            .with_slot("Medicine")
            .with_value("布洛芬")]),
    ];
    Corpus::new(vec![d])
}

#[test]
fn verbatim_pool_utterances_copy_labels_exactly() {
    let pool = human_pool();
    let mut u = Dialogue::new("u");
    u.turns = vec![Turn::patient("我头痛三天了"), Turn::doctor("建议口服布洛芬")];
    let rules = RuleSet::from_json("[]", &Vocabulary::default()).unwrap();
    let (out, tally) = pseudo_label(&Corpus::new(vec![u]), &pool, &rules, &PseudoConfig::default()).unwrap();
    assert_eq!(tally.transferred, 2);
    for (a, b) in out.dialogues[0].turns.iter().zip(&pool.dialogues[0].turns) {
        assert_eq!(a.labels, b.labels);
    }
    assert!(out.dialogues.iter().all(|d| d.provenance == Provenance::PseudoLabeled));
}

#[test]
fn deterministic_and_every_turn_labeled() {
    let pool = human_pool();
    let rules = RuleSet::from_json("[]", &Vocabulary::default()).unwrap();
    let mut dialogues = Vec::new();
    for i in 0..10 {
        let mut u = Dialogue::new(format!("u{}", i));
        u.turns = vec![Turn::patient(format!("第{}天还是头痛", i)), Turn::doctor("多休息")];
        dialogues.push(u);
    }
    let unlabeled = Corpus::new(dialogues);
    let first = pseudo_label(&unlabeled, &pool, &rules, &PseudoConfig::default()).unwrap();
    for _ in 0..3 {
        assert_eq!(pseudo_label(&unlabeled, &pool, &rules, &PseudoConfig::default()).unwrap(), first);
    }
    assert!(first.0.turns().all(|t| !t.labels.is_empty()));
}
