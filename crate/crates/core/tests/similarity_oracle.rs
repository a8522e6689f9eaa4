//! Edit distance and similarity checked against a full-matrix DP oracle.

#![allow(clippy::needless_range_loop)]

use medforge_core::similarity::{levenshtein, levenshtein_within, similarity, similarity_above, Similarity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook Wagner-Fischer over the full (m+1)x(n+1) table.
fn oracle_distance(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + cost);
        }
    }
    t[a.len()][b.len()]
}

fn oracle_similarity(a: &str, b: &str) -> (usize, usize) {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    (oracle_distance(&a, &b), a.len() + b.len())
}

const ALPHABET: &[char] = &['a', 'b', 'c', 'x', '头', '痛', '咳', '嗽', '药', ' '];

fn random_string(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..=50);
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

#[test]
fn frozen_examples() {
    assert_eq!(oracle_similarity("cough", "coughs"), (1, 11));
    assert_eq!(oracle_similarity("abc", "xyz"), (3, 6));
    assert_eq!(oracle_similarity("paracetamoll", "paracetamol"), (1, 23));
    let s = similarity("cough", "coughs");
    assert_eq!((s.distance(), s.total()), (1, 11));
    assert_eq!(similarity("abc", "xyz").score(), 0.5);
}

#[test]
fn seeded_pairs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let a = random_string(&mut rng);
        let b = random_string(&mut rng);
        let (d, total) = oracle_similarity(&a, &b);
        let s = similarity(&a, &b);
        assert_eq!((s.distance(), s.total()), (d, total), "{:?} vs {:?}", a, b);
    }
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(ALPHABET.to_vec()), 0..30).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #[test]
    fn symmetric(a in text(), b in text()) {
        prop_assert_eq!(similarity(&a, &b).distance(), similarity(&b, &a).distance());
    }

    #[test]
    fn self_similarity_is_one(a in text()) {
        prop_assert_eq!(similarity(&a, &a).score(), 1.0);
    }

    #[test]
    fn banded_agrees_with_full(a in text(), b in text(), max in 0usize..40) {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let d = levenshtein(&a, &b);
        prop_assert_eq!(levenshtein_within(&a, &b, max), (d <= max).then_some(d));
    }

    #[test]
    fn threshold_scan_agrees(a in text(), b in text(), fd in 0usize..10, ft in 1usize..20) {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let floor = Similarity::from_distance(fd.min(ft), ft);
        let full = Similarity::from_distance(oracle_distance(&a, &b), a.len() + b.len());
        let got = similarity_above(&a, &b, floor);
        if full > floor {
            prop_assert_eq!(got.map(|s| s.distance()), Some(full.distance()));
        } else {
            prop_assert!(got.is_none());
        }
    }

    #[test]
    fn score_in_unit_interval(a in text(), b in text()) {
        let s = similarity(&a, &b).score();
        prop_assert!((0.0..=1.0).contains(&s));
    }
}
