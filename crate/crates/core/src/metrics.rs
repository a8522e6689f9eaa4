//! Automatic metrics. Every score is a percentage in `[0, 100]`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::Error;

/// Stand-in precision for an n-gram order without any match, so the
/// geometric mean stays defined.
pub const BLEU_EPSILON: f64 = 1e-9;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x2E80..=0x2FDF      // radicals
        | 0x3000..=0x303F    // CJK symbols and punctuation
        | 0x3040..=0x30FF    // kana
        | 0x3100..=0x31BF    // bopomofo
        | 0x31F0..=0x9FFF    // kana ext, enclosed, ext A, unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0xFE30..=0xFE4F    // compatibility forms
        | 0xFF00..=0xFFEF    // fullwidth forms
        | 0x20000..=0x3134F) // ext B onwards
}

/// One token per CJK character; other text splits on whitespace, with CJK
/// characters also acting as separators.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if is_cjk(c) || c.is_whitespace() {
            if !run.is_empty() {
                out.push(core::mem::take(&mut run));
            }
            if is_cjk(c) {
                out.push(c.to_string());
            }
        } else {
            run.push(c);
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
    out
}

fn check_aligned(a: usize, b: usize) -> Result<(), Error> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Alignment(format!("{} gold entries but {} predictions", a, b)))
    }
}

fn percent(x: f64) -> f64 {
    (x * 100.0).clamp(0.0, 100.0)
}

/// Pooled true-positive, false-positive and false-negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// `2PR / (P + R)` as a percentage, 0 when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            percent(2.0 * p * r / (p + r))
        }
    }

    fn add_turn<K: Ord>(&mut self, gold: &BTreeSet<K>, pred: &BTreeSet<K>) {
        let tp = gold.intersection(pred).count() as u64;
        self.tp += tp;
        self.fp += pred.len() as u64 - tp;
        self.fn_ += gold.len() as u64 - tp;
    }
}

/// Counts pooled over all turns, ignoring categories.
pub fn pooled_counts<K: Ord>(gold: &[BTreeSet<K>], pred: &[BTreeSet<K>]) -> Result<Counts, Error> {
    check_aligned(gold.len(), pred.len())?;
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.add_turn(g, p);
    }
    Ok(c)
}

pub fn micro_f1<K: Ord>(gold: &[BTreeSet<K>], pred: &[BTreeSet<K>]) -> Result<f64, Error> {
    Ok(pooled_counts(gold, pred)?.f1())
}

/// Per-category counts (each item is its own category) and the number of
/// gold items per category.
pub fn category_counts<K: Ord + Clone>(
    gold: &[BTreeSet<K>],
    pred: &[BTreeSet<K>],
) -> Result<BTreeMap<K, (Counts, u64)>, Error> {
    check_aligned(gold.len(), pred.len())?;
    let mut by_cat: BTreeMap<K, (Counts, u64)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        for k in g {
            let e = by_cat.entry(k.clone()).or_default();
            e.1 += 1;
            if p.contains(k) {
                e.0.tp += 1;
            } else {
                e.0.fn_ += 1;
            }
        }
        for k in p.difference(g) {
            by_cat.entry(k.clone()).or_default().0.fp += 1;
        }
    }
    Ok(by_cat)
}

/// Per-category F1 averaged with weights equal to each category's share of
/// gold items. Categories seen only in predictions weigh nothing.
pub fn macro_f1<K: Ord + Clone>(gold: &[BTreeSet<K>], pred: &[BTreeSet<K>]) -> Result<f64, Error> {
    let by_cat = category_counts(gold, pred)?;
    let total: u64 = by_cat.values().map(|(_, n)| n).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let weighted: f64 = by_cat.values().map(|(c, n)| c.f1() * *n as f64).sum();
    Ok((weighted / total as f64).clamp(0.0, 100.0))
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], u64> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Corpus BLEU with clipped n-gram precision and brevity penalty.
///
/// Orders above 1 for which no hypothesis has any n-gram are left out of the
/// geometric mean; orders with n-grams but no match use [`BLEU_EPSILON`]. An
/// empty hypothesis side scores 0.
pub fn bleu(refs: &[Vec<String>], hyps: &[Vec<String>], max_n: usize) -> Result<f64, Error> {
    check_aligned(refs.len(), hyps.len())?;
    if max_n == 0 {
        return Err(Error::InvalidConfig("BLEU order must be at least 1".to_string()));
    }
    let mut matched = alloc::vec![0u64; max_n];
    let mut total = alloc::vec![0u64; max_n];
    let (mut hyp_len, mut ref_len) = (0u64, 0u64);
    for (r, h) in refs.iter().zip(hyps) {
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=max_n {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (gram, count) in &hc {
                total[n - 1] += count;
                matched[n - 1] += (*count).min(rc.get(gram).copied().unwrap_or(0));
            }
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0u32;
    for n in 0..max_n {
        if total[n] == 0 {
            continue;
        }
        let p = if matched[n] == 0 {
            BLEU_EPSILON
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_sum += libm::log(p);
        orders += 1;
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / hyp_len as f64)
    };
    Ok(percent(bp * libm::exp(log_sum / f64::from(orders))))
}

/// Clipped unigram overlap, hypothesis total and reference total, pooled.
fn unigram_overlap(refs: &[Vec<String>], hyps: &[Vec<String>]) -> Result<(u64, u64, u64), Error> {
    check_aligned(refs.len(), hyps.len())?;
    let (mut overlap, mut hyp_total, mut ref_total) = (0u64, 0u64, 0u64);
    for (r, h) in refs.iter().zip(hyps) {
        if r.is_empty() {
            continue;
        }
        let rc = ngram_counts(r, 1);
        for (gram, count) in ngram_counts(h, 1) {
            overlap += count.min(rc.get(gram).copied().unwrap_or(0));
        }
        hyp_total += h.len() as u64;
        ref_total += r.len() as u64;
    }
    Ok((overlap, hyp_total, ref_total))
}

/// Unigram recall. Pairs with an empty reference are skipped.
pub fn rouge1(refs: &[Vec<String>], hyps: &[Vec<String>]) -> Result<f64, Error> {
    let (overlap, _, ref_total) = unigram_overlap(refs, hyps)?;
    if ref_total == 0 {
        return Ok(0.0);
    }
    Ok(percent(overlap as f64 / ref_total as f64))
}

/// Harmonic mean of pooled unigram precision and recall.
pub fn meteor(refs: &[Vec<String>], hyps: &[Vec<String>]) -> Result<f64, Error> {
    let (overlap, hyp_total, ref_total) = unigram_overlap(refs, hyps)?;
    if overlap == 0 {
        return Ok(0.0);
    }
    let p = overlap as f64 / hyp_total as f64;
    let r = overlap as f64 / ref_total as f64;
    Ok(percent(2.0 * p * r / (p + r)))
}

/// `0.5 · micro_f1 + 0.5 · bleu`.
pub fn combination(micro_f1: f64, bleu: f64) -> Result<f64, Error> {
    for (name, v) in [("micro_f1", micro_f1), ("bleu", bleu)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::InvalidConfig(format!("{} must be in [0, 100], got {}", name, v)));
        }
    }
    Ok(0.5 * micro_f1 + 0.5 * bleu)
}
