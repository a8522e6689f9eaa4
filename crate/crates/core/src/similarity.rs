//! Levenshtein edit distance over Unicode scalar values and the normalized
//! similarity `1 - d(a, b) / (|a| + |b|)` used for label transfer and
//! entity standardization.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// Unit-cost insert/delete/substitute distance.
///
/// Two-row DP over the shorter string, `O(|a|·|b|)` time.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0usize; short.len() + 1];
    for (i, &lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Edit distance if it is at most `max`, otherwise `None`.
///
/// Only cells within the diagonal band `|i - j| <= max` are filled and the
/// scan stops as soon as a whole row exceeds `max`.
pub fn levenshtein_within(a: &[char], b: &[char], max: usize) -> Option<usize> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if long.len() - short.len() > max {
        return None;
    }
    if short.is_empty() {
        return Some(long.len());
    }
    const INF: usize = usize::MAX / 2;
    let width = short.len() + 1;
    let mut prev: Vec<usize> = (0..width).map(|j| if j <= max { j } else { INF }).collect();
    let mut cur = vec![INF; width];
    for i in 1..=long.len() {
        let lo = i.saturating_sub(max).max(1);
        let hi = (i + max).min(short.len());
        cur[0] = if i <= max { i } else { INF };
        if lo > 1 {
            cur[lo - 1] = INF;
        }
        let mut row_min = cur[0];
        for j in lo..=hi {
            let sub = prev[j - 1] + usize::from(long[i - 1] != short[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if hi < short.len() {
            cur[hi + 1] = INF;
        }
        if row_min > max {
            return None;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[short.len()];
    (d <= max).then_some(d)
}

/// A similarity score held as the exact ratio `(total - distance) / total`.
///
/// `total` is the summed length of both strings; two empty strings compare as
/// identical (score 1).
#[derive(Debug, Clone, Copy)]
pub struct Similarity {
    distance: usize,
    total: usize,
}

impl Similarity {
    pub const ZERO: Similarity = Similarity {
        distance: 1,
        total: 1,
    };
    pub const ONE: Similarity = Similarity {
        distance: 0,
        total: 0,
    };

    pub fn from_distance(distance: usize, total: usize) -> Self {
        debug_assert!(distance <= total);
        Similarity { distance, total }
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn ratio(&self) -> (u128, u128) {
        if self.total == 0 {
            (1, 1)
        } else {
            ((self.total - self.distance) as u128, self.total as u128)
        }
    }

    /// The score as a float, computed as a single correctly rounded division
    /// so that e.g. 4/5 equals the literal `0.8`.
    pub fn score(&self) -> f64 {
        let (n, d) = self.ratio();
        n as f64 / d as f64
    }

    /// Strict `score > threshold`.
    pub fn exceeds(&self, threshold: f64) -> bool {
        self.score() > threshold
    }

    /// Upper bound on the similarity of any two strings with these lengths.
    pub fn ceiling(len_a: usize, len_b: usize) -> Similarity {
        Similarity::from_distance(len_a.abs_diff(len_b), len_a + len_b)
    }

    /// Largest edit distance a pair with summed length `total` may have while
    /// still scoring strictly above `self`. `None` if no distance qualifies.
    pub fn max_distance_to_beat(&self, total: usize) -> Option<usize> {
        if total == 0 {
            // Both empty scores 1, which beats anything below 1.
            return (*self < Similarity::ONE).then_some(0);
        }
        // (total - d) / total > n / m  <=>  d * m < total * (m - n)
        let (n, m) = self.ratio();
        let bound = total as u128 * (m - n);
        if bound == 0 {
            return None;
        }
        Some(((bound - 1) / m) as usize)
    }
}

impl PartialEq for Similarity {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Similarity {}

impl PartialOrd for Similarity {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Similarity {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = self.ratio();
        let (c, d) = other.ratio();
        (a * d).cmp(&(c * b))
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.score())
    }
}

pub fn similarity_chars(a: &[char], b: &[char]) -> Similarity {
    Similarity::from_distance(levenshtein(a, b), a.len() + b.len())
}

pub fn similarity(a: &str, b: &str) -> Similarity {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    similarity_chars(&a, &b)
}

/// `Some(similarity)` only if it is strictly greater than `floor`.
///
/// Uses the length ceiling and the banded distance to skip work.
pub fn similarity_above(a: &[char], b: &[char], floor: Similarity) -> Option<Similarity> {
    let total = a.len() + b.len();
    if Similarity::ceiling(a.len(), b.len()) <= floor {
        return None;
    }
    let max = floor.max_distance_to_beat(total)?;
    levenshtein_within(a, b, max).map(|d| Similarity::from_distance(d, total))
}
