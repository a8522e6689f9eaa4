//! Similarity-transfer pseudo labeling with a rule-engine fallback.
//!
//! Every utterance of an unlabeled dialogue is compared with every labeled
//! pool utterance. If the best similarity is strictly above `delta` the
//! matched utterance's labels are copied; otherwise the rules are applied,
//! and if none fires the speaker-appropriate default label is used.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, LabelKind, Provenance, SemanticLabel, Speaker};
use crate::rules::RuleSet;
use crate::similarity::{similarity_above, Similarity};
use crate::Error;

pub const DEFAULT_DELTA: f64 = 0.8;
pub const DEFAULT_FALLBACK_LABEL: &str = "Others";

/// Which pool utterances a query is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchScope {
    /// Only utterances by the same speaker role.
    #[default]
    SameSpeaker,
    AnySpeaker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoConfig {
    pub delta: f64,
    /// Process at most this many unlabeled dialogues (in corpus order).
    pub limit: Option<usize>,
    /// Label name used when nothing else applies; its kind follows the
    /// speaker.
    pub default_label: String,
    pub scope: MatchScope,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        PseudoConfig {
            delta: DEFAULT_DELTA,
            limit: None,
            default_label: DEFAULT_FALLBACK_LABEL.to_string(),
            scope: MatchScope::SameSpeaker,
        }
    }
}

impl PseudoConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!("delta must be in [0, 1], got {}", self.delta)));
        }
        Ok(())
    }
}

/// One labeled reference utterance.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub speaker: Speaker,
    pub chars: Vec<char>,
    pub labels: Vec<SemanticLabel>,
}

impl PoolEntry {
    pub fn new(speaker: Speaker, text: &str, labels: Vec<SemanticLabel>) -> Self {
        PoolEntry {
            speaker,
            chars: text.chars().collect(),
            labels,
        }
    }
}

/// Highest similarity between `query` and the pool, with the labels of the
/// first pool entry reaching it.
///
/// Starts from similarity 0 with no labels and only moves on a strictly
/// greater score, so an empty pool gives `(0, None)`. Candidates whose length
/// alone caps them at or below the running best are skipped, and the
/// distance computation stops once the running best cannot be beaten.
pub fn max_similarity<'p>(
    query: &[char],
    pool: impl IntoIterator<Item = &'p PoolEntry>,
) -> (Similarity, Option<&'p [SemanticLabel]>) {
    let mut best = Similarity::ZERO;
    let mut labels = None;
    for entry in pool {
        if let Some(s) = similarity_above(query, &entry.chars, best) {
            best = s;
            labels = Some(entry.labels.as_slice());
            if best == Similarity::ONE {
                break;
            }
        }
    }
    (best, labels)
}

/// Convenience form over `(text, labels)` pairs.
pub fn max_similarity_str<'p>(
    query: &str,
    pool: &'p [(String, Vec<SemanticLabel>)],
) -> (Similarity, Option<&'p [SemanticLabel]>) {
    let q: Vec<char> = query.chars().collect();
    let mut best = Similarity::ZERO;
    let mut labels = None;
    for (text, l) in pool {
        let c: Vec<char> = text.chars().collect();
        if let Some(s) = similarity_above(&q, &c, best) {
            best = s;
            labels = Some(l.as_slice());
        }
    }
    (best, labels)
}

/// How each utterance got its labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PseudoTally {
    pub transferred: usize,
    pub by_rules: usize,
    pub by_default: usize,
}

impl PseudoTally {
    pub fn utterances(&self) -> usize {
        self.transferred + self.by_rules + self.by_default
    }
}

impl AddAssign for PseudoTally {
    fn add_assign(&mut self, rhs: Self) {
        self.transferred += rhs.transferred;
        self.by_rules += rhs.by_rules;
        self.by_default += rhs.by_default;
    }
}

/// A prepared labeler: the pool split by speaker plus the rules.
#[derive(Debug, Clone)]
pub struct PseudoLabeler {
    pool: Vec<PoolEntry>,
    rules: RuleSet,
    cfg: PseudoConfig,
}

impl PseudoLabeler {
    pub fn new(pool: Vec<PoolEntry>, rules: RuleSet, cfg: PseudoConfig) -> Result<Self, Error> {
        cfg.validate()?;
        if pool.is_empty() && rules.is_empty() {
            return Err(Error::Precondition(
                "pseudo labeling needs a non-empty pool or at least one rule".to_string(),
            ));
        }
        Ok(PseudoLabeler { pool, rules, cfg })
    }

    /// Builds the pool from every labeled utterance of a human-labeled corpus.
    pub fn from_corpus(pool: &Corpus, rules: RuleSet, cfg: PseudoConfig) -> Result<Self, Error> {
        if let Some(d) = pool
            .dialogues
            .iter()
            .find(|d| d.provenance != Provenance::HumanLabeled)
        {
            return Err(Error::Precondition(format!(
                "pool dialogue {} is not human labeled",
                d.id
            )));
        }
        let entries = pool
            .turns()
            .filter(|t| !t.labels.is_empty())
            .map(|t| PoolEntry::new(t.speaker, &t.text, t.labels.clone()))
            .collect();
        Self::new(entries, rules, cfg)
    }

    pub fn config(&self) -> &PseudoConfig {
        &self.cfg
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    fn candidates(&self, speaker: Speaker) -> impl Iterator<Item = &PoolEntry> {
        let scope = self.cfg.scope;
        self.pool
            .iter()
            .filter(move |e| scope == MatchScope::AnySpeaker || e.speaker == speaker)
    }

    fn default_label(&self, speaker: Speaker) -> SemanticLabel {
        SemanticLabel::new(speaker.label_kind(), self.cfg.default_label.clone())
    }

    /// Labels for one utterance and which path produced them.
    pub fn label_utterance(&self, speaker: Speaker, text: &str) -> (Vec<SemanticLabel>, Source) {
        let query: Vec<char> = text.chars().collect();
        let (eta, matched) = max_similarity(&query, self.candidates(speaker));
        if eta.exceeds(self.cfg.delta) {
            let kind: LabelKind = speaker.label_kind();
            let copied: Vec<SemanticLabel> = matched
                .unwrap_or(&[])
                .iter()
                .filter(|l| l.kind == kind)
                .cloned()
                .collect();
            if !copied.is_empty() {
                return (copied, Source::Transferred);
            }
        }
        let turn = crate::corpus::Turn::new(speaker, text);
        let by_rules = self.rules.apply(&turn);
        if by_rules.is_empty() {
            (alloc::vec![self.default_label(speaker)], Source::Default)
        } else {
            (by_rules, Source::Rules)
        }
    }

    /// Labels every turn and tags the dialogue as pseudo labeled.
    pub fn label_dialogue(&self, dialogue: &Dialogue) -> (Dialogue, PseudoTally) {
        let mut d = dialogue.clone();
        let mut tally = PseudoTally::default();
        for turn in &mut d.turns {
            let (labels, source) = self.label_utterance(turn.speaker, &turn.text);
            match source {
                Source::Transferred => tally.transferred += 1,
                Source::Rules => tally.by_rules += 1,
                Source::Default => tally.by_default += 1,
            }
            turn.labels = labels;
        }
        d.provenance = Provenance::PseudoLabeled;
        (d, tally)
    }

    /// Dialogues selected for labeling after checking they carry no labels.
    pub fn select<'c>(&self, unlabeled: &'c Corpus) -> Result<&'c [Dialogue], Error> {
        if let Some(d) = unlabeled.dialogues.iter().find(|d| d.is_labeled()) {
            return Err(Error::Precondition(format!(
                "dialogue {} in the unlabeled set already has labels",
                d.id
            )));
        }
        let n = self
            .cfg
            .limit
            .map_or(unlabeled.len(), |l| l.min(unlabeled.len()));
        Ok(&unlabeled.dialogues[..n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Transferred,
    Rules,
    Default,
}

/// Labels up to `cfg.limit` dialogues of `unlabeled`, in order.
pub fn pseudo_label(
    unlabeled: &Corpus,
    pool: &Corpus,
    rules: &RuleSet,
    cfg: &PseudoConfig,
) -> Result<(Corpus, PseudoTally), Error> {
    let labeler = PseudoLabeler::from_corpus(pool, rules.clone(), cfg.clone())?;
    let mut tally = PseudoTally::default();
    let mut out = Vec::new();
    for d in labeler.select(unlabeled)? {
        let (labeled, t) = labeler.label_dialogue(d);
        tally += t;
        out.push(labeled);
    }
    Ok((unlabeled.derive(out), tally))
}
