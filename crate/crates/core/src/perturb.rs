//! Natural perturbation of labeled dialogues: alias substitution,
//! back-translation and random character modification of entity mentions.
//!
//! Each strategy draws from its own stream keyed by `(seed, dialogue id,
//! strategy)`, so output is independent of corpus order, worker count and
//! which other strategies are enabled.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, Provenance};
use crate::knowledge::AliasLexicon;
use crate::seed::keyed_rng;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    AliasSubstitution,
    BackTranslation,
    RandomModification,
}

impl Strategy {
    /// Application order.
    pub const ALL: [Strategy; 3] = [
        Strategy::AliasSubstitution,
        Strategy::BackTranslation,
        Strategy::RandomModification,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Strategy::AliasSubstitution => "alias",
            Strategy::BackTranslation => "bt",
            Strategy::RandomModification => "rm",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "alias" | "alias_substitution" => Ok(Strategy::AliasSubstitution),
            "bt" | "back_translation" | "back-translation" => Ok(Strategy::BackTranslation),
            "rm" | "random" | "random_modification" | "random-modification" => {
                Ok(Strategy::RandomModification)
            }
            other => Err(Error::InvalidConfig(format!("unknown perturbation strategy \"{}\"", other))),
        }
    }
}

/// Relative weights of the three character operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpMix {
    pub add: f64,
    pub delete: f64,
    pub replace: f64,
}

impl Default for OpMix {
    fn default() -> Self {
        OpMix {
            add: 1.0,
            delete: 1.0,
            replace: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharOp {
    Add,
    Delete,
    Replace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbConfig {
    pub strategies: BTreeSet<Strategy>,
    pub rm_ops_per_dialogue: usize,
    pub rm_op_mix: OpMix,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            strategies: Strategy::ALL.into_iter().collect(),
            rm_ops_per_dialogue: 1,
            rm_op_mix: OpMix::default(),
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn only(strategy: Strategy) -> Self {
        PerturbConfig {
            strategies: [strategy].into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.strategies.is_empty() {
            return Err(Error::Precondition("no perturbation strategy enabled".to_string()));
        }
        let m = self.rm_op_mix;
        let weights = [m.add, m.delete, m.replace];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidConfig(
                "rm_op_mix weights must be non-negative and not all zero".to_string(),
            ));
        }
        Ok(())
    }
}

/// A round-trip translation provider.
pub trait Translator {
    fn forward(&self, text: &str) -> Result<String, String>;
    fn backward(&self, text: &str) -> Result<String, String>;
}

/// Returns text unchanged in both directions.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn forward(&self, text: &str) -> Result<String, String> {
        Ok(text.to_string())
    }

    fn backward(&self, text: &str) -> Result<String, String> {
        Ok(text.to_string())
    }
}

/// Looks translations up in recorded tables; unknown text is an error.
#[derive(Debug, Clone, Default)]
pub struct FixtureTranslator {
    pub forward: BTreeMap<String, String>,
    pub backward: BTreeMap<String, String>,
}

impl FixtureTranslator {
    /// Records `source -> pivot -> result`.
    pub fn record(&mut self, source: &str, pivot: &str, result: &str) {
        self.forward.insert(source.to_string(), pivot.to_string());
        self.backward.insert(pivot.to_string(), result.to_string());
    }
}

impl Translator for FixtureTranslator {
    fn forward(&self, text: &str) -> Result<String, String> {
        self.forward
            .get(text)
            .cloned()
            .ok_or_else(|| format!("no recorded forward translation for \"{}\"", text))
    }

    fn backward(&self, text: &str) -> Result<String, String> {
        self.backward
            .get(text)
            .cloned()
            .ok_or_else(|| format!("no recorded backward translation for \"{}\"", text))
    }
}

impl<T: Translator + ?Sized> Translator for &T {
    fn forward(&self, text: &str) -> Result<String, String> {
        (**self).forward(text)
    }

    fn backward(&self, text: &str) -> Result<String, String> {
        (**self).backward(text)
    }
}

/// Leftmost-longest scan for lexicon entities.
fn entity_spans<'l>(text: &str, entities: &[&'l str]) -> Vec<(Range<usize>, &'l str)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        if let Some(e) = entities.iter().find(|e| rest.starts_with(**e)) {
            out.push((pos..pos + e.len(), *e));
            pos += e.len();
        } else {
            pos += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    out
}

/// Replaces lexicon entities in turn texts with an alias.
///
/// One alias is drawn per entity per dialogue, on its first occurrence, and
/// used for every occurrence and for label values equal to the entity.
pub fn alias_substitute(dialogue: &Dialogue, lexicon: &AliasLexicon, seed: u64) -> Dialogue {
    let mut d = dialogue.clone();
    d.provenance = Provenance::Perturbed;
    let mut entities: Vec<&str> = lexicon
        .iter()
        .filter(|(_, aliases)| !aliases.is_empty())
        .map(|(e, _)| e.as_str())
        .filter(|e| !e.is_empty())
        .collect();
    // longest first so overlapping entities resolve to the longest match
    entities.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    if entities.is_empty() {
        return d;
    }

    let mut rng = keyed_rng(seed, &[&dialogue.id, Strategy::AliasSubstitution.key()]);
    let mut chosen: BTreeMap<&str, &str> = BTreeMap::new();
    for turn in &mut d.turns {
        let spans = entity_spans(&turn.text, &entities);
        if spans.is_empty() {
            continue;
        }
        let mut out = String::with_capacity(turn.text.len());
        let mut last = 0;
        for (span, entity) in spans {
            let alias = *chosen.entry(entity).or_insert_with(|| {
                let aliases = &lexicon[entity];
                aliases[rng.random_range(0..aliases.len())].as_str()
            });
            out.push_str(&turn.text[last..span.start]);
            out.push_str(alias);
            last = span.end;
        }
        out.push_str(&turn.text[last..]);
        turn.text = out;
    }
    for turn in &mut d.turns {
        for label in &mut turn.labels {
            if let Some(alias) = label.value.as_deref().and_then(|v| chosen.get(v)) {
                label.value = Some(alias.to_string());
            }
        }
    }
    d
}

/// Replaces every turn text by `backward(forward(text))`. Labels are kept.
pub fn back_translate<T: Translator + ?Sized>(dialogue: &Dialogue, translator: &T) -> Result<Dialogue, Error> {
    let mut d = dialogue.clone();
    d.provenance = Provenance::Perturbed;
    for (i, turn) in d.turns.iter_mut().enumerate() {
        let fail = |message: String| Error::Translate {
            dialogue: dialogue.id.clone(),
            turn: i,
            message,
        };
        let pivot = translator.forward(&turn.text).map_err(fail)?;
        turn.text = translator.backward(&pivot).map_err(fail)?;
    }
    Ok(d)
}

/// Sorted distinct non-whitespace characters of all turn texts.
pub fn corpus_alphabet(corpus: &Corpus) -> Vec<char> {
    let set: BTreeSet<char> = corpus
        .turns()
        .flat_map(|t| t.text.chars())
        .filter(|c| !c.is_whitespace() && !c.is_control())
        .collect();
    set.into_iter().collect()
}

/// Label values found verbatim in their own turn's text: `(turn, byte span)`
/// of the first occurrence, overlapping spans dropped, ordered by position.
pub fn entity_occurrences(dialogue: &Dialogue) -> Vec<(usize, Range<usize>)> {
    let mut out = Vec::new();
    for (i, turn) in dialogue.turns.iter().enumerate() {
        let mut spans: Vec<Range<usize>> = turn
            .labels
            .iter()
            .filter_map(|l| l.value.as_deref())
            .filter(|v| !v.is_empty())
            .collect::<BTreeSet<&str>>()
            .into_iter()
            .filter_map(|v| turn.text.find(v).map(|s| s..s + v.len()))
            .collect();
        spans.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
        let mut end = 0;
        for s in spans {
            if s.start >= end {
                end = s.end;
                out.push((i, s));
            }
        }
    }
    out
}

fn modify_span<R: Rng>(span: &str, op: CharOp, alphabet: &[char], rng: &mut R) -> Option<String> {
    let mut chars: Vec<char> = span.chars().collect();
    match op {
        CharOp::Add => {
            let c = *alphabet.get(rng.random_range(0..alphabet.len().max(1)))?;
            let at = rng.random_range(0..=chars.len());
            chars.insert(at, c);
        }
        CharOp::Delete => {
            if chars.len() < 2 {
                return None;
            }
            let at = rng.random_range(0..chars.len());
            chars.remove(at);
        }
        CharOp::Replace => {
            let at = rng.random_range(0..chars.len());
            let options: Vec<char> = alphabet.iter().copied().filter(|&c| c != chars[at]).collect();
            if options.is_empty() {
                return None;
            }
            chars[at] = options[rng.random_range(0..options.len())];
        }
    }
    Some(chars.into_iter().collect())
}

/// Applies `rm_ops_per_dialogue` single-character typos to entity mentions.
///
/// Occurrences are drawn without replacement; each gets one operation from
/// the weighted mix. Label values keep the original spelling. A delete on a
/// one-character entity is skipped.
pub fn random_modify(dialogue: &Dialogue, cfg: &PerturbConfig, alphabet: &[char], seed: u64) -> Dialogue {
    let mut d = dialogue.clone();
    d.provenance = Provenance::Perturbed;
    let occurrences = entity_occurrences(dialogue);
    let k = cfg.rm_ops_per_dialogue.min(occurrences.len());
    if k == 0 {
        return d;
    }
    let m = cfg.rm_op_mix;
    let Ok(mix) = WeightedIndex::new([m.add, m.delete, m.replace]) else {
        return d;
    };
    let mut rng = keyed_rng(seed, &[&dialogue.id, Strategy::RandomModification.key()]);
    let mut picked: Vec<usize> = index::sample(&mut rng, occurrences.len(), k).into_vec();
    picked.sort_unstable();

    let mut edits: BTreeMap<usize, Vec<(Range<usize>, String)>> = BTreeMap::new();
    for i in picked {
        let (turn, span) = &occurrences[i];
        let op = [CharOp::Add, CharOp::Delete, CharOp::Replace][mix.sample(&mut rng)];
        let original = &dialogue.turns[*turn].text[span.clone()];
        if let Some(new) = modify_span(original, op, alphabet, &mut rng) {
            edits.entry(*turn).or_default().push((span.clone(), new));
        }
    }
    for (turn, spans) in edits {
        let text = &dialogue.turns[turn].text;
        let mut out = String::with_capacity(text.len() + 4);
        let mut last = 0;
        for (span, new) in spans {
            out.push_str(&text[last..span.start]);
            out.push_str(&new);
            last = span.end;
        }
        out.push_str(&text[last..]);
        d.turns[turn].text = out;
    }
    d
}

/// Inputs shared by every dialogue of one perturbation run.
#[derive(Debug, Clone)]
pub struct Perturber<'a> {
    pub cfg: &'a PerturbConfig,
    pub lexicon: &'a AliasLexicon,
    pub alphabet: Vec<char>,
}

impl<'a> Perturber<'a> {
    pub fn new(cfg: &'a PerturbConfig, lexicon: &'a AliasLexicon, corpus: &Corpus) -> Result<Self, Error> {
        cfg.validate()?;
        Ok(Perturber {
            cfg,
            lexicon,
            alphabet: corpus_alphabet(corpus),
        })
    }

    /// Enabled strategies in fixed order: alias, back-translation, random
    /// modification.
    pub fn perturb_dialogue<T: Translator + ?Sized>(
        &self,
        dialogue: &Dialogue,
        translator: &T,
    ) -> Result<Dialogue, Error> {
        let mut d = dialogue.clone();
        for s in Strategy::ALL {
            if !self.cfg.strategies.contains(&s) {
                continue;
            }
            d = match s {
                Strategy::AliasSubstitution => alias_substitute(&d, self.lexicon, self.cfg.seed),
                Strategy::BackTranslation => back_translate(&d, translator)?,
                Strategy::RandomModification => random_modify(&d, self.cfg, &self.alphabet, self.cfg.seed),
            };
        }
        d.provenance = Provenance::Perturbed;
        Ok(d)
    }
}

/// Perturbs every dialogue of `corpus`. Fails without partial output if any
/// dialogue fails.
pub fn perturb_corpus<T: Translator + ?Sized>(
    corpus: &Corpus,
    cfg: &PerturbConfig,
    lexicon: &AliasLexicon,
    translator: &T,
) -> Result<Corpus, Error> {
    let p = Perturber::new(cfg, lexicon, corpus)?;
    let dialogues = corpus
        .dialogues
        .iter()
        .map(|d| p.perturb_dialogue(d, translator))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(corpus.derive(dialogues))
}
