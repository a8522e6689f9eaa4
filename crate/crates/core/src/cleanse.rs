//! Corpus cleaning: short/media/low-entity filters, pattern anonymization
//! and per-disease proportional sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue};
use crate::knowledge::KnowledgeBase;
use crate::rules::Pattern;
use crate::seed::keyed_rng;
use crate::Error;

pub const DEFAULT_MIN_UTTERANCES: usize = 8;
pub const DEFAULT_MIN_KB_ENTITIES: usize = 1;
pub const DEFAULT_MEDIA_MARKERS: [&str; 6] = ["[IMAGE]", "[AUDIO]", "[图片]", "[语音]", "<img", "<audio"];

/// A pattern and the bracketed token that replaces its matches.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizeRule {
    pub pattern: Pattern,
    pub token: String,
}

/// Serialized form: `{"pattern": "...", "token": "[HOSPITAL]"}`, the pattern
/// using the `re:` prefix for regexes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizeRuleSpec {
    pub pattern: String,
    pub token: String,
}

fn is_token(token: &str) -> bool {
    token.len() > 2
        && token.starts_with('[')
        && token.ends_with(']')
        && token[1..token.len() - 1]
            .chars()
            .all(|c| c.is_ascii_uppercase() || c == '_')
}

impl AnonymizeRule {
    pub fn new(pattern: &str, token: &str) -> Result<Self, Error> {
        if !is_token(token) {
            return Err(Error::InvalidConfig(format!(
                "anonymization token \"{}\" must be bracketed uppercase, e.g. [HOSPITAL]",
                token
            )));
        }
        let pattern = Pattern::parse(pattern)
            .map_err(|e| Error::InvalidConfig(format!("anonymization pattern: {}", e)))?;
        if pattern.is_match(token) {
            return Err(Error::InvalidConfig(format!(
                "anonymization pattern {} matches its own token",
                pattern.spec()
            )));
        }
        Ok(AnonymizeRule {
            pattern,
            token: token.to_string(),
        })
    }

    pub fn from_spec(spec: &AnonymizeRuleSpec) -> Result<Self, Error> {
        Self::new(&spec.pattern, &spec.token)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanConfig {
    pub min_utterances: usize,
    pub media_markers: Vec<String>,
    pub min_kb_entities: usize,
    pub anonymize_rules: Vec<AnonymizeRule>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            min_utterances: DEFAULT_MIN_UTTERANCES,
            media_markers: DEFAULT_MEDIA_MARKERS.iter().map(|s| s.to_string()).collect(),
            min_kb_entities: DEFAULT_MIN_KB_ENTITIES,
            anonymize_rules: Vec::new(),
        }
    }
}

impl CleanConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.min_utterances < 1 {
            return Err(Error::InvalidConfig("clean.min_utterances must be >= 1".to_string()));
        }
        let tokens: BTreeSet<&str> = self.anonymize_rules.iter().map(|r| r.token.as_str()).collect();
        for rule in &self.anonymize_rules {
            if tokens.iter().any(|t| rule.pattern.is_match(t)) {
                return Err(Error::InvalidConfig(format!(
                    "anonymization pattern {} matches a replacement token",
                    rule.pattern.spec()
                )));
            }
        }
        Ok(())
    }
}

fn retain(corpus: &Corpus, keep: impl Fn(&Dialogue) -> bool) -> Corpus {
    corpus.derive(corpus.dialogues.iter().filter(|d| keep(d)).cloned().collect())
}

/// Keeps dialogues with at least `min_utterances` turns.
pub fn filter_short(corpus: &Corpus, min_utterances: usize) -> Corpus {
    retain(corpus, |d| d.turns.len() >= min_utterances)
}

/// Drops dialogues where any turn text contains a media marker. Label values
/// are not inspected.
pub fn filter_media(corpus: &Corpus, markers: &[String]) -> Corpus {
    retain(corpus, |d| {
        !d.turns
            .iter()
            .any(|t| markers.iter().any(|m| !m.is_empty() && t.text.contains(m.as_str())))
    })
}

/// Distinct KB entities occurring verbatim in the dialogue's turn texts.
pub fn entity_mentions<'k>(dialogue: &Dialogue, kb: &'k KnowledgeBase) -> BTreeSet<&'k str> {
    kb.entities()
        .filter(|e| dialogue.turns.iter().any(|t| t.text.contains(e)))
        .collect()
}

/// Keeps dialogues mentioning at least `min_entities` distinct KB entities.
pub fn filter_low_entity(corpus: &Corpus, kb: &KnowledgeBase, min_entities: usize) -> Corpus {
    if min_entities == 0 {
        return corpus.clone();
    }
    retain(corpus, |d| entity_mentions(d, kb).len() >= min_entities)
}

/// Replaces every match in `text`, returning the new text and the matched
/// substrings.
fn replace_all(text: &str, rule: &AnonymizeRule) -> (String, Vec<String>) {
    let spans = rule.pattern.find_all(text);
    if spans.is_empty() {
        return (text.to_string(), Vec::new());
    }
    let mut out = String::with_capacity(text.len());
    let mut matched = Vec::with_capacity(spans.len());
    let mut last = 0;
    for span in spans {
        out.push_str(&text[last..span.start]);
        out.push_str(&rule.token);
        matched.push(text[span.clone()].to_string());
        last = span.end;
    }
    out.push_str(&text[last..]);
    (out, matched)
}

pub fn anonymize_dialogue(dialogue: &Dialogue, rules: &[AnonymizeRule]) -> Dialogue {
    let mut d = dialogue.clone();
    for turn in &mut d.turns {
        for rule in rules {
            let (text, matched) = replace_all(&turn.text, rule);
            if matched.is_empty() {
                continue;
            }
            turn.text = text;
            for label in &mut turn.labels {
                if let Some(v) = &label.value {
                    if !v.is_empty() && matched.iter().any(|m| m.contains(v.as_str())) {
                        label.value = Some(rule.token.clone());
                    }
                }
            }
        }
    }
    d
}

/// Replaces pattern matches in turn text by their tokens. A label value that
/// lies inside a replaced span becomes the token as well.
pub fn anonymize(corpus: &Corpus, rules: &[AnonymizeRule]) -> Corpus {
    corpus.derive(
        corpus
            .dialogues
            .iter()
            .map(|d| anonymize_dialogue(d, rules))
            .collect(),
    )
}

/// `round_half_up(fraction * n)`, at least 1 when `n >= 1`.
pub fn sample_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let k = libm::floor(fraction * n as f64 + 0.5) as usize;
    k.clamp(1, n)
}

/// Draws the same fraction of dialogues from every disease.
///
/// Each disease uses its own stream keyed by `(seed, disease)`; selected
/// dialogues keep their corpus order.
pub fn balanced_sample(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus, Error> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sample fraction must be in (0, 1], got {}",
            fraction
        )));
    }
    let mut by_disease: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in corpus.dialogues.iter().enumerate() {
        by_disease.entry(d.disease.as_str()).or_default().push(i);
    }
    let mut chosen: Vec<usize> = Vec::new();
    for (disease, members) in &by_disease {
        let k = sample_count(members.len(), fraction);
        let mut rng = keyed_rng(seed, &["balanced_sample", disease]);
        chosen.extend(index::sample(&mut rng, members.len(), k).into_iter().map(|j| members[j]));
    }
    chosen.sort_unstable();
    Ok(corpus.derive(chosen.into_iter().map(|i| corpus.dialogues[i].clone()).collect()))
}

/// Short, media and entity filters followed by anonymization.
pub fn clean(corpus: &Corpus, kb: Option<&KnowledgeBase>, cfg: &CleanConfig) -> Result<Corpus, Error> {
    cfg.validate()?;
    let mut c = filter_short(corpus, cfg.min_utterances);
    c = filter_media(&c, &cfg.media_markers);
    if let Some(kb) = kb {
        c = filter_low_entity(&c, kb, cfg.min_kb_entities);
    }
    Ok(anonymize(&c, &cfg.anonymize_rules))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SemanticLabel, Service, Turn};
    use alloc::vec;

    fn dialogue(id: &str, n_turns: usize) -> Dialogue {
        let mut d = Dialogue::new(id);
        d.services.insert(Service::Consultation);
        d.turns = (0..n_turns)
            .map(|i| if i % 2 == 0 { Turn::patient("头痛") } else { Turn::doctor("休息") })
            .collect();
        d
    }

    #[test]
    fn short_filter_boundary() {
        let c = Corpus::new(vec![dialogue("seven", 7), dialogue("eight", 8)]);
        let kept = filter_short(&c, 8);
        assert_eq!(kept.dialogues.len(), 1);
        assert_eq!(kept.dialogues[0].id, "eight");
        assert_eq!(filter_short(&c, 1), c);
    }

    #[test]
    fn media_marker_only_in_text() {
        let mut with_image = dialogue("img", 2);
        with_image.turns[0].text = "看这个[IMAGE]".to_string();
        let mut value_only = dialogue("val", 2);
        value_only.turns[0].labels =
            vec![SemanticLabel::intent("Informing").with_slot("Symptom").with_value("[IMAGE]")];
        let c = Corpus::new(vec![with_image, value_only]);
        let markers = vec!["[IMAGE]".to_string()];
        let kept = filter_media(&c, &markers);
        assert_eq!(kept.dialogues.len(), 1);
        assert_eq!(kept.dialogues[0].id, "val");
    }

    #[test]
    fn low_entity_filter() {
        let kb = KnowledgeBase::parse_tsv("paracetamol\tindication\theadache").unwrap();
        let mut mentions = dialogue("m", 2);
        mentions.turns[0].text = "I have a headache".to_string();
        let c = Corpus::new(vec![dialogue("none", 2), mentions]);
        let kept = filter_low_entity(&c, &kb, 1);
        assert_eq!(kept.dialogues.len(), 1);
        assert_eq!(kept.dialogues[0].id, "m");
        assert_eq!(filter_low_entity(&c, &kb, 0), c);
        assert_eq!(filter_low_entity(&c, &kb, 2).dialogues.len(), 0);
    }

    #[test]
    fn hospital_anonymization() {
        let rule = AnonymizeRule::new("re:协和医院|同仁医院", "[HOSPITAL]").unwrap();
        let mut d = dialogue("h", 2);
        d.turns[0].text = "我在协和医院".to_string();
        d.turns[0].labels = vec![SemanticLabel::intent("Informing").with_slot("Department").with_value("协和")];
        let out = anonymize(&Corpus::new(vec![d]), core::slice::from_ref(&rule));
        assert_eq!(out.dialogues[0].turns[0].text, "我在[HOSPITAL]");
        assert_eq!(out.dialogues[0].turns[0].labels[0].value.as_deref(), Some("[HOSPITAL]"));
        assert_eq!(anonymize(&out, &[rule]), out);
    }

    #[test]
    fn bad_tokens_rejected() {
        assert!(AnonymizeRule::new("x", "HOSPITAL").is_err());
        assert!(AnonymizeRule::new("x", "[hospital]").is_err());
        assert!(AnonymizeRule::new("re:\\[.*\\]", "[HOSPITAL]").is_err());
    }

    #[test]
    fn proportional_counts() {
        assert_eq!(sample_count(10, 0.5), 5);
        assert_eq!(sample_count(5, 0.5), 3);
        assert_eq!(sample_count(3, 0.1), 1);
        assert_eq!(sample_count(0, 0.5), 0);
        assert_eq!(sample_count(7, 1.0), 7);
    }

    #[test]
    fn balanced_sample_per_disease() {
        let mut ds = Vec::new();
        for i in 0..10 {
            let mut d = dialogue(&format!("a{}", i), 2);
            d.disease = "A".to_string();
            ds.push(d);
        }
        for i in 0..20 {
            let mut d = dialogue(&format!("b{}", i), 2);
            d.disease = "B".to_string();
            ds.push(d);
        }
        let c = Corpus::new(ds);
        let s = balanced_sample(&c, 0.5, 42).unwrap();
        let a = s.dialogues.iter().filter(|d| d.disease == "A").count();
        let b = s.dialogues.iter().filter(|d| d.disease == "B").count();
        assert_eq!((a, b), (5, 10));
        assert_eq!(balanced_sample(&c, 0.5, 42).unwrap(), s);
        assert_eq!(balanced_sample(&c, 1.0, 1).unwrap(), c);
        assert!(balanced_sample(&c, 0.0, 1).is_err());
        assert!(balanced_sample(&c, 1.5, 1).is_err());
    }
}
