//! Pattern rules that assign labels to utterances, and the literal-or-regex
//! pattern type shared with anonymization.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use regex_automata::meta::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelKind, SemanticLabel, Speaker, Turn, Vocabulary};
use crate::Error;

/// Prefix marking a pattern string as a regular expression.
pub const REGEX_PREFIX: &str = "re:";

/// A literal substring or a compiled regex. Written as the literal text, or
/// as `re:<regex>`.
#[derive(Debug, Clone)]
pub enum Pattern {
    Literal(String),
    Regex { source: String, regex: Regex },
}

impl Pattern {
    pub fn parse(spec: &str) -> Result<Self, String> {
        match spec.strip_prefix(REGEX_PREFIX) {
            Some(src) => Self::regex(src),
            None if spec.is_empty() => Err("empty pattern".to_string()),
            None => Ok(Pattern::Literal(spec.to_string())),
        }
    }

    pub fn regex(source: &str) -> Result<Self, String> {
        let regex = Regex::new(source).map_err(|e| e.to_string())?;
        Ok(Pattern::Regex {
            source: source.to_string(),
            regex,
        })
    }

    /// The textual form accepted by [`Pattern::parse`].
    pub fn spec(&self) -> String {
        match self {
            Pattern::Literal(s) => s.clone(),
            Pattern::Regex { source, .. } => format!("{}{}", REGEX_PREFIX, source),
        }
    }

    pub fn is_match(&self, text: &str) -> bool {
        match self {
            Pattern::Literal(s) => text.contains(s.as_str()),
            Pattern::Regex { regex, .. } => regex.is_match(text),
        }
    }

    /// Non-overlapping, non-empty match spans from left to right.
    pub fn find_all(&self, text: &str) -> Vec<Range<usize>> {
        match self {
            Pattern::Literal(s) => text
                .match_indices(s.as_str())
                .map(|(i, m)| i..i + m.len())
                .collect(),
            Pattern::Regex { regex, .. } => regex
                .find_iter(text)
                .map(|m| m.range())
                .filter(|r| !r.is_empty())
                .collect(),
        }
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.spec() == other.spec()
    }
}

/// Serialized speaker filter of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerFilter {
    Patient,
    Doctor,
    #[default]
    Any,
}

impl SpeakerFilter {
    pub fn admits(self, speaker: Speaker) -> bool {
        match self {
            SpeakerFilter::Any => true,
            SpeakerFilter::Patient => speaker == Speaker::Patient,
            SpeakerFilter::Doctor => speaker == Speaker::Doctor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawAssign {
    kind: LabelKind,
    label: String,
    #[serde(default)]
    slot: Option<String>,
    #[serde(default)]
    value_pattern: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRule {
    name: String,
    patterns: Vec<String>,
    #[serde(default)]
    speaker: SpeakerFilter,
    assign: RawAssign,
}

/// What a rule assigns when it fires.
#[derive(Debug, Clone)]
pub struct LabelTemplate {
    pub kind: LabelKind,
    pub label: String,
    pub slot: Option<String>,
    /// Regex with exactly one capture group; the capture becomes the value.
    pub value_pattern: Option<Regex>,
}

impl LabelTemplate {
    fn instantiate(&self, text: &str) -> SemanticLabel {
        let value = self.value_pattern.as_ref().and_then(|re| {
            let mut caps = re.create_captures();
            re.captures(text, &mut caps);
            caps.get_group(1).map(|span| text[span.range()].to_string())
        });
        SemanticLabel {
            kind: self.kind,
            label: self.label.clone(),
            slot: self.slot.clone(),
            value: value.filter(|_| self.slot.is_some()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub name: String,
    pub patterns: Vec<Pattern>,
    pub speaker: SpeakerFilter,
    pub assign: LabelTemplate,
}

impl Rule {
    /// Whether the rule fires on `turn`. Rules never assign a label kind the
    /// turn's speaker cannot carry.
    pub fn fires_on(&self, turn: &Turn) -> bool {
        self.speaker.admits(turn.speaker)
            && self.assign.kind == turn.speaker.label_kind()
            && self.patterns.iter().any(|p| p.is_match(&turn.text))
    }

    fn compile(raw: RawRule, vocab: &Vocabulary) -> Result<Rule, Error> {
        let fail = |message: String| Error::Rule {
            rule: raw.name.clone(),
            message,
        };
        if raw.patterns.is_empty() {
            return Err(fail("no patterns".to_string()));
        }
        let patterns = raw
            .patterns
            .iter()
            .map(|p| Pattern::parse(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(&fail)?;
        let a = &raw.assign;
        if !vocab.has_label(a.kind, &a.label) {
            return Err(fail(format!("unknown {} label \"{}\"", a.kind.as_str(), a.label)));
        }
        if let Some(slot) = &a.slot {
            if !vocab.has_slot(slot) {
                return Err(fail(format!("unknown slot \"{}\"", slot)));
            }
        }
        let value_pattern = match &a.value_pattern {
            None => None,
            Some(src) => {
                if a.slot.is_none() {
                    return Err(fail("value_pattern requires a slot".to_string()));
                }
                let re = Regex::new(src).map_err(|e| fail(e.to_string()))?;
                // group 0 is the whole match
                let groups = re.group_info().group_len(regex_automata::PatternID::ZERO);
                if groups != 2 {
                    return Err(fail(format!(
                        "value_pattern must have exactly one capture group, found {}",
                        groups - 1
                    )));
                }
                Some(re)
            }
        };
        Ok(Rule {
            name: raw.name.clone(),
            patterns,
            speaker: raw.speaker,
            assign: LabelTemplate {
                kind: a.kind,
                label: a.label.clone(),
                slot: a.slot.clone(),
                value_pattern,
            },
        })
    }
}

/// Rules in file order.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    /// Parses the JSON array form and checks every rule against `vocab`.
    pub fn from_json(text: &str, vocab: &Vocabulary) -> Result<Self, Error> {
        let raw: Vec<RawRule> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let rules = raw
            .into_iter()
            .map(|r| Rule::compile(r, vocab))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RuleSet { rules })
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    /// Labels of every firing rule, in rule order, without duplicates.
    pub fn apply(&self, turn: &Turn) -> Vec<SemanticLabel> {
        let mut out: Vec<SemanticLabel> = Vec::new();
        for rule in self.rules.iter().filter(|r| r.fires_on(turn)) {
            let label = rule.assign.instantiate(&turn.text);
            if !out.contains(&label) {
                out.push(label);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const TAKE_ORALLY: &str = r#"[
        {"name": "take-orally", "patterns": ["口服", "take orally"], "speaker": "doctor",
         "assign": {"kind": "action", "label": "Recommendation", "slot": "Medicine"}}
    ]"#;

    #[test]
    fn take_orally_rule() {
        let rules = RuleSet::from_json(TAKE_ORALLY, &Vocabulary::default()).unwrap();
        let got = rules.apply(&Turn::doctor("一天三次口服"));
        assert_eq!(got, vec![SemanticLabel::action("Recommendation").with_slot("Medicine")]);
        assert!(rules.apply(&Turn::doctor("多喝水")).is_empty());
        // patient turns cannot carry actions
        assert!(rules.apply(&Turn::patient("口服")).is_empty());
    }

    #[test]
    fn identical_labels_collapse() {
        let json = r#"[
            {"name": "a", "patterns": ["口服"], "assign": {"kind": "action", "label": "Recommendation", "slot": "Medicine"}},
            {"name": "b", "patterns": ["re:口."], "assign": {"kind": "action", "label": "Recommendation", "slot": "Medicine"}},
            {"name": "c", "patterns": ["口服"], "assign": {"kind": "action", "label": "Inquiring"}}
        ]"#;
        let rules = RuleSet::from_json(json, &Vocabulary::default()).unwrap();
        let got = rules.apply(&Turn::doctor("口服"));
        assert_eq!(
            got,
            vec![
                SemanticLabel::action("Recommendation").with_slot("Medicine"),
                SemanticLabel::action("Inquiring"),
            ]
        );
    }

    #[test]
    fn value_pattern_captures() {
        let json = r#"[{"name": "drug", "patterns": ["re:口服\\S+"], "speaker": "doctor",
            "assign": {"kind": "action", "label": "Recommendation", "slot": "Medicine",
                       "value_pattern": "口服(\\S+?)(?:，|$)"}}]"#;
        let rules = RuleSet::from_json(json, &Vocabulary::default()).unwrap();
        let got = rules.apply(&Turn::doctor("口服阿莫西林，一天三次"));
        assert_eq!(got[0].value.as_deref(), Some("阿莫西林"));
    }

    #[test]
    fn load_errors_name_the_rule() {
        let v = Vocabulary::default();
        let unknown = r#"[{"name": "bad-label", "patterns": ["x"], "assign": {"kind": "intent", "label": "Foo"}}]"#;
        match RuleSet::from_json(unknown, &v) {
            Err(Error::Rule { rule, .. }) => assert_eq!(rule, "bad-label"),
            other => panic!("{:?}", other),
        }
        let bad_re = r#"[{"name": "bad-re", "patterns": ["re:("], "assign": {"kind": "intent", "label": "QA"}}]"#;
        assert!(matches!(RuleSet::from_json(bad_re, &v), Err(Error::Rule { .. })));
        let groups = r#"[{"name": "g", "patterns": ["x"], "assign": {"kind": "intent", "label": "QA", "slot": "Time", "value_pattern": "(a)(b)"}}]"#;
        assert!(matches!(RuleSet::from_json(groups, &v), Err(Error::Rule { .. })));
        assert!(RuleSet::from_json("[]", &v).unwrap().is_empty());
        assert!(matches!(RuleSet::from_json("{", &v), Err(Error::Parse { .. })));
    }

    #[test]
    fn pattern_spans() {
        let p = Pattern::parse("re:协和医院|同仁医院").unwrap();
        assert_eq!(p.find_all("在协和医院和同仁医院").len(), 2);
        let lit = Pattern::parse("医院").unwrap();
        assert_eq!(lit.find_all("医院医院"), vec![0..6, 6..12]);
        assert!(Pattern::parse("").is_err());
    }
}
