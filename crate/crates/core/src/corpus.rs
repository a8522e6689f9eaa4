//! Corpus data model: dialogues, turns and sub-utterance semantic labels.
//!
//! Field order of every serializable type is the on-disk field order of the
//! JSONL schema. Unknown keys on dialogues and turns are kept in `extra` and
//! written back after the known keys, so a load/save cycle is lossless.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Whether a label describes a patient intent or a doctor action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Intent,
    Action,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Intent => "intent",
            LabelKind::Action => "action",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Patient,
    Doctor,
}

impl Speaker {
    /// The only label kind a turn by this speaker may carry.
    pub fn label_kind(self) -> LabelKind {
        match self {
            Speaker::Patient => LabelKind::Intent,
            Speaker::Doctor => LabelKind::Action,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Patient => "patient",
            Speaker::Doctor => "doctor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Service {
    Consultation,
    Diagnosis,
    Treatment,
}

/// Where a dialogue's labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    HumanLabeled,
    PseudoLabeled,
    Perturbed,
    #[default]
    Unlabeled,
}

/// One intent-slot-value or action-slot-value triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SemanticLabel {
    pub kind: LabelKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl SemanticLabel {
    pub fn new(kind: LabelKind, label: impl Into<String>) -> Self {
        SemanticLabel {
            kind,
            label: label.into(),
            slot: None,
            value: None,
        }
    }

    pub fn intent(label: impl Into<String>) -> Self {
        Self::new(LabelKind::Intent, label)
    }

    pub fn action(label: impl Into<String>) -> Self {
        Self::new(LabelKind::Action, label)
    }

    pub fn with_slot(mut self, slot: impl Into<String>) -> Self {
        self.slot = Some(slot.into());
        self
    }

    pub fn with_value(mut self, value: impl Into<String>) -> Self {
        self.value = Some(value.into());
        self
    }
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)?;
        if let Some(slot) = &self.slot {
            write!(f, "/{}", slot)?;
        }
        if let Some(value) = &self.value {
            write!(f, "={}", value)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub labels: Vec<SemanticLabel>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Turn {
            speaker,
            text: text.into(),
            labels: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn patient(text: impl Into<String>) -> Self {
        Self::new(Speaker::Patient, text)
    }

    pub fn doctor(text: impl Into<String>) -> Self {
        Self::new(Speaker::Doctor, text)
    }

    pub fn with_labels(mut self, labels: Vec<SemanticLabel>) -> Self {
        self.labels = labels;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub disease_category: String,
    #[serde(default)]
    pub disease: String,
    #[serde(default)]
    pub services: BTreeSet<Service>,
    #[serde(default)]
    pub provenance: Provenance,
    pub turns: Vec<Turn>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>) -> Self {
        Dialogue {
            id: id.into(),
            domain: String::new(),
            disease_category: String::new(),
            disease: String::new(),
            services: BTreeSet::new(),
            provenance: Provenance::Unlabeled,
            turns: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn label_count(&self) -> usize {
        self.turns.iter().map(|t| t.labels.len()).sum()
    }

    pub fn is_labeled(&self) -> bool {
        self.turns.iter().any(|t| !t.labels.is_empty())
    }

    /// Indices of patient turns, the positions where the system responds.
    pub fn patient_turns(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.speaker == Speaker::Patient)
            .map(|(i, _)| i)
    }
}

/// Closed label and slot vocabularies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub intents: Vec<String>,
    pub actions: Vec<String>,
    pub slots: Vec<String>,
}

pub const DEFAULT_INTENTS: [&str; 5] = ["Informing", "Inquiring", "Chitchat", "QA", "Others"];
pub const DEFAULT_ACTIONS: [&str; 7] = [
    "Informing",
    "Inquiring",
    "Chitchat",
    "QA",
    "Others",
    "Recommendation",
    "Diagnosis",
];
/// Shipped slot list. Only the first few are named in the source
/// annotation guidelines; the rest are placeholders to be overridden by
/// `vocab.slots` in the pipeline config.
pub const DEFAULT_SLOTS: [&str; 20] = [
    "Symptom",
    "Treatment",
    "Disease",
    "Medicine",
    "Precaution",
    "Time",
    "Examination",
    "ExaminationResult",
    "Department",
    "BodyPart",
    "Dosage",
    "Frequency",
    "Duration",
    "Severity",
    "Cause",
    "MedicalHistory",
    "Allergy",
    "Age",
    "Gender",
    "Other",
];

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            intents: DEFAULT_INTENTS.iter().map(|s| s.to_string()).collect(),
            actions: DEFAULT_ACTIONS.iter().map(|s| s.to_string()).collect(),
            slots: DEFAULT_SLOTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Vocabulary {
    pub fn labels(&self, kind: LabelKind) -> &[String] {
        match kind {
            LabelKind::Intent => &self.intents,
            LabelKind::Action => &self.actions,
        }
    }

    pub fn has_label(&self, kind: LabelKind, label: &str) -> bool {
        self.labels(kind).iter().any(|l| l == label)
    }

    pub fn has_slot(&self, slot: &str) -> bool {
        self.slots.iter().any(|s| s == slot)
    }

    /// Problems with a single label, independent of the turn it sits on.
    pub fn check_label(&self, label: &SemanticLabel) -> Vec<IssueKind> {
        let mut out = Vec::new();
        if !self.has_label(label.kind, &label.label) {
            out.push(IssueKind::UnknownLabel {
                kind: label.kind,
                label: label.label.clone(),
            });
        }
        match (&label.slot, &label.value) {
            (Some(slot), _) if !self.has_slot(slot) => {
                out.push(IssueKind::UnknownSlot { slot: slot.clone() })
            }
            (None, Some(value)) => out.push(IssueKind::ValueWithoutSlot {
                value: value.clone(),
            }),
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Flagged but tolerated, e.g. non-alternating raw crawl turns.
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    UnknownLabel { kind: LabelKind, label: String },
    UnknownSlot { slot: String },
    ValueWithoutSlot { value: String },
    KindMismatch { speaker: Speaker, kind: LabelKind },
    EmptyText,
    NoServices,
    DuplicateId,
    /// Turn `turn` has the same speaker as its predecessor, or the first
    /// turn is not a patient turn.
    Alternation { speaker: Speaker },
}

impl IssueKind {
    pub fn severity(&self) -> Severity {
        match self {
            IssueKind::Alternation { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IssueKind::UnknownLabel { kind, label } => {
                write!(f, "unknown {} label \"{}\"", kind.as_str(), label)
            }
            IssueKind::UnknownSlot { slot } => write!(f, "unknown slot \"{}\"", slot),
            IssueKind::ValueWithoutSlot { value } => {
                write!(f, "value \"{}\" given without a slot", value)
            }
            IssueKind::KindMismatch { speaker, kind } => {
                write!(f, "{} label on a {} turn", kind.as_str(), speaker.as_str())
            }
            IssueKind::EmptyText => f.write_str("empty turn text"),
            IssueKind::NoServices => f.write_str("dialogue lists no services"),
            IssueKind::DuplicateId => f.write_str("duplicate dialogue id"),
            IssueKind::Alternation { speaker } => {
                write!(f, "turn order broken by consecutive {} turn", speaker.as_str())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub dialogue: String,
    pub turn: Option<usize>,
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.turn {
            Some(t) => write!(f, "dialogue {} turn {}: {}", self.dialogue, t, self.kind),
            None => write!(f, "dialogue {}: {}", self.dialogue, self.kind),
        }
    }
}

/// Checks one dialogue in isolation. Id uniqueness is a corpus-level check.
pub fn validate_dialogue(dialogue: &Dialogue, vocab: &Vocabulary) -> Vec<Issue> {
    let mut issues = Vec::new();
    let mut push = |turn: Option<usize>, kind: IssueKind| {
        issues.push(Issue {
            dialogue: dialogue.id.clone(),
            turn,
            kind,
        })
    };
    if dialogue.services.is_empty() {
        push(None, IssueKind::NoServices);
    }
    let mut expected = Speaker::Patient;
    for (i, turn) in dialogue.turns.iter().enumerate() {
        if turn.speaker != expected {
            push(Some(i), IssueKind::Alternation { speaker: turn.speaker });
        }
        expected = match turn.speaker {
            Speaker::Patient => Speaker::Doctor,
            Speaker::Doctor => Speaker::Patient,
        };
        if turn.text.trim().is_empty() {
            push(Some(i), IssueKind::EmptyText);
        }
        for label in &turn.labels {
            if label.kind != turn.speaker.label_kind() {
                push(
                    Some(i),
                    IssueKind::KindMismatch {
                        speaker: turn.speaker,
                        kind: label.kind,
                    },
                );
            }
            for kind in vocab.check_label(label) {
                push(Some(i), kind);
            }
        }
    }
    issues
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub vocab: Vocabulary,
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus::new(Vec::new())
    }
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Self {
        Corpus {
            dialogues,
            vocab: Vocabulary::default(),
        }
    }

    pub fn with_vocab(mut self, vocab: Vocabulary) -> Self {
        self.vocab = vocab;
        self
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    /// Same vocabulary, different dialogues.
    pub fn derive(&self, dialogues: Vec<Dialogue>) -> Corpus {
        Corpus {
            dialogues,
            vocab: self.vocab.clone(),
        }
    }

    /// All issues, warnings included, in dialogue order.
    pub fn validate(&self) -> Vec<Issue> {
        let mut seen = BTreeSet::new();
        let mut issues = Vec::new();
        for d in &self.dialogues {
            if !seen.insert(d.id.as_str()) {
                issues.push(Issue {
                    dialogue: d.id.clone(),
                    turn: None,
                    kind: IssueKind::DuplicateId,
                });
            }
            issues.extend(validate_dialogue(d, &self.vocab));
        }
        issues
    }

    pub fn errors(&self) -> Vec<Issue> {
        self.validate()
            .into_iter()
            .filter(|i| i.kind.severity() == Severity::Error)
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        self.errors().is_empty()
    }

    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.dialogues.iter().flat_map(|d| d.turns.iter())
    }
}

/// Renders a list of issues as one line per issue.
pub fn describe_issues(issues: &[Issue]) -> String {
    let lines: Vec<String> = issues.iter().map(|i| format!("{}", i)).collect();
    lines.join("\n")
}
