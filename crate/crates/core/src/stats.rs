//! Descriptive corpus statistics (dialogue, utterance, character and label
//! counts plus label/slot distributions).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

use serde::{Serialize, Serializer};

use crate::corpus::Corpus;

/// A mean kept as its exact numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Mean {
    pub total: u64,
    pub count: u64,
}

impl Mean {
    pub fn new(total: u64, count: u64) -> Self {
        Mean { total, count }
    }

    /// Zero for an empty population.
    pub fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total as f64 / self.count as f64
        }
    }
}

impl Serialize for Mean {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StatsReport {
    pub n_dialogues: u64,
    pub n_utterances: u64,
    pub n_chars: u64,
    pub n_labels: u64,
    pub utterances_per_dialogue: Mean,
    pub chars_per_dialogue: Mean,
    pub chars_per_utterance: Mean,
    pub labels_per_dialogue: Mean,
    pub labels_per_utterance: Mean,
    /// Label name to the number of utterances carrying it at least once.
    pub label_distribution: BTreeMap<String, u64>,
    /// Slot name to the number of distinct entity values seen for it.
    pub slot_distribution: BTreeMap<String, u64>,
}

/// Characters are Unicode scalar values, so one Han character counts once.
pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut n_utterances = 0u64;
    let mut n_chars = 0u64;
    let mut n_labels = 0u64;
    let mut label_distribution: BTreeMap<String, u64> = BTreeMap::new();
    let mut slot_entities: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();

    for turn in corpus.turns() {
        n_utterances += 1;
        n_chars += turn.text.chars().count() as u64;
        n_labels += turn.labels.len() as u64;
        let distinct: BTreeSet<&str> = turn.labels.iter().map(|l| l.label.as_str()).collect();
        for label in distinct {
            *label_distribution.entry(String::from(label)).or_default() += 1;
        }
        for label in &turn.labels {
            if let (Some(slot), Some(value)) = (&label.slot, &label.value) {
                slot_entities.entry(slot).or_default().insert(value);
            }
        }
    }

    let n_dialogues = corpus.dialogues.len() as u64;
    StatsReport {
        n_dialogues,
        n_utterances,
        n_chars,
        n_labels,
        utterances_per_dialogue: Mean::new(n_utterances, n_dialogues),
        chars_per_dialogue: Mean::new(n_chars, n_dialogues),
        chars_per_utterance: Mean::new(n_chars, n_utterances),
        labels_per_dialogue: Mean::new(n_labels, n_dialogues),
        labels_per_utterance: Mean::new(n_labels, n_utterances),
        label_distribution,
        slot_distribution: slot_entities
            .into_iter()
            .map(|(slot, values)| (String::from(slot), values.len() as u64))
            .collect(),
    }
}
