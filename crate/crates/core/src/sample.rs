//! Task samples for the three sub-tasks.
//!
//! * NLU: history → patient intents `I_t`
//! * DPL: history, `I_t`, retrieved triples `K_t` → doctor actions `A_t`
//! * NLG: history, `I_t`, `K_t`, `A_t` → doctor response
//!
//! Inputs nest: the NLU input is a prefix of the DPL input, which is a prefix
//! of the NLG input. In the causal format the section tag that introduces the
//! target is appended to the input, so `input + target` is the single
//! training sequence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, LabelKind, SemanticLabel, Speaker};
use crate::grammar::{self, escape, serialize_labels, serialize_triples};
use crate::knowledge::{KnowledgeBase, KnowledgeTriple, DEFAULT_K_TRIPLES};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Nlu,
    Dpl,
    Nlg,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Nlu, Task::Dpl, Task::Nlg];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Nlu => "nlu",
            Task::Dpl => "dpl",
            Task::Nlg => "nlg",
        }
    }

    /// Kind of the labels this task predicts; `None` for NLG.
    pub fn label_kind(self) -> Option<LabelKind> {
        match self {
            Task::Nlu => Some(LabelKind::Intent),
            Task::Dpl => Some(LabelKind::Action),
            Task::Nlg => None,
        }
    }

    /// Tag that introduces this task's target in a causal sequence.
    pub fn target_tag(self) -> &'static str {
        match self {
            Task::Nlu => grammar::NLU_TAG,
            Task::Dpl => grammar::DPL_TAG,
            Task::Nlg => grammar::RESP_TAG,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "nlu" => Ok(Task::Nlu),
            "dpl" => Ok(Task::Dpl),
            "nlg" => Ok(Task::Nlg),
            _ => Err(Error::InvalidConfig(format!("unknown task \"{}\"", s))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    Causal,
    #[default]
    Conditional,
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "causal" => Ok(SampleFormat::Causal),
            "conditional" => Ok(SampleFormat::Conditional),
            _ => Err(Error::InvalidConfig(format!("unknown format \"{}\"", s))),
        }
    }
}

/// One (input, target) pair. Serialized keys follow the export schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub task: Task,
    pub dialogue_id: String,
    pub turn_index: usize,
    pub format: SampleFormat,
    #[serde(rename = "input")]
    pub input_seq: String,
    #[serde(rename = "target")]
    pub target_seq: String,
}

impl TaskSample {
    /// The full sequence a causal model is trained on.
    pub fn sequence(&self) -> String {
        let mut s = self.input_seq.clone();
        s.push_str(&self.target_seq);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleConfig {
    pub k_triples: usize,
    /// Keep only the most recent turns whose rendering fits in this many
    /// characters. The current turn is always kept.
    pub max_history_chars: Option<usize>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            k_triples: DEFAULT_K_TRIPLES,
            max_history_chars: None,
        }
    }
}

fn role_tag(speaker: Speaker) -> &'static str {
    match speaker {
        Speaker::Patient => grammar::PATIENT_TAG,
        Speaker::Doctor => grammar::DOCTOR_TAG,
    }
}

fn render_turn(speaker: Speaker, text: &str) -> String {
    format!("{} {}", role_tag(speaker), escape(text))
}

fn check_patient_turn(dialogue: &Dialogue, t: usize) -> Result<(), Error> {
    match dialogue.turns.get(t) {
        Some(turn) if turn.speaker == Speaker::Patient => Ok(()),
        Some(_) => Err(Error::NotPatientTurn {
            dialogue: dialogue.id.clone(),
            turn: t,
        }),
        None => Err(Error::TurnOutOfRange {
            dialogue: dialogue.id.clone(),
            turn: t,
        }),
    }
}

/// Role-tagged turns `0..=t`; `t` must index a patient turn.
pub fn serialize_history(dialogue: &Dialogue, t: usize) -> Result<String, Error> {
    serialize_history_within(dialogue, t, None)
}

pub fn serialize_history_within(
    dialogue: &Dialogue,
    t: usize,
    max_chars: Option<usize>,
) -> Result<String, Error> {
    check_patient_turn(dialogue, t)?;
    let rendered: Vec<String> = dialogue.turns[..=t]
        .iter()
        .map(|turn| render_turn(turn.speaker, &turn.text))
        .collect();
    let mut start = 0;
    if let Some(max) = max_chars {
        let mut used = rendered[t].chars().count();
        start = t;
        while start > 0 {
            let next = rendered[start - 1].chars().count() + 1;
            if used + next > max {
                break;
            }
            used += next;
            start -= 1;
        }
    }
    Ok(rendered[start..].join(" "))
}

fn section(tag: &str, body: &str) -> String {
    if body.is_empty() {
        String::from(tag)
    } else {
        format!("{} {}", tag, body)
    }
}

/// DPL input: history followed by the NLU and KB sections.
pub fn dpl_input(history: &str, intents: &[SemanticLabel], triples: &[KnowledgeTriple]) -> String {
    format!(
        "{} {} {}",
        history,
        section(grammar::NLU_TAG, &serialize_labels(intents)),
        section(grammar::KB_TAG, &serialize_triples(triples))
    )
}

/// NLG input: the DPL input followed by the DPL section.
pub fn nlg_input(dpl_input: &str, actions: &[SemanticLabel]) -> String {
    format!(
        "{} {}",
        dpl_input,
        section(grammar::DPL_TAG, &serialize_labels(actions))
    )
}

/// Appends the target tag to a conditional input.
pub fn causal_prefix(task: Task, conditional_input: &str) -> String {
    format!("{} {} ", conditional_input, task.target_tag())
}

pub fn format_input(task: Task, format: SampleFormat, conditional_input: &str) -> String {
    match format {
        SampleFormat::Conditional => String::from(conditional_input),
        SampleFormat::Causal => causal_prefix(task, conditional_input),
    }
}

/// Gold pieces of one patient turn and the doctor reply that follows it.
#[derive(Debug, Clone)]
pub struct GoldTurn<'a> {
    pub dialogue: &'a Dialogue,
    pub turn: usize,
    pub intents: &'a [SemanticLabel],
    /// `None` when no doctor turn follows.
    pub reply: Option<(&'a [SemanticLabel], &'a str)>,
}

impl<'a> GoldTurn<'a> {
    pub fn new(dialogue: &'a Dialogue, turn: usize) -> Result<Self, Error> {
        check_patient_turn(dialogue, turn)?;
        if !dialogue.is_labeled() {
            return Err(Error::MissingGold {
                dialogue: dialogue.id.clone(),
                turn,
            });
        }
        let reply = dialogue
            .turns
            .get(turn + 1)
            .filter(|r| r.speaker == Speaker::Doctor)
            .map(|r| (r.labels.as_slice(), r.text.as_str()));
        Ok(GoldTurn {
            dialogue,
            turn,
            intents: &dialogue.turns[turn].labels,
            reply,
        })
    }

    fn reply_or_err(&self) -> Result<(&'a [SemanticLabel], &'a str), Error> {
        self.reply.ok_or_else(|| Error::MissingGold {
            dialogue: self.dialogue.id.clone(),
            turn: self.turn + 1,
        })
    }
}

/// Patient turns that are followed by a doctor reply.
pub fn respondable_turns(dialogue: &Dialogue) -> Vec<usize> {
    dialogue
        .patient_turns()
        .filter(|&t| {
            dialogue
                .turns
                .get(t + 1)
                .is_some_and(|r| r.speaker == Speaker::Doctor)
        })
        .collect()
}

/// Turns that yield a sample for `task`: every patient turn for NLU, only
/// answered ones for DPL and NLG.
pub fn sample_turns(dialogue: &Dialogue, task: Task) -> Vec<usize> {
    match task {
        Task::Nlu => dialogue.patient_turns().collect(),
        Task::Dpl | Task::Nlg => respondable_turns(dialogue),
    }
}

/// Builds the gold sample for `task` at patient turn `t`.
pub fn build_sample(
    dialogue: &Dialogue,
    t: usize,
    kb: &KnowledgeBase,
    task: Task,
    format: SampleFormat,
    cfg: &SampleConfig,
) -> Result<TaskSample, Error> {
    let gold = GoldTurn::new(dialogue, t)?;
    let history = serialize_history_within(dialogue, t, cfg.max_history_chars)?;
    let (conditional, target) = match task {
        Task::Nlu => (history, serialize_labels(gold.intents)),
        Task::Dpl | Task::Nlg => {
            let (actions, response) = gold.reply_or_err()?;
            let triples = kb.retrieve(gold.intents, cfg.k_triples);
            let dpl = dpl_input(&history, gold.intents, &triples);
            if task == Task::Dpl {
                (dpl, serialize_labels(actions))
            } else {
                (nlg_input(&dpl, actions), escape(response))
            }
        }
    };
    Ok(TaskSample {
        task,
        dialogue_id: dialogue.id.clone(),
        turn_index: t,
        format,
        input_seq: format_input(task, format, &conditional),
        target_seq: target,
    })
}

/// All samples of `task` over `dialogues`, in dialogue then turn order.
pub fn build_training_set<'a>(
    dialogues: impl IntoIterator<Item = &'a Dialogue>,
    kb: &KnowledgeBase,
    task: Task,
    format: SampleFormat,
    cfg: &SampleConfig,
) -> Result<Vec<TaskSample>, Error> {
    let mut out = Vec::new();
    for d in dialogues {
        out.extend(dialogue_samples(d, kb, task, format, cfg)?);
    }
    Ok(out)
}

pub fn dialogue_samples(
    dialogue: &Dialogue,
    kb: &KnowledgeBase,
    task: Task,
    format: SampleFormat,
    cfg: &SampleConfig,
) -> Result<Vec<TaskSample>, Error> {
    sample_turns(dialogue, task)
        .into_iter()
        .map(|t| build_sample(dialogue, t, kb, task, format, cfg))
        .collect()
}
