//! Joint and oracle evaluation runs against a generation backend.
//!
//! Stages run batched across the whole corpus: every NLU input first, then
//! the DPL inputs built from their parses, then NLG.

use std::io::Write;

use medforge_core::eval::{evaluate_task, EvalReport};
use medforge_core::grammar::{escape, parse_labels, serialize_labels};
use medforge_core::sample::{dpl_input, format_input, nlg_input, serialize_history_within, GoldTurn};
use medforge_core::{Corpus, KnowledgeBase, LabelKind, SemanticLabel, Task, TaskSample};
use serde::{Deserialize, Serialize};

use crate::backend::{generate, Backend};
use crate::config::PipelineConfig;
use crate::error::{ForgeError, Result};

/// One generate call for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub task: Task,
    pub input: String,
    pub output: String,
    /// Unparseable segments in `output` (NLU and DPL only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub malformed: Option<usize>,
    /// Sequence handed to the next stage, when it is the gold one rather
    /// than the parsed output.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutcome {
    pub transcript: Vec<TranscriptRecord>,
    pub reports: Vec<EvalReport>,
}

impl PipelineOutcome {
    pub fn report(&self, task: Task) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.task == task)
    }
}

struct TurnState<'a> {
    dialogue: usize,
    gold: GoldTurn<'a>,
    history: String,
    intents: Vec<SemanticLabel>,
    dpl_conditional: Option<String>,
    actions: Vec<SemanticLabel>,
}

fn stage_order(task: Task) -> u8 {
    match task {
        Task::Nlu => 0,
        Task::Dpl => 1,
        Task::Nlg => 2,
    }
}

fn write_transcript(out: Option<&mut dyn Write>, records: &mut [(usize, TranscriptRecord)]) -> Result<()> {
    records.sort_by_key(|(d, r)| (*d, r.turn_index, stage_order(r.task)));
    if let Some(w) = out {
        let io = |e: std::io::Error| ForgeError::io("transcript", e);
        for (_, r) in records.iter() {
            serde_json::to_writer(&mut *w, r).map_err(|e| io(e.into()))?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    Ok(())
}

/// Runs NLU, then DPL, then NLG (up to `cfg.until`) over every patient turn
/// and scores each stage against the corpus gold labels.
///
/// The transcript is written to `transcript` in (dialogue, turn, stage)
/// order. When the backend fails, the records of the stages that finished
/// are still written before the error is returned.
pub fn run_pipeline<B: Backend + ?Sized>(
    corpus: &Corpus,
    kb: &KnowledgeBase,
    cfg: &PipelineConfig,
    backend: &B,
    transcript: Option<&mut dyn Write>,
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let mut turns: Vec<TurnState> = Vec::new();
    for (di, d) in corpus.dialogues.iter().enumerate() {
        for t in d.patient_turns() {
            turns.push(TurnState {
                dialogue: di,
                gold: GoldTurn::new(d, t)?,
                history: serialize_history_within(d, t, cfg.max_history_chars)?,
                intents: Vec::new(),
                dpl_conditional: None,
                actions: Vec::new(),
            });
        }
    }
    backend.health()?;

    let mut records: Vec<(usize, TranscriptRecord)> = Vec::new();
    let mut reports = Vec::new();
    let batching = cfg.batching();
    let mut transcript = transcript;

    for task in [Task::Nlu, Task::Dpl, Task::Nlg] {
        if stage_order(task) > stage_order(cfg.until) {
            break;
        }
        let active: Vec<usize> = (0..turns.len())
            .filter(|&i| task == Task::Nlu || turns[i].gold.reply.is_some())
            .collect();
        let mut inputs = Vec::with_capacity(active.len());
        let mut gold = Vec::with_capacity(active.len());
        for &i in &active {
            let s = &mut turns[i];
            let (conditional, target) = match task {
                Task::Nlu => (s.history.clone(), serialize_labels(s.gold.intents)),
                Task::Dpl => {
                    let triples = kb.retrieve(&s.intents, cfg.k_triples);
                    let c = dpl_input(&s.history, &s.intents, &triples);
                    s.dpl_conditional = Some(c.clone());
                    (c, serialize_labels(s.gold.reply.map(|r| r.0).unwrap_or_default()))
                }
                Task::Nlg => {
                    let c = nlg_input(s.dpl_conditional.as_deref().unwrap_or_default(), &s.actions);
                    (c, escape(s.gold.reply.map(|r| r.1).unwrap_or_default()))
                }
            };
            let input = format_input(task, cfg.format, &conditional);
            gold.push(TaskSample {
                task,
                dialogue_id: s.gold.dialogue.id.clone(),
                turn_index: s.gold.turn,
                format: cfg.format,
                input_seq: input.clone(),
                target_seq: target,
            });
            inputs.push(input);
        }

        let outputs = match generate(backend, task, &inputs, &batching) {
            Ok(o) => o,
            Err(e) => {
                write_transcript(transcript.take(), &mut records)?;
                return Err(e.into());
            }
        };

        for ((&i, input), output) in active.iter().zip(inputs).zip(&outputs) {
            let s = &mut turns[i];
            let mut record = TranscriptRecord {
                dialogue_id: s.gold.dialogue.id.clone(),
                turn_index: s.gold.turn,
                task,
                input,
                output: output.clone(),
                malformed: None,
                oracle: None,
            };
            let downstream = |kind: LabelKind, gold: &[SemanticLabel], oracle: bool, rec: &mut TranscriptRecord| {
                let (parsed, bad) = parse_labels(output, kind);
                rec.malformed = Some(bad);
                if oracle {
                    rec.oracle = Some(serialize_labels(gold));
                    gold.to_vec()
                } else {
                    parsed
                }
            };
            match task {
                Task::Nlu => s.intents = downstream(LabelKind::Intent, s.gold.intents, cfg.oracle_nlu, &mut record),
                Task::Dpl => {
                    let gold_actions = s.gold.reply.map(|r| r.0).unwrap_or_default();
                    s.actions = downstream(LabelKind::Action, gold_actions, cfg.oracle_dpl, &mut record)
                }
                Task::Nlg => {}
            }
            records.push((s.dialogue, record));
        }
        reports.push(evaluate_task(&gold, &outputs, task)?);
    }

    write_transcript(transcript, &mut records)?;
    Ok(PipelineOutcome {
        transcript: records.into_iter().map(|(_, r)| r).collect(),
        reports,
    })
}
